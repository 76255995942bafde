"""Command-line interface.

Subcommands: ``augment`` (band-split an image), ``unmix`` (full solver),
``protocol`` (synthetic or supplied-reference evaluation), ``metrics``
(score two results).  Exit codes: 0 success, 2 usage error, 1 runtime
error.  ``GQMU_THREADS`` caps the linear-algebra thread pools (set
before any compute module is imported).
"""

import argparse
import json
import os
import sys

__all__ = ["main", "console_main"]


def _cap_threads():
    cap = os.environ.get("GQMU_THREADS")
    if not cap:
        return
    for var in ("OMP_NUM_THREADS", "OPENBLAS_NUM_THREADS", "MKL_NUM_THREADS"):
        os.environ.setdefault(var, cap)


def _build_parser():
    parser = argparse.ArgumentParser(
        prog="gqmu",
        description="Underdetermined multispectral unmixing via spectral augmentation",
    )
    sub = parser.add_subparsers(dest="command", required=True)

    p_aug = sub.add_parser("augment", help="split an image into virtual bands")
    p_aug.add_argument("--input", required=True, help="input tensor (.btf)")
    p_aug.add_argument("--out", required=True, help="output virtual tensor (.btf)")
    p_aug.add_argument("--srf", required=True, help="output response matrix (.csv)")
    p_aug.add_argument("--tau", default="auto", help="split factor: auto, 2 or 4")
    p_aug.add_argument(
        "--n-sources", type=int, default=None,
        help="source count used when --tau auto",
    )
    p_aug.add_argument("--denoiser", default="gaussian:0.5",
                       help="identity or gaussian:SIGMA")

    p_unmix = sub.add_parser("unmix", help="run the full unmixing pipeline")
    p_unmix.add_argument("--msi", required=True, help="observed image (.btf)")
    p_unmix.add_argument("--n-sources", type=int, required=True)
    p_unmix.add_argument("--prior", choices=("qdip", "ls"), default=None)
    p_unmix.add_argument(
        "--mv-variant", choices=("wss", "nwss", "center", "tv", "ssd"), default=None
    )
    p_unmix.add_argument("--config", default=None, help="flat key = value file")
    p_unmix.add_argument("--out-dir", required=True)
    p_unmix.add_argument("--denoiser", default=None)
    p_unmix.add_argument("--qdip-iters", type=int, default=None)
    p_unmix.add_argument("--qdip-lr", type=float, default=None)
    p_unmix.add_argument("--qdip-seed", type=int, default=None)
    p_unmix.add_argument("--seed", type=int, default=None)

    p_proto = sub.add_parser("protocol", help="evaluation protocol with ground truth")
    proto_sub = p_proto.add_subparsers(dest="mode", required=True)

    p_synth = proto_sub.add_parser("synth", help="synthetic ground truth")
    p_synth.add_argument("--l1", type=int, default=32)
    p_synth.add_argument("--l2", type=int, default=32)
    p_synth.add_argument("--p", type=int, default=4)
    p_synth.add_argument("--n", type=int, default=6)
    p_synth.add_argument("--gamma", type=float, default=1.0)
    p_synth.add_argument("--pure-pixels", action="store_true")
    p_synth.add_argument("--noise-e", type=float, default=1e-4)
    p_synth.add_argument("--residual-noise", action="store_true")
    p_synth.add_argument("--seed", type=int, default=0)
    p_synth.add_argument("--config", default=None)
    p_synth.add_argument("--prior", choices=("qdip", "ls"), default=None)
    p_synth.add_argument(
        "--mv-variant", choices=("wss", "nwss", "center", "tv", "ssd"), default=None
    )
    p_synth.add_argument("--out", required=True, help="report path (.json)")

    p_wald = proto_sub.add_parser(
        "wald", help="user-supplied reference spectra and abundances"
    )
    p_wald.add_argument("--a-ref", required=True, help="reference spectra (.csv)")
    p_wald.add_argument("--s-ref", required=True, help="reference abundances (.btf)")
    p_wald.add_argument(
        "--wavelengths", required=True,
        help="sidecar csv of band-center wavelengths in nm",
    )
    p_wald.add_argument(
        "--ranges", default=None,
        help="comma-separated LO-HI nm ranges (default: 4 visible/NIR bands)",
    )
    p_wald.add_argument("--noise-e", type=float, default=1e-4)
    p_wald.add_argument("--seed", type=int, default=0)
    p_wald.add_argument("--denoiser", default=None)
    p_wald.add_argument("--config", default=None)
    p_wald.add_argument("--prior", choices=("qdip", "ls"), default=None)
    p_wald.add_argument(
        "--mv-variant", choices=("wss", "nwss", "center", "tv", "ssd"), default=None
    )
    p_wald.add_argument("--out", required=True)

    p_metrics = sub.add_parser("metrics", help="score an estimate against a reference")
    p_metrics.add_argument("--ref-b", required=True)
    p_metrics.add_argument("--est-b", required=True)
    p_metrics.add_argument("--ref-s", required=True)
    p_metrics.add_argument("--est-s", required=True)
    p_metrics.add_argument("--out", required=True)
    return parser


_INT_KEYS = {"n_sources", "outer_iters", "admm_iters", "seed", "qdip_iters",
             "qdip_seed"}
_FLOAT_KEYS = {"lambda1", "lambda2", "lambda3_dag", "lambda4_dag_init",
               "lambda4_growth", "scale", "mu", "qdip_lr", "stop_tol"}
_STR_KEYS = {"prior", "denoiser", "mv_variant"}
_BOOL_KEYS = {"recompute_weights"}


def _apply_config_file(cfg, path):
    from .errors import ConfigError
    from .io import read_config

    for key, value in read_config(path).items():
        if key in _INT_KEYS:
            setattr(cfg, key, int(value))
        elif key in _FLOAT_KEYS:
            setattr(cfg, key, float(value))
        elif key in _STR_KEYS:
            setattr(cfg, key, value)
        elif key in _BOOL_KEYS:
            setattr(cfg, key, value.lower() in ("1", "true", "yes"))
        else:
            raise ConfigError(f"unknown config key {key!r}")
    return cfg


def _solver_config(args, n_sources):
    from .solver import SolverConfig

    cfg = SolverConfig(n_sources=n_sources)
    if getattr(args, "config", None):
        _apply_config_file(cfg, args.config)
    # explicit flags win over the config file
    for flag, key in (
        ("prior", "prior"),
        ("mv_variant", "mv_variant"),
        ("denoiser", "denoiser"),
        ("qdip_iters", "qdip_iters"),
        ("qdip_lr", "qdip_lr"),
        ("qdip_seed", "qdip_seed"),
        ("seed", "seed"),
    ):
        value = getattr(args, flag, None)
        if value is not None:
            setattr(cfg, key, value)
    cfg.n_sources = n_sources
    return cfg


def _write_json(path, payload):
    from .io import atomic_write_bytes

    blob = (json.dumps(payload, indent=2, sort_keys=True) + "\n").encode("ascii")
    atomic_write_bytes(path, blob)


def _cmd_augment(args):
    from .augment import augment
    from .errors import ConfigError
    from .io import read_btf, write_btf, write_csv_matrix

    msi = read_btf(args.input)
    if args.tau == "auto":
        if args.n_sources is None:
            raise ConfigError("--tau auto needs --n-sources")
        tau = None
    else:
        tau = int(args.tau)
    z_h, srf, used_tau = augment(
        msi, n_sources=args.n_sources, tau=tau, denoiser=args.denoiser
    )
    write_btf(args.out, z_h)
    write_csv_matrix(args.srf, srf)
    print(f"augmented {msi.shape[2]} bands -> {z_h.shape[2]} (tau={used_tau})")
    return 0


def _cmd_unmix(args):
    from .io import read_btf, write_btf, write_csv_matrix, write_heatmap

    msi = read_btf(args.msi)
    cfg = _solver_config(args, args.n_sources)
    from .solver import gqmu_run

    result = gqmu_run(msi, cfg)
    os.makedirs(args.out_dir, exist_ok=True)
    write_csv_matrix(os.path.join(args.out_dir, "B.csv"), result.b_star)
    write_csv_matrix(os.path.join(args.out_dir, "A.csv"), result.a_star)
    write_btf(os.path.join(args.out_dir, "S.btf"), result.s_star)
    for src in range(result.s_star.shape[2]):
        write_heatmap(
            os.path.join(args.out_dir, f"abundance_{src}.pgm"),
            result.s_star[:, :, src],
            scale=1.0,
        )
    diag = result.diagnostics
    lines = ["iteration,objective,primal_residual,lambda4_dag"]
    for k, lam4 in enumerate(diag["lambda4_dag"]):
        lines.append(
            f"{k + 1},{diag['objective'][k + 1]!r},"
            f"{diag['primal_residual'][k][-1]!r},{lam4!r}"
        )
    with open(os.path.join(args.out_dir, "diagnostics.csv"), "w") as fh:
        fh.write("\n".join(lines) + "\n")
    if "qdip_losses" in diag:
        loss_lines = ["step,loss"] + [
            f"{i},{loss!r}" for i, loss in enumerate(diag["qdip_losses"])
        ]
        with open(os.path.join(args.out_dir, "qdip_loss.csv"), "w") as fh:
            fh.write("\n".join(loss_lines) + "\n")
    print(
        f"unmixed {msi.shape[0]}x{msi.shape[1]}x{msi.shape[2]} with "
        f"N={cfg.n_sources} prior={diag['prior']} variant={diag['mv_variant']}"
    )
    return 0


def _cmd_protocol_synth(args):
    from .protocol import SynthConfig, run_protocol

    synth = SynthConfig(
        l1=args.l1, l2=args.l2, p=args.p, n=args.n, gamma=args.gamma,
        pure_pixels=args.pure_pixels, noise_e=args.noise_e,
        residual_noise=args.residual_noise, seed=args.seed,
    )
    overrides = {}
    if args.config:
        from .solver import SolverConfig

        cfg = SolverConfig(n_sources=args.n)
        _apply_config_file(cfg, args.config)
        overrides = {k: getattr(cfg, k) for k in cfg.__dataclass_fields__}
    for flag in ("prior", "mv_variant"):
        if getattr(args, flag) is not None:
            overrides[flag] = getattr(args, flag)
    overrides["n_sources"] = args.n
    report = run_protocol(synth, solver_overrides=overrides)
    _write_json(args.out, report)
    print(
        f"method phi_ab={report['method']['phi_ab_deg']:.3f} "
        f"baseline phi_ab={report['baseline']['phi_ab_deg']:.3f}"
    )
    return 0


def _parse_ranges(text):
    from .errors import ConfigError

    ranges = []
    for chunk in text.split(","):
        lo, _, hi = chunk.partition("-")
        try:
            ranges.append((float(lo), float(hi)))
        except ValueError as exc:
            raise ConfigError(f"bad wavelength range {chunk!r}") from exc
    return tuple(ranges)


def _cmd_protocol_wald(args):
    import time

    from .io import read_btf, read_csv_matrix
    from .protocol import (
        LANDSAT_RANGES_NM,
        metrics_report,
        naive_baseline,
        spectral_downsample,
        synthesize_msi,
    )

    a_ref = read_csv_matrix(args.a_ref)
    s_ref = read_btf(args.s_ref)
    wavelengths = read_csv_matrix(args.wavelengths).ravel()
    ranges = _parse_ranges(args.ranges) if args.ranges else LANDSAT_RANGES_NM
    b_ref = spectral_downsample(a_ref, wavelengths, ranges)
    n = b_ref.shape[1]
    z_m = synthesize_msi(s_ref, b_ref, e=args.noise_e, seed=args.seed)
    cfg = _solver_config(args, n)
    from .solver import gqmu_run

    t0 = time.perf_counter()
    result = gqmu_run(z_m, cfg)
    t_method = time.perf_counter() - t0
    t0 = time.perf_counter()
    b_base, s_base = naive_baseline(z_m, n)
    t_base = time.perf_counter() - t0
    report = {
        "method": metrics_report(b_ref, result.b_star, s_ref, result.s_star, t_method),
        "baseline": metrics_report(b_ref, b_base, s_ref, s_base, t_base),
    }
    _write_json(args.out, report)
    print(f"wald protocol done (N={n}); report at {args.out}")
    return 0


def _cmd_metrics(args):
    from .io import read_btf, read_csv_matrix
    from .protocol import metrics_report

    report = {
        "method": metrics_report(
            read_csv_matrix(args.ref_b),
            read_csv_matrix(args.est_b),
            read_btf(args.ref_s),
            read_btf(args.est_s),
        )
    }
    _write_json(args.out, report)
    print(f"phi_en={report['method']['phi_en_deg']:.3f} deg")
    return 0


def main(argv=None):
    """Parse and dispatch; returns the process exit code."""
    _cap_threads()
    parser = _build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return exc.code if exc.code is not None else 0
    from .errors import GqmuError

    handlers = {
        "augment": _cmd_augment,
        "unmix": _cmd_unmix,
        "metrics": _cmd_metrics,
    }
    try:
        if args.command == "protocol":
            if args.mode == "synth":
                return _cmd_protocol_synth(args)
            return _cmd_protocol_wald(args)
        return handlers[args.command](args)
    except (GqmuError, OSError) as exc:
        print(f"gqmu: error: {exc}", file=sys.stderr)
        return 1


def console_main():
    raise SystemExit(main())
