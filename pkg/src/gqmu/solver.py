"""Alternating solver: augmented data fit + shrinkage + prior regularizers.

One run executes: spectral augmentation, extreme-pixel initialization,
abundance prior extraction, then a fixed number of outer rounds
alternating an ADMM solve for the abundance tensor with a closed-form
regularized least-squares update of the virtual endmembers.  The final
observed-domain endmembers are the virtual ones collapsed through the
split response matrix.
"""

import time
from dataclasses import dataclass, field

import numpy as np
from scipy.optimize import nnls as _scipy_nnls

from .augment import augment, make_denoiser
from .errors import ConfigError, DegenerateDataError, InputError
from .geometry import (
    MV_VARIANTS,
    WssContext,
    mv_quadratic_terms,
    simplex_center,
    sparsity_weights,
    wss_value,
)
from .qdip import QdipConfig, ls_prior, qdip_train
from .tensor import (
    as_mat,
    as_tensor3,
    fold3,
    kron,
    mode3_matricize,
    project_nonneg,
    soft_threshold,
    solve_spd,
)

__all__ = [
    "SolverConfig",
    "UnmixResult",
    "spa_init",
    "init_endmembers",
    "nnls_abundances",
    "admm_update_s",
    "admm_solve",
    "update_a",
    "gqmu_core",
    "gqmu_run",
]

_RANK_TOL = 1e-9  # residual norm below this fraction of the data scale = collapse


@dataclass
class SolverConfig:
    """All solver knobs.

    ``lambda3_dag``/``lambda4_dag_init`` are the size-normalized weights;
    the effective values multiply them by ``scale`` (tuned for 256x256
    inputs by default, rescale for other image sizes).  ``lambda4_dag``
    additionally grows by ``lambda4_growth`` once per outer round.
    """

    n_sources: int
    lambda1: float = 1e-3
    lambda2: float = 1e-2
    lambda3_dag: float = 1e-1
    lambda4_dag_init: float = 1e-2
    lambda4_growth: float = 1.2
    scale: float = 1e4
    mu: float = 1.0
    outer_iters: int = 5
    admm_iters: int = 20
    prior: str = "ls"
    denoiser: str = "gaussian:0.5"
    mv_variant: str = "wss"
    seed: int = 0
    qdip_iters: int = 200
    qdip_lr: float = 5e-2
    qdip_seed: int = None
    stop_tol: float = None
    recompute_weights: bool = False

    def validate(self):
        if self.n_sources < 1:
            raise ConfigError(f"need at least one source, got {self.n_sources}")
        for name in ("lambda1", "lambda2", "lambda3_dag", "lambda4_dag_init"):
            if getattr(self, name) < 0:
                raise ConfigError(f"{name} must be >= 0")
        if self.mu <= 0:
            raise ConfigError("mu must be positive")
        if self.outer_iters < 1 or self.admm_iters < 1:
            raise ConfigError("iteration counts must be >= 1")
        if self.prior not in ("ls", "qdip"):
            raise ConfigError(f"unknown prior {self.prior!r} (use ls or qdip)")
        if str(self.mv_variant).lower() not in MV_VARIANTS:
            raise ConfigError(
                f"unknown mv variant {self.mv_variant!r} "
                f"(supported: {', '.join(MV_VARIANTS)})"
            )
        make_denoiser(self.denoiser)
        return self


@dataclass
class UnmixResult:
    """Solver output: endmembers, abundances and per-iteration diagnostics."""

    b_star: np.ndarray  # (P, N) observed-domain endmembers, = srf @ a_star
    a_star: np.ndarray  # (M, N) virtual endmembers
    s_star: np.ndarray  # (L1, L2, N) abundances
    z_h: np.ndarray     # (L1, L2, M) refined virtual image
    srf: np.ndarray     # (P, M) split response matrix
    diagnostics: dict = field(default_factory=dict)


def _pixel_matrix(z_h):
    """Bands x pixels view with linear pixel index l1*L2 + l2."""
    z_h = as_tensor3(z_h)
    l1, l2, m = z_h.shape
    return z_h.reshape(l1 * l2, m).T.copy()


def spa_init(z_h, n, strict=True):
    """Successive-projection pure-pixel search.

    Repeatedly picks the pixel spectrum with the largest norm in the
    orthogonal complement of the already-picked spectra (ties broken by
    the lowest linear pixel index).  In strict mode a rank collapse
    before ``n`` picks raises; otherwise the picks so far are returned.
    Returns ``(a0, picked_indices, collapsed)``.
    """
    x = _pixel_matrix(z_h)
    m, n_pix = x.shape
    if strict and m < n:
        raise InputError(f"need at least N={n} bands for N picks, got {m}")
    if n_pix < n:
        raise InputError(f"need at least N={n} pixels, got {n_pix}")
    resid = x.copy()
    scale = float(np.max(np.einsum("ml,ml->l", x, x)))
    if scale == 0.0:
        raise DegenerateDataError("all pixel spectra are zero")
    picked = []
    for _ in range(n):
        norms = np.einsum("ml,ml->l", resid, resid)
        best = int(np.argmax(norms))
        if norms[best] <= (_RANK_TOL**2) * scale:
            if strict:
                raise DegenerateDataError(
                    f"pixel spectra span collapsed after {len(picked)} of {n} picks"
                )
            break
        picked.append(best)
        u = resid[:, best] / np.sqrt(norms[best])
        resid -= np.outer(u, u @ resid)
    a0 = x[:, picked]
    return a0, picked, len(picked) < n


def _hull_distances(x, endmembers):
    """Distance of every pixel spectrum to the convex hull of the picked ones.

    The simplex-constrained least squares is solved per pixel by
    non-negative least squares on a system augmented with a heavy
    sum-to-one row.
    """
    m, n_pix = x.shape
    k = endmembers.shape[1]
    rho = 1e3 * max(1.0, float(np.max(np.abs(endmembers))))
    design = np.vstack([endmembers, rho * np.ones((1, k))])
    dists = np.empty(n_pix)
    for p in range(n_pix):
        target = np.concatenate([x[:, p], [rho]])
        theta, _ = _scipy_nnls(design, target)
        dists[p] = float(np.sum((x[:, p] - endmembers @ theta) ** 2))
    return dists


def init_endmembers(z_h, n):
    """Default initializer: successive projection, completed geometrically.

    Runs the pure-pixel search; if the spectra span collapses before
    ``n`` picks (virtual bands are linear in the observed ones, so their
    rank cannot exceed the observed band count) the remaining columns are
    taken as the pixels farthest from the convex hull of the current
    picks, which recovers the leftover simplex vertices the projection
    cannot see.  Returns ``(a0, picked_indices, method)``.
    """
    a0, picked, collapsed = spa_init(z_h, n, strict=False)
    if not collapsed:
        return a0, picked, "spa"
    x = _pixel_matrix(z_h)
    picked = list(picked)
    if not picked:
        raise DegenerateDataError("all pixel spectra are zero")
    while len(picked) < n:
        dists = _hull_distances(x, x[:, picked])
        dists[picked] = -1.0
        best = int(np.argmax(dists))
        if dists[best] <= 0.0:
            raise DegenerateDataError(
                f"could not find {n} distinct extreme pixels "
                f"(stuck after {len(picked)})"
            )
        picked.append(best)
    return x[:, picked], picked, "spa+hull"


def nnls_abundances(z_h, a0, n_iter=500, return_objectives=False):
    """Per-pixel non-negative least squares by projected gradient.

    Starts every pixel at the uniform simplex point and runs ``n_iter``
    steps of size 1/||A0^T A0||_2; the residual never increases.
    """
    z_h = as_tensor3(z_h)
    a0 = as_mat(a0)
    l1, l2, m = z_h.shape
    n = a0.shape[1]
    x3 = mode3_matricize(z_h)
    gram = a0.T @ a0
    lip = float(np.linalg.eigvalsh(gram)[-1])
    if lip <= 0:
        raise DegenerateDataError("initial endmembers are all zero")
    step = 1.0 / lip
    atx = a0.T @ x3
    s3 = np.full((n, l1 * l2), 1.0 / n)
    objectives = []
    for _ in range(n_iter):
        if return_objectives:
            resid = a0 @ s3 - x3
            objectives.append(0.5 * float(np.sum(resid**2)))
        s3 = np.maximum(s3 - step * (gram @ s3 - atx), 0.0)
    if return_objectives:
        resid = a0 @ s3 - x3
        objectives.append(0.5 * float(np.sum(resid**2)))
        return fold3(s3, l1, l2), objectives
    return fold3(s3, l1, l2)


def init_abundances(z_h, a0, picked, n_iter=500):
    """Initializer abundances: projected gradient plus vertex pinning.

    Runs :func:`nnls_abundances`, then overwrites the abundances of the
    pixels the endmember search picked with their unit vectors; column j
    of ``a0`` is pixel ``picked[j]``'s own spectrum, so that assignment
    is exact by construction and spares the gradient iteration from
    crawling toward the simplex vertices on ill-conditioned spectra.
    """
    s0 = nnls_abundances(z_h, a0, n_iter=n_iter)
    l2 = z_h.shape[1]
    for j, pix in enumerate(picked):
        l1_idx, l2_idx = divmod(int(pix), l2)
        s0[l1_idx, l2_idx, :] = 0.0
        s0[l1_idx, l2_idx, j] = 1.0
    return s0


def admm_update_s(a, d, z_m3, z_h3, s_qu3, y3, v3, lam2, mu, project=True):
    """Closed-form abundance update of the inner ADMM (matricized).

    Solves the strictly convex quadratic in S (non-negativity ignored)
    and projects back onto the non-negative orthant unless ``project``
    is disabled (tests check stationarity of the raw solution).
    """
    a = as_mat(a)
    da = d @ a
    n = a.shape[1]
    r_mat = da.T @ da + a.T @ a
    p_mat = da.T @ z_m3 + a.T @ z_h3 + lam2 * s_qu3
    rhs = p_mat + mu * (y3 - v3)
    s3 = solve_spd(r_mat + (lam2 + mu) * np.eye(n), rhs)
    return np.maximum(s3, 0.0) if project else s3


def admm_solve(a, d, z_m3, z_h3, s_qu3, s_init3, lam1, lam2, mu, n_iters):
    """Inner ADMM: quadratic S-solve, shrinkage on the sparse copy, dual step.

    Returns ``(s3, y3, v3, primal_trace)`` where the trace holds
    ||Y - S||_F after each round and ``s3`` is the returned iterate.
    """
    y3 = s_init3.copy()
    v3 = np.zeros_like(s_init3)
    s3 = s_init3
    primal = []
    for _ in range(n_iters):
        s3 = admm_update_s(a, d, z_m3, z_h3, s_qu3, y3, v3, lam2, mu)
        y3 = soft_threshold(s3 + v3, lam1 / mu)
        v3 = v3 - (y3 - s3)
        primal.append(float(np.linalg.norm(y3 - s3)))
    return s3, y3, v3, primal


def update_a(s3, z_m3, z_h3, d, ctx, variant="wss", project=True):
    """Regularized least-squares endmember update (dense Kronecker solve).

    Assembles the normal equations of the vectorized quadratic
    subproblem (data fit in both domains + shrink variant + proximal
    anchor) and solves them directly; systems stay small because only
    bands x sources unknowns are involved.
    """
    s3 = as_mat(s3)
    d = as_mat(d)
    m = d.shape[1]
    n = s3.shape[0]
    sst = s3 @ s3.T
    eye_m = np.eye(m)
    k_mv, r_mv = mv_quadratic_terms(variant, n, c=ctx.c, w=ctx.w)
    j1 = (
        kron(sst, d.T @ d)
        + kron(sst, eye_m)
        + ctx.lam3 * kron(k_mv, eye_m)
        + ctx.lam4 * np.eye(m * n)
    )
    rhs_mat = d.T @ z_m3 @ s3.T + z_h3 @ s3.T + ctx.lam4 * ctx.a_prev
    if r_mv is not None:
        rhs_mat = rhs_mat + ctx.lam3 * r_mv
    a = solve_spd(j1, rhs_mat.reshape(m * n, order="F"))
    a = a.reshape((m, n), order="F")
    return np.maximum(a, 0.0) if project else a


def _objective(a, s3, z_m3, z_h3, d, s_qu3, cfg, ctx):
    df = 0.5 * float(np.sum((z_m3 - d @ a @ s3) ** 2)) + 0.5 * float(
        np.sum((z_h3 - a @ s3) ** 2)
    )
    reg = cfg.lambda1 * float(np.sum(np.abs(s3)))
    reg += 0.5 * cfg.lambda2 * float(np.sum((s3 - s_qu3) ** 2))
    return df + reg + wss_value(a, ctx)


def gqmu_core(z_m, z_h, d, a0, s0, s_qu, cfg):
    """Outer alternating loop, starting from explicit initial state.

    Split out of :func:`gqmu_run` so tests can drive it with controlled
    initializations; permuting the columns of ``a0`` (and the channels of
    ``s0``/``s_qu`` consistently) permutes the outputs identically.
    """
    z_m = as_tensor3(z_m)
    l1, l2, _ = z_m.shape
    z_m3 = mode3_matricize(z_m)
    z_h3 = mode3_matricize(z_h)
    s_qu3 = mode3_matricize(s_qu)
    w = sparsity_weights(s0)
    c = simplex_center(a0)
    lam3 = cfg.lambda3_dag * cfg.scale
    lam4_dag = cfg.lambda4_dag_init
    a = as_mat(a0)
    s3 = mode3_matricize(s0)
    diag = {
        "objective": [],
        "primal_residual": [],
        "lambda4_dag": [],
        "weights": w.tolist(),
    }
    ctx0 = WssContext(w=w, c=c, lam3=lam3, lam4=lam4_dag * cfg.scale, a_prev=a)
    diag["objective"].append(_objective(a, s3, z_m3, z_h3, d, s_qu3, cfg, ctx0))
    for _ in range(cfg.outer_iters):
        s_prev3 = s3
        s3, y3, v3, primal = admm_solve(
            a, d, z_m3, z_h3, s_qu3, s3, cfg.lambda1, cfg.lambda2, cfg.mu,
            cfg.admm_iters,
        )
        if cfg.recompute_weights:
            w = sparsity_weights(fold3(s3, l1, l2))
        lam4_dag *= cfg.lambda4_growth
        ctx = WssContext(w=w, c=c, lam3=lam3, lam4=lam4_dag * cfg.scale, a_prev=a)
        a = update_a(s3, z_m3, z_h3, d, ctx, variant=cfg.mv_variant)
        diag["objective"].append(_objective(a, s3, z_m3, z_h3, d, s_qu3, cfg, ctx))
        diag["primal_residual"].append(primal)
        diag["lambda4_dag"].append(lam4_dag)
        if cfg.stop_tol is not None:
            denom = max(float(np.linalg.norm(s_prev3)), 1e-30)
            if float(np.linalg.norm(s3 - s_prev3)) / denom <= cfg.stop_tol:
                break
    s_star = fold3(s3, l1, l2)
    diag["final_y_nonzeros"] = int(np.count_nonzero(y3))
    return a, s_star, diag


def gqmu_run(z_m, cfg):
    """Full pipeline on an observed multispectral image.

    Augment, initialize, extract the abundance prior, run the outer
    loop, and collapse the virtual endmembers back through the split
    response.  Deterministic for a fixed config.
    """
    cfg.validate()
    z_m = as_tensor3(z_m)
    l1, l2, p = z_m.shape
    n = cfg.n_sources
    if l1 * l2 < n:
        raise ConfigError(f"image has {l1 * l2} pixels but N={n} sources requested")
    if p < 2:
        raise ConfigError(f"need at least 2 observed bands, got {p}")
    t_start = time.perf_counter()
    z_h, d, tau = augment(z_m, n_sources=n, denoiser=cfg.denoiser)
    a0, picked, init_method = init_endmembers(z_h, n)
    s0 = init_abundances(z_h, a0, picked)
    qdip_losses = None
    if cfg.prior == "qdip":
        qcfg = QdipConfig(
            iterations=cfg.qdip_iters,
            lr=cfg.qdip_lr,
            seed=cfg.seed if cfg.qdip_seed is None else cfg.qdip_seed,
        )
        s_qu, qdip_losses = qdip_train(z_h, a0, qcfg)
    else:
        s_qu = ls_prior(s0)
    a, s_star, diag = gqmu_core(z_m, z_h, d, a0, s0, s_qu, cfg)
    diag.update(
        {
            "prior": cfg.prior,
            "mv_variant": str(cfg.mv_variant).lower(),
            "tau": tau,
            "init_method": init_method,
            "init_pixels": list(map(int, picked)),
            "runtime_sec": time.perf_counter() - t_start,
        }
    )
    if qdip_losses is not None:
        diag["qdip_losses"] = qdip_losses
    return UnmixResult(
        b_star=d @ a,
        a_star=a,
        s_star=s_star,
        z_h=z_h,
        srf=d,
        diagnostics=diag,
    )
