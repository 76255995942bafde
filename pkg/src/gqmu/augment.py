"""Spectral augmentation: lift a P-band image into tau*P virtual bands.

The split mimics a prism: each band is divided into ``tau`` narrower
virtual bands whose sum reproduces the original band exactly, with the
per-band deviation taken as a quarter of the difference between adjacent
bands so the virtual spectrum stays continuous.  A pluggable denoiser
then refines the split image before it is used as a virtual
hyperspectral input.
"""

from dataclasses import dataclass

import numpy as np
from scipy.ndimage import correlate

from .errors import ConfigError, ContractError, DegenerateDataError, InputError
from .tensor import as_tensor3, mode3_mul, project_nonneg

__all__ = [
    "determine_tau",
    "build_srf",
    "bsp_split",
    "BspResult",
    "Denoiser",
    "identity_denoiser",
    "gaussian_denoiser",
    "make_denoiser",
    "refine_virtual_hsi",
    "augment",
]


def determine_tau(p, n):
    """Smallest positive integer tau with tau*P >= N."""
    if p < 1 or n < 1:
        raise InputError(f"band and source counts must be >= 1, got P={p}, N={n}")
    return max(1, -(-n // p))


def build_srf(p, tau):
    """Virtual spectral response matrix: identity blocks of tau ones per band."""
    if p < 1 or tau < 1:
        raise InputError(f"need P >= 1 and tau >= 1, got P={p}, tau={tau}")
    return np.kron(np.eye(p), np.ones((1, tau)))


@dataclass
class BspResult:
    """Band-split output: split image, its response matrix and the factor."""

    z_tilde: np.ndarray  # (L1, L2, tau*P)
    srf: np.ndarray      # (P, tau*P), rows sum to tau, columns to 1
    tau: int


def _split_in_two(z):
    """One halving pass: band q becomes 0.5*(z_q - h_q), 0.5*(z_q + h_q)."""
    p = z.shape[2]
    h = np.empty_like(z)
    h[:, :, : p - 1] = 0.25 * (z[:, :, 1:] - z[:, :, : p - 1])
    h[:, :, p - 1] = 0.25 * (z[:, :, p - 1] - z[:, :, p - 2])
    out = np.empty(z.shape[:2] + (2 * p,), dtype=np.float64)
    out[:, :, 0::2] = 0.5 * (z - h)
    out[:, :, 1::2] = 0.5 * (z + h)
    return out


def bsp_split(msi, tau=2, clip=True):
    """Split each band of ``msi`` into ``tau`` virtual bands.

    Supports tau=2 natively and tau=4 by halving twice.  Negative split
    values are clipped to zero unless ``clip=False`` (the pre-clip image
    reconstructs the input exactly under the returned response matrix).
    """
    msi = as_tensor3(msi)
    p = msi.shape[2]
    if p < 2:
        raise InputError(f"band splitting needs at least 2 bands, got {p}")
    if tau not in (2, 4):
        raise ConfigError(f"unsupported split factor tau={tau} (supported: 2, 4)")
    z = _split_in_two(msi)
    if tau == 4:
        z = _split_in_two(z)
    if clip:
        z = project_nonneg(z)
    return BspResult(z_tilde=z, srf=build_srf(p, tau), tau=tau)


@dataclass(frozen=True)
class Denoiser:
    """Named shape-preserving image smoother used as the refinement step."""

    name: str
    fn: object

    def __call__(self, t):
        return self.fn(t)


def identity_denoiser():
    return Denoiser("identity", lambda t: t)


def gaussian_denoiser(sigma=0.5):
    """Per-band 5x5 truncated Gaussian blur with replicated borders."""
    if sigma <= 0:
        raise InputError(f"gaussian sigma must be positive, got {sigma}")
    ax = np.arange(-2.0, 3.0)
    kern = np.exp(-(ax[:, None] ** 2 + ax[None, :] ** 2) / (2.0 * sigma**2))
    kern /= kern.sum()

    def blur(t):
        t = as_tensor3(t)
        out = np.empty_like(t)
        for k in range(t.shape[2]):
            out[:, :, k] = correlate(t[:, :, k], kern, mode="nearest")
        return out

    return Denoiser(f"gaussian:{sigma:g}", blur)


def make_denoiser(spec):
    """Build a denoiser from a spec string: ``identity`` or ``gaussian:SIGMA``."""
    if isinstance(spec, Denoiser):
        return spec
    name, _, arg = str(spec).partition(":")
    if name == "identity":
        return identity_denoiser()
    if name == "gaussian":
        sigma = float(arg) if arg else 0.5
        return gaussian_denoiser(sigma)
    raise ConfigError(f"unknown denoiser {spec!r} (use identity or gaussian:SIGMA)")


def refine_virtual_hsi(z_tilde, denoiser):
    """Apply the refinement denoiser and clip to the non-negative orthant."""
    z_tilde = as_tensor3(z_tilde)
    out = denoiser(z_tilde)
    out = np.asarray(out, dtype=np.float64)
    if out.shape != z_tilde.shape:
        raise ContractError(
            f"denoiser changed the image shape: {z_tilde.shape} -> {out.shape}"
        )
    if not np.all(np.isfinite(out)):
        raise ContractError("denoiser produced non-finite values")
    return project_nonneg(out)


def augment(msi, n_sources=None, tau=None, denoiser="gaussian:0.5"):
    """Full augmentation stage: choose tau, split, refine.

    Either ``tau`` or ``n_sources`` must be given; with ``n_sources`` the
    factor is the smallest one making the virtual band count reach it.
    Returns ``(z_h, srf, tau)``; tau=1 passes the image through with an
    identity response.
    """
    msi = as_tensor3(msi)
    p = msi.shape[2]
    if tau is None:
        if n_sources is None:
            raise ConfigError("augment needs either tau or n_sources")
        tau = determine_tau(p, n_sources)
    if tau == 1:
        return project_nonneg(msi), build_srf(p, 1), 1
    if tau not in (2, 4):
        raise ConfigError(
            f"unsupported split factor tau={tau} for P={p} bands "
            f"(supported: 1, 2, 4)"
        )
    den = make_denoiser(denoiser)
    result = bsp_split(msi, tau=tau)
    z_h = refine_virtual_hsi(result.z_tilde, den)
    if n_sources is not None and z_h.shape[2] < n_sources:
        raise DegenerateDataError(
            f"virtual band count {z_h.shape[2]} still below N={n_sources}"
        )
    return z_h, result.srf, tau
