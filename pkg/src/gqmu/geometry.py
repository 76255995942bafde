"""Simplex-geometry regularizers for the endmember update.

The main regularizer shrinks every endmember toward the simplex center
with a per-endmember force derived from the sparsity of its abundance
channel, plus a proximal anchor to the previous iterate.  The classical
quadratic minimum-volume surrogates (center / tv / ssd and the
unweighted variant) are provided for ablation.
"""

from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigError, DegenerateDataError, InputError
from .tensor import as_mat, as_tensor3

__all__ = [
    "MV_VARIANTS",
    "WssContext",
    "sparsity_weights",
    "simplex_center",
    "wss_value",
    "wss_grad",
    "mv_value",
    "mv_grad",
    "mv_quadratic_terms",
]

MV_VARIANTS = ("wss", "nwss", "center", "tv", "ssd")


@dataclass
class WssContext:
    """Frozen inputs of the shrinkage regularizer for one solver run.

    ``w`` sums to one, ``c`` is the simplex center, ``a_prev`` the anchor
    endmember matrix; ``lam3``/``lam4`` are the effective (already scaled)
    trade-off weights.
    """

    w: np.ndarray
    c: np.ndarray
    lam3: float
    lam4: float
    a_prev: np.ndarray


def sparsity_weights(s0):
    """Softmax of normalized reciprocal channel l1-norms of the initial abundances.

    Sparser channels get strictly larger weights.  Computed once from the
    initial abundance estimate and kept fixed across iterations.
    """
    s0 = as_tensor3(s0)
    l1 = np.abs(s0).sum(axis=(0, 1))
    if np.any(l1 == 0):
        idx = int(np.argmin(l1))
        raise DegenerateDataError(
            f"abundance channel {idx} is identically zero; sparsity level undefined"
        )
    level = 1.0 / l1
    level = level / level.max()
    e = np.exp(level - level.max())
    return e / e.sum()


def simplex_center(a0):
    """Mean of the initial endmember columns (not of the data pixels)."""
    a0 = as_mat(a0)
    return a0.mean(axis=1)


def wss_value(a, ctx):
    """Weighted shrinkage-to-center plus proximal-anchor penalty."""
    a = as_mat(a)
    diff_c = a - ctx.c[:, None]
    shrink = 0.5 * ctx.lam3 * float(np.sum(ctx.w * np.sum(diff_c**2, axis=0)))
    anchor = 0.5 * ctx.lam4 * float(np.sum((a - ctx.a_prev) ** 2))
    return shrink + anchor


def wss_grad(a, ctx):
    """Gradient of :func:`wss_value` with respect to the endmember matrix."""
    a = as_mat(a)
    return ctx.lam3 * (a - ctx.c[:, None]) * ctx.w[None, :] + ctx.lam4 * (
        a - ctx.a_prev
    )


def _check_variant(variant):
    v = str(variant).lower()
    if v not in MV_VARIANTS:
        raise ConfigError(
            f"unsupported minimum-volume variant {variant!r} "
            f"(supported: {', '.join(MV_VARIANTS)})"
        )
    return v


def mv_value(a, variant, c=None, ctx=None):
    """Quadratic minimum-volume surrogate values.

    center: 0.5*||A - c 1^T||_F^2           (shrink vertices to the center)
    tv:     0.5*||A (I - 11^T/N)||_F^2      (total variation between vertices)
    ssd:    0.5*sum_{i<j} ||a_i - a_j||^2   (sum of squared distances)
    nwss:   the shrinkage regularizer with all weights set to one.
    """
    a = as_mat(a)
    n = a.shape[1]
    v = _check_variant(variant)
    if v == "wss":
        if ctx is None:
            raise InputError("wss value needs a WssContext")
        return wss_value(a, ctx)
    if v == "nwss":
        if ctx is None:
            raise InputError("nwss value needs a WssContext")
        return wss_value(a, replace(ctx, w=np.ones(n)))
    if v == "center":
        if c is None:
            raise InputError("center variant needs the simplex center")
        return 0.5 * float(np.sum((a - np.asarray(c)[:, None]) ** 2))
    if v == "tv":
        centering = np.eye(n) - np.ones((n, n)) / n
        return 0.5 * float(np.sum((a @ centering) ** 2))
    # ssd by direct pair summation; the tv identity ssd == N*tv is a test oracle
    total = 0.0
    for i in range(n - 1):
        for j in range(i + 1, n):
            total += float(np.sum((a[:, i] - a[:, j]) ** 2))
    return 0.5 * total


def mv_grad(a, variant, c=None, ctx=None):
    """Gradients of :func:`mv_value` for each variant."""
    a = as_mat(a)
    n = a.shape[1]
    v = _check_variant(variant)
    if v == "wss":
        if ctx is None:
            raise InputError("wss gradient needs a WssContext")
        return wss_grad(a, ctx)
    if v == "nwss":
        if ctx is None:
            raise InputError("nwss gradient needs a WssContext")
        return wss_grad(a, replace(ctx, w=np.ones(n)))
    if v == "center":
        if c is None:
            raise InputError("center variant needs the simplex center")
        return a - np.asarray(c)[:, None]
    centering = np.eye(n) - np.ones((n, n)) / n
    if v == "tv":
        return a @ centering
    return n * (a @ centering)  # ssd


def mv_quadratic_terms(variant, n, c=None, w=None):
    """Coefficients (K, R) of a variant's quadratic form for the endmember solve.

    Every variant's shrink term can be written with gradient
    ``A @ K - R``; the solver adds ``lam3 * K`` to its normal matrix and
    ``lam3 * R`` to the right-hand side.  The anchor term (wss/nwss) is
    handled separately by the solver through lam4.
    """
    v = _check_variant(variant)
    if v in ("wss", "nwss"):
        weights = np.ones(n) if v == "nwss" else np.asarray(w, dtype=np.float64)
        if weights is None or weights.shape != (n,):
            raise InputError("wss quadratic terms need a length-N weight vector")
        if c is None:
            raise InputError("wss quadratic terms need the simplex center")
        k = np.diag(weights)
        r = np.outer(np.asarray(c), weights)
        return k, r
    if v == "center":
        if c is None:
            raise InputError("center variant needs the simplex center")
        k = np.eye(n)
        r = np.tile(np.asarray(c)[:, None], (1, n))
        return k, r
    centering = np.eye(n) - np.ones((n, n)) / n
    if v == "tv":
        return centering, None
    return n * centering, None  # ssd
