"""Dense 3-way tensor and matrix primitives used by every other module.

Conventions
-----------
An image tensor is a float64 :class:`numpy.ndarray` of shape
``(L1, L2, K)`` = (rows, cols, channels).  Matrices are 2-D float64
arrays in row-major (C) order.  Mode-3 matricization produces a
``K x (L1*L2)`` matrix whose column ``j = l1 + l2*L1`` holds the channel
vector of pixel ``(l1, l2)``; :func:`fold3` is its exact inverse.
Serialized files store channels band-sequentially, see ``gqmu.io``.
"""

import re

import numpy as np
from scipy.linalg import cho_factor, cho_solve

from .errors import InputError, SolverError

__all__ = [
    "as_tensor3",
    "as_mat",
    "mode3_matricize",
    "fold3",
    "mode3_mul",
    "project_nonneg",
    "soft_threshold",
    "kron",
    "solve_spd",
]


def as_tensor3(t):
    """Coerce to a float64 3-way array, rejecting anything else."""
    t = np.asarray(t, dtype=np.float64)
    if t.ndim != 3:
        raise InputError(f"expected a 3-way tensor, got ndim={t.ndim}")
    return t


def as_mat(m):
    """Coerce to a float64 matrix, rejecting anything else."""
    m = np.asarray(m, dtype=np.float64)
    if m.ndim != 2:
        raise InputError(f"expected a matrix, got ndim={m.ndim}")
    return m


def mode3_matricize(t):
    """Unfold ``(L1, L2, K)`` into ``K x (L1*L2)`` with column j = l1 + l2*L1."""
    t = as_tensor3(t)
    l1, l2, k = t.shape
    # transpose to (K, L2, L1) so that C-order ravel enumerates l1 fastest
    return np.ascontiguousarray(t.transpose(2, 1, 0).reshape(k, l1 * l2))


def fold3(m, l1, l2):
    """Inverse of :func:`mode3_matricize` for an ``L1 x L2`` pixel grid."""
    m = as_mat(m)
    k, cols = m.shape
    if cols != l1 * l2:
        raise InputError(
            f"cannot fold {k}x{cols} matrix into {l1}x{l2} pixels "
            f"(need {l1 * l2} columns)"
        )
    return np.ascontiguousarray(m.reshape(k, l2, l1).transpose(2, 1, 0))


def mode3_mul(t, m):
    """Mode-3 (channel) product: ``out[l1,l2,j] = sum_k m[j,k] t[l1,l2,k]``."""
    t = as_tensor3(t)
    m = as_mat(m)
    if m.shape[1] != t.shape[2]:
        raise InputError(
            f"mode-3 product needs matrix columns == tensor channels, "
            f"got {m.shape[1]} != {t.shape[2]}"
        )
    return np.tensordot(t, m, axes=(2, 1))


def project_nonneg(x):
    """Elementwise projection onto the non-negative orthant."""
    return np.maximum(np.asarray(x, dtype=np.float64), 0.0)


def soft_threshold(t, c):
    """Shrinkage operator: shift magnitudes toward zero by ``c``, dead-zone at 0.

    ``t >= c  -> t - c``;  ``|t| <= c -> 0``;  ``t <= -c -> t + c``.
    """
    if c < 0:
        raise InputError(f"soft threshold needs c >= 0, got {c}")
    t = np.asarray(t, dtype=np.float64)
    return np.sign(t) * np.maximum(np.abs(t) - c, 0.0)


def kron(a, b):
    """Kronecker product of two matrices (standard block structure)."""
    return np.kron(as_mat(a), as_mat(b))


_PIVOT_RE = re.compile(r"(\d+)-th leading minor")


def solve_spd(g, h):
    """Solve ``G X = H`` for symmetric positive definite ``G`` (Cholesky).

    Raises :class:`SolverError` naming the offending pivot when the
    factorization hits a non-positive leading minor.
    """
    g = as_mat(g)
    h = np.asarray(h, dtype=np.float64)
    if g.shape[0] != g.shape[1]:
        raise InputError(f"solve_spd needs a square matrix, got {g.shape}")
    if h.shape[0] != g.shape[0]:
        raise InputError(
            f"right-hand side rows {h.shape[0]} != system size {g.shape[0]}"
        )
    try:
        factor = cho_factor(g, lower=True, check_finite=False)
    except np.linalg.LinAlgError as exc:
        match = _PIVOT_RE.search(str(exc))
        pivot = match.group(1) if match else "?"
        raise SolverError(
            f"matrix is not positive definite (pivot {pivot} failed)"
        ) from exc
    return cho_solve(factor, h, check_finite=False)
