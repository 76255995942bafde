"""Statevector kernels for the quantum prior circuit.

Amplitudes are indexed by basis-state integers with qubit ``q`` mapped to
bit ``q`` (qubit 0 = least significant bit).  All gate functions mutate
the state in place and return it.

Two implementations are provided: compiled Cython kernels
(``gqmu._statevec``) and a pure-numpy fallback.  The compiled ones are
selected automatically at import when present; set the environment
variable ``GQMU_PURE_PYTHON=1`` (before import) or pass ``use_ext=False``
to force the fallback.  ``benchmarks/bench_statevec.py`` compares the two.
"""

import os

import numpy as np

from .errors import InputError

try:  # pragma: no cover - depends on the build
    from . import _statevec as _ext
except ImportError:  # pragma: no cover
    _ext = None

HAVE_EXT = _ext is not None
_FORCE_PY = os.environ.get("GQMU_PURE_PYTHON", "") == "1"

__all__ = [
    "HAVE_EXT",
    "new_state",
    "apply_rx",
    "apply_rz",
    "apply_xx",
    "apply_toffoli",
    "expect_z",
    "expect_z_all",
    "probabilities",
    "norm",
]


def _use_ext(use_ext):
    if use_ext is None:
        return HAVE_EXT and not _FORCE_PY
    if use_ext and not HAVE_EXT:
        raise InputError("compiled statevector kernels are not available")
    return bool(use_ext)


def new_state(n_qubits):
    """All-zeros computational basis state |0...0>."""
    if not 1 <= n_qubits <= 20:
        raise InputError(f"qubit count out of range [1, 20]: {n_qubits}")
    psi = np.zeros(2**n_qubits, dtype=np.complex128)
    psi[0] = 1.0
    return psi


def _nq(psi):
    n = int(psi.size).bit_length() - 1
    if 2**n != psi.size:
        raise InputError(f"state length {psi.size} is not a power of two")
    return n


def _axis(n, q):
    # state reshaped to [2]*n puts the most significant bit on axis 0
    return n - 1 - q


def apply_rx(psi, q, theta, use_ext=None):
    """X-rotation exp(-i*theta*X/2) on qubit q."""
    if _use_ext(use_ext):
        _ext.rx(psi, q, float(theta))
        return psi
    n = _nq(psi)
    view = psi.reshape([2] * n)
    out = np.cos(theta / 2.0) * view - 1j * np.sin(theta / 2.0) * np.flip(
        view, axis=_axis(n, q)
    )
    psi[:] = out.reshape(-1)
    return psi


def apply_rz(psi, q, theta, use_ext=None):
    """Z-rotation exp(-i*theta*Z/2) on qubit q."""
    if _use_ext(use_ext):
        _ext.rz(psi, q, float(theta))
        return psi
    n = _nq(psi)
    shape = [1] * n
    shape[_axis(n, q)] = 2
    phase = np.array(
        [np.exp(-1j * theta / 2.0), np.exp(1j * theta / 2.0)]
    ).reshape(shape)
    view = psi.reshape([2] * n)
    view *= phase
    return psi


def apply_xx(psi, q1, q2, theta, use_ext=None):
    """Two-qubit Ising coupling exp(-i*theta*(X kron X)/2)."""
    if q1 == q2:
        raise InputError("xx gate needs two distinct qubits")
    if _use_ext(use_ext):
        _ext.xx(psi, q1, q2, float(theta))
        return psi
    n = _nq(psi)
    view = psi.reshape([2] * n)
    flipped = np.flip(view, axis=(_axis(n, q1), _axis(n, q2)))
    out = np.cos(theta / 2.0) * view - 1j * np.sin(theta / 2.0) * flipped
    psi[:] = out.reshape(-1)
    return psi


def apply_toffoli(psi, c1, c2, target, use_ext=None):
    """CCNOT: flip ``target`` where both controls are 1."""
    if len({c1, c2, target}) != 3:
        raise InputError("toffoli needs three distinct qubits")
    if _use_ext(use_ext):
        _ext.toffoli(psi, c1, c2, target)
        return psi
    n = _nq(psi)
    view = psi.reshape([2] * n)
    idx = [slice(None)] * n
    idx[_axis(n, c1)] = 1
    idx[_axis(n, c2)] = 1
    # integer indices collapse axes; recompute the target axis position
    ax_t = _axis(n, target)
    removed = sum(1 for a in (_axis(n, c1), _axis(n, c2)) if a < ax_t)
    sub = view[tuple(idx)]
    view[tuple(idx)] = np.flip(sub, axis=ax_t - removed).copy()
    return psi


def expect_z(psi, q, use_ext=None):
    """Pauli-Z expectation of qubit q."""
    if _use_ext(use_ext):
        return _ext.expect_z(psi, q)
    n = _nq(psi)
    prob = (psi.real**2 + psi.imag**2).reshape([2] * n)
    ax = _axis(n, q)
    marginal = prob.sum(axis=tuple(a for a in range(n) if a != ax))
    return float(marginal[0] - marginal[1])


def expect_z_all(psi, use_ext=None):
    """Pauli-Z expectations of every qubit, ordered by qubit index.

    Vectorized block sums over the probabilities; the ``use_ext`` flag is
    accepted for interface symmetry but this path is already cheap.
    """
    n = _nq(psi)
    prob = psi.real**2 + psi.imag**2
    total = float(prob.sum())
    out = np.empty(n)
    for q in range(n):
        ones = float(prob.reshape(-1, 2 ** (q + 1))[:, 2**q :].sum())
        out[q] = total - 2.0 * ones
    return out


def probabilities(psi):
    """Measurement probabilities in the computational basis."""
    return psi.real**2 + psi.imag**2


def norm(psi):
    return float(np.sqrt(np.sum(psi.real**2 + psi.imag**2)))
