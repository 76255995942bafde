"""Parameterized circuit of the quantum prior and its exact gradients.

Layer order: per-qubit X-rotations, Ising XX couplings on the
wrap-around ring, Z-rotations, a second XX layer, a final X-rotation
layer, then Toffoli gates on every third triple of adjacent qubits,
finishing with Pauli-Z expectations.  Gradients come from the
parameter-shift rule: every generator (X/2, Z/2, XX/2) has eigenvalues
+-1/2, so shifting a parameter by +-pi/2 gives the exact derivative.
"""

from dataclasses import dataclass, fields

import numpy as np

from .errors import ConfigError, InputError
from .statevec import (
    apply_rx,
    apply_rz,
    apply_toffoli,
    apply_xx,
    expect_z_all,
    new_state,
    probabilities,
)

__all__ = [
    "CircuitParams",
    "ring_pairs",
    "toffoli_triples",
    "circuit_forward",
    "circuit_grad",
    "random_params",
]

PARAM_FAMILIES = ("alpha", "beta", "delta", "rho", "epsilon")


@dataclass
class CircuitParams:
    """Rotation angles, one vector per sublayer.

    alpha/delta/epsilon drive the per-qubit rotations, beta/rho the two
    coupling layers on ring pairs (i, i+1 mod n); all five vectors have
    length n_qubits.
    """

    alpha: np.ndarray
    beta: np.ndarray
    delta: np.ndarray
    rho: np.ndarray
    epsilon: np.ndarray

    def __post_init__(self):
        arrays = [
            np.asarray(getattr(self, f.name), dtype=np.float64) for f in fields(self)
        ]
        n = arrays[0].size
        for f, arr in zip(fields(self), arrays):
            if arr.ndim != 1 or arr.size != n:
                raise InputError(
                    f"angle vector {f.name} must have length {n}, got shape {arr.shape}"
                )
            if not np.all(np.isfinite(arr)):
                raise InputError(f"angle vector {f.name} contains non-finite values")
            setattr(self, f.name, arr)

    @property
    def n_qubits(self):
        return self.alpha.size

    def copy(self):
        return CircuitParams(*(getattr(self, f.name).copy() for f in fields(self)))


def random_params(n_qubits, rng):
    """Angles drawn uniformly from [-pi/2, pi/2), one vector per family."""
    return CircuitParams(
        *(rng.uniform(-np.pi / 2, np.pi / 2, n_qubits) for _ in PARAM_FAMILIES)
    )


def ring_pairs(n):
    """Adjacent qubit pairs with wrap-around; empty below two qubits."""
    if n < 2:
        return []
    return [(i, (i + 1) % n) for i in range(n)]


def toffoli_triples(n):
    """Triples (i, i+1, i+2) mod n for i = 0, 3, 6, ...; empty below three qubits."""
    if n < 3:
        return []
    return [(i, (i + 1) % n, (i + 2) % n) for i in range(0, n, 3)]


def _gate_sequence(n, include_toffoli):
    """Gate list as (kind, qubits, family, index); family None = fixed gate."""
    seq = []
    seq += [("rx", (q,), "alpha", q) for q in range(n)]
    seq += [("xx", pair, "beta", i) for i, pair in enumerate(ring_pairs(n))]
    seq += [("rz", (q,), "delta", q) for q in range(n)]
    seq += [("xx", pair, "rho", i) for i, pair in enumerate(ring_pairs(n))]
    seq += [("rx", (q,), "epsilon", q) for q in range(n)]
    if include_toffoli:
        seq += [("toffoli", t, None, None) for t in toffoli_triples(n)]
    return seq


def _apply(psi, gate, theta, use_ext):
    kind, qubits = gate[0], gate[1]
    if kind == "rx":
        apply_rx(psi, qubits[0], theta, use_ext=use_ext)
    elif kind == "rz":
        apply_rz(psi, qubits[0], theta, use_ext=use_ext)
    elif kind == "xx":
        apply_xx(psi, qubits[0], qubits[1], theta, use_ext=use_ext)
    else:
        apply_toffoli(psi, qubits[0], qubits[1], qubits[2], use_ext=use_ext)


def _theta(params, gate):
    family, index = gate[2], gate[3]
    return getattr(params, family)[index] if family is not None else 0.0


def _readout(psi, readout):
    if readout == "expectations":
        return expect_z_all(psi)
    if readout == "probabilities":
        return probabilities(psi)
    raise ConfigError(f"unknown readout {readout!r}")


def _check_qubits(n):
    if not 1 <= n <= 20:
        raise ConfigError(f"qubit count out of range [1, 20]: {n}")


def circuit_forward(
    params, include_toffoli=True, readout="expectations", use_ext=None
):
    """Run the circuit from |0...0> and read it out.

    Returns the per-qubit Pauli-Z expectations (default) or the full
    basis-probability vector when ``readout="probabilities"``.
    """
    n = params.n_qubits
    _check_qubits(n)
    psi = new_state(n)
    for gate in _gate_sequence(n, include_toffoli):
        _apply(psi, gate, _theta(params, gate), use_ext)
    return _readout(psi, readout)


def circuit_grad(
    params, upstream, include_toffoli=True, readout="expectations", use_ext=None
):
    """Gradients of ``upstream . readout`` w.r.t. every angle (parameter shift).

    Each angle is evaluated at +-pi/2 shifts; the state up to the shifted
    gate is shared between evaluations, which changes nothing numerically
    (identical operation sequence) but avoids recomputing common
    prefixes.  Returns a :class:`CircuitParams` holding the gradients.
    """
    n = params.n_qubits
    _check_qubits(n)
    upstream = np.asarray(upstream, dtype=np.float64)
    seq = _gate_sequence(n, include_toffoli)
    grads = {family: np.zeros(n) for family in PARAM_FAMILIES}
    prefix = new_state(n)
    for k, gate in enumerate(seq):
        family, index = gate[2], gate[3]
        if family is not None:
            theta = _theta(params, gate)
            shifted_readouts = []
            for sign in (1.0, -1.0):
                psi = prefix.copy()
                _apply(psi, gate, theta + sign * np.pi / 2, use_ext)
                for later in seq[k + 1 :]:
                    _apply(psi, later, _theta(params, later), use_ext)
                shifted_readouts.append(_readout(psi, readout))
            delta = 0.5 * (shifted_readouts[0] - shifted_readouts[1])
            grads[family][index] = float(upstream @ delta)
        _apply(prefix, gate, _theta(params, gate), use_ext)
    return CircuitParams(**grads)
