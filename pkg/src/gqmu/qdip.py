"""Quantum image prior: circuit read-out expanded by a transposed-conv decoder.

The circuit expectations are rescaled to [0, 1], reshaped to a small
square seed map, and expanded by stride-2 transposed-convolution blocks
(kernel 4, bias, leaky-ReLU slope 0.1, last block linear) until the
target spatial size is reached with one channel per source; a channelwise
softmax makes every pixel's abundances sum to one.  Training minimizes
the reconstruction error of the virtual image against the initial
endmembers with Adam; the network structure itself is the regularizer,
no explicit penalty is added.
"""

from dataclasses import dataclass, field

import numpy as np

from .circuit import (
    PARAM_FAMILIES,
    CircuitParams,
    circuit_forward,
    circuit_grad,
    random_params,
)
from .errors import ConfigError, InputError, TrainingDiverged
from .tensor import as_mat, as_tensor3, mode3_mul

__all__ = [
    "QdipConfig",
    "QdipModel",
    "decoder_channels",
    "conv_transpose2d",
    "conv_transpose2d_backward",
    "qdip_init",
    "qdip_forward",
    "qdip_train",
    "ls_prior",
]

LEAKY_SLOPE = 0.1
FULL_WIDTHS = (32, 32, 16, 16, 8)  # intermediate widths when growing 4 -> 256


@dataclass
class QdipConfig:
    """Knobs of the prior: circuit size, decoder widths, training schedule."""

    n_qubits: int = 16
    widths: tuple = None  # explicit intermediate channel widths, else auto
    lr: float = 5e-2
    iterations: int = 200
    seed: int = 0
    readout: str = "expectations"  # or "probabilities"
    include_toffoli: bool = True


def _seed_side(cfg):
    if cfg.readout == "probabilities":
        if cfg.n_qubits % 2:
            raise ConfigError("probability read-out needs an even qubit count")
        return 2 ** (cfg.n_qubits // 2)
    side = int(round(np.sqrt(cfg.n_qubits)))
    if side * side != cfg.n_qubits:
        raise ConfigError(
            f"qubit count {cfg.n_qubits} is not a square; cannot form the seed map"
        )
    return side


def decoder_channels(target_side, n_channels, cfg):
    """Channel counts per block for a seed growing to ``target_side``.

    Doubling blocks are taken from the tail of the full-width schedule so
    smaller targets use fewer, narrower blocks.
    """
    side = _seed_side(cfg)
    if target_side < 2 * side or target_side % side:
        raise ConfigError(
            f"target side {target_side} not reachable from the {side}x{side} seed; "
            f"crop or pad the image to {side}*2^t pixels"
        )
    ratio = target_side // side
    t = int(round(np.log2(ratio)))
    if 2**t != ratio:
        raise ConfigError(
            f"target side {target_side} not reachable from the {side}x{side} seed; "
            f"crop or pad the image to {side}*2^t pixels"
        )
    if cfg.widths is not None:
        inter = list(cfg.widths)
        if len(inter) != t - 1:
            raise ConfigError(
                f"decoder needs {t - 1} intermediate widths for this target, "
                f"got {len(inter)}"
            )
    else:
        if t - 1 > len(FULL_WIDTHS):
            raise ConfigError(
                f"target side {target_side} exceeds the built-in width schedule; "
                f"pass explicit widths"
            )
        inter = list(FULL_WIDTHS[len(FULL_WIDTHS) - (t - 1):]) if t > 1 else []
    return [1] + inter + [int(n_channels)]


def _ranges(h, off):
    # valid input rows i with 0 <= 2*i + off <= 2*h - 1, inclusive bounds
    i0 = (max(0, -off) + 1) // 2
    i1 = min(h - 1, (2 * h - 1 - off) // 2)
    return i0, i1


def conv_transpose2d(x, w):
    """Stride-2, kernel-4, pad-1 transposed convolution; doubles H and W.

    ``x``: (C_in, H, W); ``w``: (C_in, C_out, 4, 4); out: (C_out, 2H, 2W)
    with ``out[o, 2i+u-1, 2j+v-1] += x[c,i,j] * w[c,o,u,v]``.
    """
    cin, h, wd = x.shape
    cout = w.shape[1]
    out = np.zeros((cout, 2 * h, 2 * wd))
    for u in range(4):
        offu = u - 1
        i0, i1 = _ranges(h, offu)
        if i1 < i0:
            continue
        for v in range(4):
            offv = v - 1
            j0, j1 = _ranges(wd, offv)
            if j1 < j0:
                continue
            contrib = np.einsum(
                "co,chw->ohw", w[:, :, u, v], x[:, i0 : i1 + 1, j0 : j1 + 1]
            )
            out[
                :,
                2 * i0 + offu : 2 * i1 + offu + 1 : 2,
                2 * j0 + offv : 2 * j1 + offv + 1 : 2,
            ] += contrib
    return out


def conv_transpose2d_backward(x, w, grad_out):
    """Gradients of :func:`conv_transpose2d` w.r.t. input and weights."""
    cin, h, wd = x.shape
    gx = np.zeros_like(x)
    gw = np.zeros_like(w)
    for u in range(4):
        offu = u - 1
        i0, i1 = _ranges(h, offu)
        if i1 < i0:
            continue
        for v in range(4):
            offv = v - 1
            j0, j1 = _ranges(wd, offv)
            if j1 < j0:
                continue
            g_slice = grad_out[
                :,
                2 * i0 + offu : 2 * i1 + offu + 1 : 2,
                2 * j0 + offv : 2 * j1 + offv + 1 : 2,
            ]
            x_slice = x[:, i0 : i1 + 1, j0 : j1 + 1]
            gx[:, i0 : i1 + 1, j0 : j1 + 1] += np.einsum(
                "co,ohw->chw", w[:, :, u, v], g_slice
            )
            gw[:, :, u, v] = np.einsum("chw,ohw->co", x_slice, g_slice)
    return gx, gw


@dataclass
class QdipModel:
    """Trainable state: circuit angles plus decoder weights and biases."""

    circuit: CircuitParams
    weights: list  # [(w, b)] per block, w: (C_in, C_out, 4, 4)
    cfg: QdipConfig = field(default_factory=QdipConfig)

    def copy(self):
        return QdipModel(
            self.circuit.copy(),
            [(w.copy(), b.copy()) for w, b in self.weights],
            self.cfg,
        )


def qdip_init(dims, cfg=None):
    """Seeded model for output ``dims = (L1, L2, N)``.

    Decoder weights are uniform in [-s, s] with s = 1/sqrt(fan_in) and
    zero biases; circuit angles uniform in [-pi/2, pi/2).  Everything is
    drawn from one generator so a seed fixes the whole model.
    """
    cfg = cfg or QdipConfig()
    l1, l2, n = dims
    if l1 != l2:
        raise ConfigError(f"prior decoder needs a square target, got {l1}x{l2}")
    channels = decoder_channels(l1, n, cfg)
    rng = np.random.default_rng(cfg.seed)
    circ = random_params(cfg.n_qubits, rng)
    weights = []
    for cin, cout in zip(channels[:-1], channels[1:]):
        s = 1.0 / np.sqrt(cin * 16)
        w = rng.uniform(-s, s, size=(cin, cout, 4, 4))
        b = np.zeros(cout)
        weights.append((w, b))
    return QdipModel(circ, weights, cfg)


def _decoder_forward(model, readout_vec):
    cfg = model.cfg
    side = _seed_side(cfg)
    x = (0.5 * (1.0 + readout_vec)).reshape(1, side, side)
    activations = [x]
    pre = []
    n_blocks = len(model.weights)
    for bi, (w, b) in enumerate(model.weights):
        z = conv_transpose2d(x, w) + b[:, None, None]
        pre.append(z)
        x = z if bi == n_blocks - 1 else np.where(z > 0, z, LEAKY_SLOPE * z)
        activations.append(x)
    logits = x
    shifted = logits - logits.max(axis=0, keepdims=True)
    e = np.exp(shifted)
    soft = e / e.sum(axis=0, keepdims=True)
    return soft, (activations, pre, logits)


def qdip_forward(model, return_cache=False):
    """Run the prior end to end; output is (L1, L2, N), sum-to-one per pixel."""
    readout_vec = circuit_forward(
        model.circuit,
        include_toffoli=model.cfg.include_toffoli,
        readout=model.cfg.readout,
    )
    soft, cache = _decoder_forward(model, readout_vec)
    out = np.ascontiguousarray(soft.transpose(1, 2, 0))
    if return_cache:
        return out, (readout_vec, soft, cache)
    return out


def _backward(model, grad_soft_cf, cache):
    """Backprop from d(loss)/d(softmax output), channel-first layout."""
    readout_vec, soft, (activations, pre, _) = cache
    dot = (grad_soft_cf * soft).sum(axis=0, keepdims=True)
    g = soft * (grad_soft_cf - dot)
    n_blocks = len(model.weights)
    gw_list = [None] * n_blocks
    gb_list = [None] * n_blocks
    for bi in range(n_blocks - 1, -1, -1):
        w, _ = model.weights[bi]
        if bi != n_blocks - 1:
            g = g * np.where(pre[bi] > 0, 1.0, LEAKY_SLOPE)
        gb_list[bi] = g.sum(axis=(1, 2))
        g, gw = conv_transpose2d_backward(activations[bi], w, g)
        gw_list[bi] = gw
    upstream = 0.5 * g.reshape(-1)  # d(seed)/d(readout) = 1/2
    gcirc = circuit_grad(
        model.circuit,
        upstream,
        include_toffoli=model.cfg.include_toffoli,
        readout=model.cfg.readout,
    )
    return gcirc, gw_list, gb_list


def _loss_and_grad(model, z_h, a0):
    out, (readout_vec, soft, cache) = qdip_forward(model, return_cache=True)
    resid = mode3_mul(out, a0) - z_h
    loss = float(np.sum(resid**2))
    grad_out = 2.0 * mode3_mul(resid, a0.T)  # (L1, L2, N)
    grad_soft_cf = np.ascontiguousarray(grad_out.transpose(2, 0, 1))
    gcirc, gw, gb = _backward(model, grad_soft_cf, (readout_vec, soft, cache))
    return loss, out, gcirc, gw, gb


def qdip_loss(model, z_h, a0):
    """Reconstruction loss ||Z_h - S x3 A0||_F^2 at the current parameters."""
    out = qdip_forward(model)
    resid = mode3_mul(out, a0) - z_h
    return float(np.sum(resid**2))


class _Adam:
    def __init__(self, shapes, lr, b1=0.9, b2=0.999, eps=1e-8):
        self.lr, self.b1, self.b2, self.eps = lr, b1, b2, eps
        self.m = [np.zeros(s) for s in shapes]
        self.v = [np.zeros(s) for s in shapes]
        self.t = 0

    def step(self, params, grads):
        self.t += 1
        for i, (p, g) in enumerate(zip(params, grads)):
            self.m[i] = self.b1 * self.m[i] + (1 - self.b1) * g
            self.v[i] = self.b2 * self.v[i] + (1 - self.b2) * g * g
            mhat = self.m[i] / (1 - self.b1**self.t)
            vhat = self.v[i] / (1 - self.b2**self.t)
            p -= self.lr * mhat / (np.sqrt(vhat) + self.eps)


def _param_slots(model):
    slots = [getattr(model.circuit, f) for f in PARAM_FAMILIES]
    for w, b in model.weights:
        slots.extend([w, b])
    return slots


def qdip_train(z_h, a0, cfg=None):
    """Fit the prior to the virtual image; returns (abundance prior, loss trace).

    Runs ``cfg.iterations`` Adam steps on the reconstruction loss.  The
    trace holds the loss before each step plus the final value, so
    ``trace[0]`` / ``trace[-1]`` are the initial and final losses.
    """
    cfg = cfg or QdipConfig()
    z_h = as_tensor3(z_h)
    a0 = as_mat(a0)
    if np.any(a0 < 0):
        raise InputError("initial endmembers must be non-negative")
    if a0.shape[0] != z_h.shape[2]:
        raise InputError(
            f"endmember rows {a0.shape[0]} != virtual band count {z_h.shape[2]}"
        )
    dims = (z_h.shape[0], z_h.shape[1], a0.shape[1])
    model = qdip_init(dims, cfg)
    slots = _param_slots(model)
    adam = _Adam([s.shape for s in slots], cfg.lr)
    losses = []
    for it in range(cfg.iterations):
        loss, _, gcirc, gw, gb = _loss_and_grad(model, z_h, a0)
        if not np.isfinite(loss):
            raise TrainingDiverged("prior training produced a non-finite loss", it)
        losses.append(loss)
        grads = [getattr(gcirc, f) for f in PARAM_FAMILIES]
        for w_g, b_g in zip(gw, gb):
            grads.extend([w_g, b_g])
        adam.step(slots, grads)
    final = qdip_loss(model, z_h, a0)
    if not np.isfinite(final):
        raise TrainingDiverged(
            "prior training produced a non-finite loss", cfg.iterations
        )
    losses.append(final)
    return qdip_forward(model), losses


def ls_prior(s0):
    """Pass-through provider: the initializer's abundances serve as the prior."""
    return s0
