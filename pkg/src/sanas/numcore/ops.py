"""Forward ops with exact reverse-mode gradients.

Each function takes :class:`Tensor` inputs and returns a :class:`Tensor`
whose tape entry (if any input requires grad) knows how to push the output
gradient back to its inputs.
"""
from __future__ import annotations

from typing import Mapping, Sequence

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import ConfigurationError, InputError
from .tensor import Tensor, make

GRU_PARAM_NAMES = ("W_a", "U_a", "b_a", "W_r", "U_r", "b_r", "W_c", "U_c", "b_c")


def _sigmoid(x: np.ndarray) -> np.ndarray:
    # branch on sign so exp never overflows
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def linear(x: Tensor, W: Tensor, b: Tensor) -> Tensor:
    """``W @ x + b`` for a vector ``x``."""
    if x.data.ndim != 1 or W.data.ndim != 2 or b.data.ndim != 1 \
            or W.shape[1] != x.shape[0] or W.shape[0] != b.shape[0]:
        raise ConfigurationError(
            f"linear: x{x.shape} does not conform with W{W.shape} and b{b.shape}")
    xd, Wd = x.data, W.data
    y = Wd @ xd + b.data

    def backward(g):
        return (Wd.T @ g if x.requires_grad else None,
                np.outer(g, xd) if W.requires_grad else None,
                g)

    return make(y, (x, W, b), backward)


def conv_output_size(n: int, k: int, s: int) -> int:
    return (n - k) // s + 1


def conv2d(x: Tensor, K: Tensor, b: Tensor, stride: Sequence[int] = (1, 1)) -> Tensor:
    """Valid cross-correlation of a C_in x F x T map with C_out x C_in x kF x kT kernels."""
    sF, sT = int(stride[0]), int(stride[1])
    if x.data.ndim != 3 or K.data.ndim != 4 or b.data.ndim != 1:
        raise ConfigurationError(f"conv2d: bad ranks x{x.shape} K{K.shape} b{b.shape}")
    C_in, F, T = x.shape
    C_out, kC, kF, kT = K.shape
    if kC != C_in or b.shape[0] != C_out:
        raise ConfigurationError(f"conv2d: x{x.shape} does not conform with K{K.shape} and b{b.shape}")
    if kF > F or kT > T:
        raise ConfigurationError(f"conv2d: kernel {(kF, kT)} larger than input {(F, T)}")
    if sF < 1 or sT < 1:
        raise ConfigurationError(f"conv2d: stride must be positive, got {(sF, sT)}")
    Fo, To = conv_output_size(F, kF, sF), conv_output_size(T, kT, sT)
    xd, Kd = x.data, K.data
    # (C_in, Fo, To, kF, kT) view -> (Fo*To, C_in*kF*kT) patch matrix
    win = sliding_window_view(xd, (kF, kT), axis=(1, 2))[:, ::sF, ::sT]
    cols = np.ascontiguousarray(win.transpose(1, 2, 0, 3, 4)).reshape(Fo * To, C_in * kF * kT)
    Kmat = Kd.reshape(C_out, -1)
    y = (cols @ Kmat.T).T.reshape(C_out, Fo, To) + b.data[:, None, None]

    def backward(g):
        gmat = g.reshape(C_out, Fo * To)
        dK = (gmat @ cols).reshape(K.shape) if K.requires_grad else None
        db = gmat.sum(axis=1)
        dx = None
        if x.requires_grad:
            dcols = (gmat.T @ Kmat).reshape(Fo, To, C_in, kF, kT)
            dx = np.zeros_like(xd)
            for i in range(kF):
                for j in range(kT):
                    dx[:, i:i + sF * (Fo - 1) + 1:sF, j:j + sT * (To - 1) + 1:sT] += \
                        dcols[:, :, :, i, j].transpose(2, 0, 1)
        return dx, dK, db

    return make(y, (x, K, b), backward)


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return make(np.where(mask, x.data, 0.0), (x,), lambda g: (g * mask,))


def sigmoid(x: Tensor) -> Tensor:
    s = _sigmoid(x.data)
    return make(s, (x,), lambda g: (g * s * (1.0 - s),))


def tanh(x: Tensor) -> Tensor:
    t = np.tanh(x.data)
    return make(t, (x,), lambda g: (g * (1.0 - t * t),))


def add(*xs: Tensor) -> Tensor:
    """Elementwise sum, accumulated left to right."""
    if not xs:
        raise ValueError("add needs at least one tensor")
    shape = xs[0].shape
    for t in xs[1:]:
        if t.shape != shape:
            raise ConfigurationError(f"add: shape {t.shape} != {shape}")
    out = xs[0].data.copy()
    for t in xs[1:]:
        out += t.data
    return make(out, xs, lambda g: tuple(g for _ in xs))


def scale(x: Tensor, c: float) -> Tensor:
    c = float(c)
    return make(x.data * c, (x,), lambda g: (g * c,))


def reshape(x: Tensor, shape: Sequence[int]) -> Tensor:
    old = x.shape
    return make(x.data.reshape(shape), (x,), lambda g: (g.reshape(old),))


def flatten(x: Tensor) -> Tensor:
    return reshape(x, (x.size,))


def total(x: Tensor) -> Tensor:
    """Sum of all entries, as a 0-d tensor."""
    shape = x.shape
    return make(np.asarray(x.data.sum()), (x,), lambda g: (np.full(shape, float(g)),))


def log_softmax(logits: np.ndarray) -> np.ndarray:
    m = logits.max()
    shifted = logits - m
    return shifted - np.log(np.exp(shifted).sum())


def softmax(logits: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(np.asarray(logits, dtype=np.float64)))


def softmax_xent(logits: Tensor, target: int) -> Tensor:
    """Cross-entropy of a single logit vector against a class index."""
    K = logits.shape[0]
    if logits.data.ndim != 1:
        raise ConfigurationError(f"softmax_xent expects a vector, got {logits.shape}")
    if not 0 <= int(target) < K:
        raise InputError(f"target {target} outside [0, {K})")
    target = int(target)
    lsm = log_softmax(logits.data)
    loss = -lsm[target]

    def backward(g):
        d = np.exp(lsm)
        d[target] -= 1.0
        return (d * g,)

    return make(np.asarray(loss), (logits,), backward)


def bernoulli_log_prob(gamma: Tensor, h: np.ndarray, eps: float = 1e-6) -> Tensor:
    """``sum(h*log(g) + (1-h)*log(1-g))`` with ``g`` clamped to ``[eps, 1-eps]``."""
    h = np.asarray(h, dtype=np.float64)
    if h.shape != gamma.shape:
        raise ConfigurationError(f"log_prob: H{h.shape} vs gamma{gamma.shape}")
    gc = np.clip(gamma.data, eps, 1.0 - eps)
    lp = np.sum(h * np.log(gc) + (1.0 - h) * np.log1p(-gc))
    inside = (gamma.data > eps) & (gamma.data < 1.0 - eps)

    def backward(g):
        d = h / gc - (1.0 - h) / (1.0 - gc)
        return (np.where(inside, d, 0.0) * g,)

    return make(np.asarray(lp), (gamma,), backward)


def gru_cell(z_prev: Tensor, u: Tensor, p: Mapping[str, Tensor]) -> Tensor:
    """One GRU step; ``p`` maps the names in ``GRU_PARAM_NAMES`` to tensors.

    a = sig(W_a u + U_a z + b_a), r = sig(W_r u + U_r z + b_r),
    c = tanh(W_c u + U_c (r*z) + b_c), z' = (1-a)*c + a*z.
    """
    d = z_prev.shape[0]
    if z_prev.data.ndim != 1 or u.data.ndim != 1:
        raise ConfigurationError(f"gru_cell: z{z_prev.shape}, u{u.shape} must be vectors")
    d_in = u.shape[0]
    for gate in "arc":
        W, U, b = p["W_" + gate], p["U_" + gate], p["b_" + gate]
        if W.shape != (d, d_in) or U.shape != (d, d) or b.shape != (d,):
            raise ConfigurationError(
                f"gru_cell gate {gate}: W{W.shape} U{U.shape} b{b.shape} for d={d}, d_in={d_in}")
    zd, ud = z_prev.data, u.data
    Wa, Ua = p["W_a"].data, p["U_a"].data
    Wr, Ur = p["W_r"].data, p["U_r"].data
    Wc, Uc = p["W_c"].data, p["U_c"].data
    a = _sigmoid(Wa @ ud + Ua @ zd + p["b_a"].data)
    r = _sigmoid(Wr @ ud + Ur @ zd + p["b_r"].data)
    rz = r * zd
    c = np.tanh(Wc @ ud + Uc @ rz + p["b_c"].data)
    z_new = (1.0 - a) * c + a * zd

    def backward(g):
        da = g * (zd - c) * a * (1.0 - a)
        dc = g * (1.0 - a) * (1.0 - c * c)
        drz = Uc.T @ dc
        dr = drz * zd * r * (1.0 - r)
        dz = g * a + drz * r + Ua.T @ da + Ur.T @ dr
        du = Wa.T @ da + Wr.T @ dr + Wc.T @ dc
        grads = {
            "W_a": np.outer(da, ud), "U_a": np.outer(da, zd), "b_a": da,
            "W_r": np.outer(dr, ud), "U_r": np.outer(dr, zd), "b_r": dr,
            "W_c": np.outer(dc, ud), "U_c": np.outer(dc, rz), "b_c": dc,
        }
        return (dz, du) + tuple(grads[n] for n in GRU_PARAM_NAMES)

    return make(z_new, (z_prev, u) + tuple(p[n] for n in GRU_PARAM_NAMES), backward)
