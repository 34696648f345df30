"""Differentiable operations.

Every function takes :class:`Tensor` inputs, computes its result with numpy
(or a kernel from :mod:`limbhar.kernels`), and attaches the local gradient
rule.  Broadcasting is limited to the bias row-add in :func:`add_bias`.

LSTM parameters are packed with gate order ``[input, forget, candidate,
output]`` along the last axis: ``w_x`` is ``(in, 4*hid)``, ``w_h`` is
``(hid, 4*hid)`` and ``b`` is ``(4*hid,)``.
"""

from __future__ import annotations

from typing import NamedTuple, Optional

import numpy as np

from .. import kernels
from ..errors import ContractError, DimensionError, LabelError
from .tensor import Tensor


def _same_shape(a: Tensor, b: Tensor, op: str) -> None:
    if a.shape != b.shape:
        raise DimensionError(f"{op}: shapes {a.shape} and {b.shape} differ")


def add(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "add")
    return Tensor._from_op(a.data + b.data, (a, b), lambda g: (g, g), "add")


def sub(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "sub")
    return Tensor._from_op(a.data - b.data, (a, b), lambda g: (g, -g), "sub")


def mul(a: Tensor, b: Tensor) -> Tensor:
    _same_shape(a, b, "mul")
    return Tensor._from_op(a.data * b.data, (a, b), lambda g: (g * b.data, g * a.data), "mul")


def scale(x: Tensor, factor: float) -> Tensor:
    return Tensor._from_op(x.data * factor, (x,), lambda g: (g * factor,), "scale")


def matmul(a: Tensor, b: Tensor) -> Tensor:
    if a.ndim != 2 or b.ndim != 2 or a.shape[1] != b.shape[0]:
        raise DimensionError(f"matmul: cannot multiply {a.shape} by {b.shape}")

    def grad(g):
        ga = g @ b.data.T if a.requires_grad else None
        gb = a.data.T @ g if b.requires_grad else None
        return ga, gb

    return Tensor._from_op(a.data @ b.data, (a, b), grad, "matmul")


def add_bias(x: Tensor, bias: Tensor) -> Tensor:
    """Add a 1-D ``bias`` to every row along the last axis of ``x``."""
    if bias.ndim != 1 or x.shape[-1] != bias.shape[0]:
        raise DimensionError(f"add_bias: bias {bias.shape} does not fit {x.shape}")
    lead = tuple(range(x.ndim - 1))
    return Tensor._from_op(x.data + bias.data, (x, bias), lambda g: (g, g.sum(axis=lead)), "add_bias")


def relu(x: Tensor) -> Tensor:
    mask = x.data > 0
    return Tensor._from_op(x.data * mask, (x,), lambda g: (g * mask,), "relu")


def tanh(x: Tensor) -> Tensor:
    y = np.tanh(x.data)
    return Tensor._from_op(y, (x,), lambda g: (g * (1.0 - y * y),), "tanh")


def _sigmoid(z: np.ndarray) -> np.ndarray:
    return 0.5 * (1.0 + np.tanh(0.5 * z))


def sigmoid(x: Tensor) -> Tensor:
    y = _sigmoid(x.data)
    return Tensor._from_op(y, (x,), lambda g: (g * y * (1.0 - y),), "sigmoid")


def sum(x: Tensor) -> Tensor:  # noqa: A001 - mirrors numpy naming
    shape = x.shape
    return Tensor._from_op(np.asarray(x.data.sum()), (x,), lambda g: (np.full(shape, g),), "sum")


def mean(x: Tensor) -> Tensor:
    shape, n = x.shape, x.size
    return Tensor._from_op(np.asarray(x.data.mean()), (x,), lambda g: (np.full(shape, g / n),), "mean")


def mean_axis(x: Tensor, axis: int) -> Tensor:
    n = x.shape[axis]
    shape = x.shape

    def grad(g):
        return (np.broadcast_to(np.expand_dims(g, axis) / n, shape).copy(),)

    return Tensor._from_op(x.data.mean(axis=axis), (x,), grad, "mean_axis")


def reshape(x: Tensor, shape) -> Tensor:
    old = x.shape
    try:
        out = x.data.reshape(shape)
    except ValueError as exc:
        raise DimensionError(f"reshape: {old} -> {shape}: {exc}") from None
    return Tensor._from_op(out, (x,), lambda g: (g.reshape(old),), "reshape")


def slice_last(x: Tensor, start: int, stop: int) -> Tensor:
    """Columns ``start:stop`` of the last axis."""
    shape = x.shape

    def grad(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[..., start:stop] = g
        return (full,)

    return Tensor._from_op(x.data[..., start:stop].copy(), (x,), grad, "slice_last")


def take_step(x: Tensor, index: int) -> Tensor:
    """Time step ``index`` of a ``(B, T, F)`` sequence, giving ``(B, F)``."""
    if x.ndim != 3:
        raise DimensionError(f"take_step expects (B, T, F), got {x.shape}")
    shape = x.shape

    def grad(g):
        full = np.zeros(shape, dtype=g.dtype)
        full[:, index] = g
        return (full,)

    return Tensor._from_op(x.data[:, index].copy(), (x,), grad, "take_step")


def repeat_steps(x: Tensor, steps: int) -> Tensor:
    """Tile a ``(B, F)`` vector across ``steps`` time steps, giving ``(B, T, F)``."""
    if x.ndim != 2:
        raise DimensionError(f"repeat_steps expects (B, F), got {x.shape}")
    out = np.repeat(x.data[:, None, :], steps, axis=1)
    return Tensor._from_op(out, (x,), lambda g: (g.sum(axis=1),), "repeat_steps")


def dropout(x: Tensor, rate: float, rng: Optional[np.random.Generator], training: bool = True) -> Tensor:
    """Inverted dropout.  Identity when not training or when ``rate == 0``."""
    if not training or rate == 0.0:
        return x
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate must be in [0, 1), got {rate}")
    if rng is None:
        raise ContractError("dropout in training mode needs a seeded generator")
    mask = ((rng.random(x.shape) >= rate) / (1.0 - rate)).astype(x.data.dtype, copy=False)
    return Tensor._from_op(x.data * mask, (x,), lambda g: (g * mask,), "dropout")


def _as_batch(x: Tensor, op: str):
    if x.ndim == 2:
        return x.data[None], True
    if x.ndim == 3:
        return x.data, False
    raise DimensionError(f"{op} expects (T, C) or (B, T, C), got {x.shape}")


def conv1d(x: Tensor, kernels_: Tensor, stride: int = 1, padding: int = 0) -> Tensor:
    """Cross-correlation over time.

    ``x`` is ``(T, C)`` or ``(B, T, C)``; ``kernels_`` is ``(K, C, width)``.
    Output length is ``(T + 2*padding - width) // stride + 1``.
    """
    data, squeezed = _as_batch(x, "conv1d")
    if kernels_.ndim != 3 or kernels_.shape[1] != data.shape[2]:
        raise DimensionError(f"conv1d: kernels {kernels_.shape} do not match input channels {data.shape[2]}")
    if stride < 1 or padding < 0:
        raise ContractError(f"conv1d: stride={stride}, padding={padding}")
    width = kernels_.shape[2]
    t_in = data.shape[1]
    if width > t_in + 2 * padding:
        raise DimensionError(f"conv1d: kernel width {width} exceeds padded length {t_in + 2 * padding}")
    xp = np.pad(data, ((0, 0), (padding, padding), (0, 0))) if padding else np.ascontiguousarray(data)
    w = np.ascontiguousarray(kernels_.data)
    out = kernels.conv1d_forward(xp, w, stride)

    def grad(g):
        gb = g[None] if squeezed else g
        dxp, dw = kernels.conv1d_backward(xp, w, np.ascontiguousarray(gb), stride)
        dx = dxp[:, padding : padding + t_in] if x.requires_grad else None
        if dx is not None and squeezed:
            dx = dx[0]
        return dx, dw

    return Tensor._from_op(out[0] if squeezed else out, (x, kernels_), grad, "conv1d")


def maxpool1d(x: Tensor, size: int) -> Tensor:
    """Non-overlapping max pooling over time; a trailing remainder is dropped."""
    data, squeezed = _as_batch(x, "maxpool1d")
    if size < 1 or size > data.shape[1]:
        raise DimensionError(f"maxpool1d: pool size {size} for length {data.shape[1]}")
    data = np.ascontiguousarray(data)
    out, arg = kernels.maxpool1d_forward(data, size)
    t_in = data.shape[1]

    def grad(g):
        gb = np.ascontiguousarray(g[None] if squeezed else g)
        dx = kernels.maxpool1d_backward(gb, arg, size, t_in)
        return (dx[0] if squeezed else dx,)

    return Tensor._from_op(out[0] if squeezed else out, (x,), grad, "maxpool1d")


class LSTMWeights(NamedTuple):
    w_x: Tensor
    w_h: Tensor
    b: Tensor

    @property
    def hidden(self) -> int:
        return self.w_h.shape[0]


def _check_lstm(n_in: int, weights: LSTMWeights, op: str) -> int:
    hid = weights.w_h.shape[0]
    if (
        weights.w_x.shape != (n_in, 4 * hid)
        or weights.w_h.shape != (hid, 4 * hid)
        or weights.b.shape != (4 * hid,)
    ):
        raise DimensionError(
            f"{op}: weights {weights.w_x.shape}, {weights.w_h.shape}, {weights.b.shape} "
            f"inconsistent with input size {n_in}"
        )
    return hid


def lstm_cell(x: Tensor, h: Tensor, c: Tensor, weights: LSTMWeights):
    """One LSTM step built from primitive ops; returns ``(h_next, c_next)``.

    Works on single vectors or ``(B, F)`` batches.  This is the reference
    formulation; :func:`lstm` is the fused sequence version used in models.
    """
    hid = _check_lstm(x.shape[-1], weights, "lstm_cell")
    if h.shape[-1] != hid or c.shape != h.shape:
        raise DimensionError(f"lstm_cell: state shapes {h.shape}, {c.shape} for hidden size {hid}")
    vec = x.ndim == 1
    if vec:
        x, h, c = reshape(x, (1, -1)), reshape(h, (1, -1)), reshape(c, (1, -1))
    z = add_bias(add(matmul(x, weights.w_x), matmul(h, weights.w_h)), weights.b)
    i = sigmoid(slice_last(z, 0, hid))
    f = sigmoid(slice_last(z, hid, 2 * hid))
    g = tanh(slice_last(z, 2 * hid, 3 * hid))
    o = sigmoid(slice_last(z, 3 * hid, 4 * hid))
    c_next = add(mul(f, c), mul(i, g))
    h_next = mul(o, tanh(c_next))
    if vec:
        return reshape(h_next, (hid,)), reshape(c_next, (hid,))
    return h_next, c_next


def lstm(x: Tensor, weights: LSTMWeights, return_sequences: bool = True) -> Tensor:
    """Run an LSTM layer over ``(B, T, in)`` from zero initial state.

    Returns ``(B, T, hid)`` hidden states, or only the last ``(B, hid)`` when
    ``return_sequences`` is false.  Backward is truncation-free BPTT.
    """
    if x.ndim != 3:
        raise DimensionError(f"lstm expects (B, T, in), got {x.shape}")
    b_sz, steps, n_in = x.shape
    hid = _check_lstm(n_in, weights, "lstm")
    wx, wh, bias = weights.w_x.data, weights.w_h.data, weights.b.data

    xs = np.ascontiguousarray(x.data.transpose(1, 0, 2)).reshape(steps * b_sz, n_in)
    xz = (xs @ wx + bias).reshape(steps, b_sz, 4 * hid)
    dt = xz.dtype
    acts = np.empty((steps, b_sz, 4 * hid), dtype=dt)
    c_prev = np.empty((steps, b_sz, hid), dtype=dt)
    tanh_c = np.empty((steps, b_sz, hid), dtype=dt)
    hs = np.empty((steps + 1, b_sz, hid), dtype=dt)
    hs[0] = 0.0
    c = np.zeros((b_sz, hid), dtype=dt)
    for t in range(steps):
        z = xz[t] + hs[t] @ wh
        c_prev[t] = c
        acts[t], c, hs[t + 1], tanh_c[t] = kernels.lstm_gates_forward(z, c)

    out = hs[1:].transpose(1, 0, 2).copy() if return_sequences else hs[steps].copy()

    def grad(g):
        dz_all = np.empty_like(acts)
        dh_next = np.zeros((b_sz, hid), dtype=dt)
        dc = np.zeros((b_sz, hid), dtype=dt)
        for t in range(steps - 1, -1, -1):
            if return_sequences:
                dh = g[:, t] + dh_next
            else:
                dh = g + dh_next if t == steps - 1 else dh_next
            dz, dc = kernels.lstm_gates_backward(acts[t], c_prev[t], tanh_c[t], np.ascontiguousarray(dh), dc)
            dz_all[t] = dz
            dh_next = dz @ wh.T
        dz2 = dz_all.reshape(steps * b_sz, 4 * hid)
        dwx = xs.T @ dz2
        dwh = hs[:steps].reshape(steps * b_sz, hid).T @ dz2
        db = dz2.sum(axis=0)
        dx = None
        if x.requires_grad:
            dx = (dz2 @ wx.T).reshape(steps, b_sz, n_in).transpose(1, 0, 2).copy()
        return dx, dwx, dwh, db

    return Tensor._from_op(out, (x, weights.w_x, weights.w_h, weights.b), grad, "lstm")


def log_softmax(z: np.ndarray) -> np.ndarray:
    shifted = z - z.max(axis=-1, keepdims=True)
    return shifted - np.log(np.exp(shifted).sum(axis=-1, keepdims=True))


def softmax(z: np.ndarray) -> np.ndarray:
    return np.exp(log_softmax(z))


def cross_entropy(logits: Tensor, target) -> Tensor:
    """Mean of ``-log softmax(logits)[target]`` over the batch.

    ``logits`` is ``(B, K)`` with integer targets ``(B,)``, or a single
    ``(K,)`` vector with one integer target.
    """
    single = logits.ndim == 1
    z = logits.data[None] if single else logits.data
    if z.ndim != 2:
        raise DimensionError(f"cross_entropy expects (B, K) logits, got {logits.shape}")
    y = np.atleast_1d(np.asarray(target))
    if not np.issubdtype(y.dtype, np.integer) or y.shape != (z.shape[0],):
        raise LabelError(f"cross_entropy: targets must be {z.shape[0]} integer class indices")
    n_classes = z.shape[1]
    if (y < 0).any() or (y >= n_classes).any():
        raise LabelError(f"cross_entropy: target outside [0, {n_classes})")
    logp = log_softmax(z)
    rows = np.arange(z.shape[0])
    loss = -logp[rows, y].mean()

    def grad(g):
        d = np.exp(logp)
        d[rows, y] -= 1.0
        d *= g / z.shape[0]
        return (d[0] if single else d,)

    return Tensor._from_op(np.asarray(loss), (logits,), grad, "cross_entropy")


def mse(prediction: Tensor, target) -> Tensor:
    tgt = target if isinstance(target, Tensor) else Tensor(target, dtype=prediction.data.dtype)
    _same_shape(prediction, tgt, "mse")
    diff = prediction.data - tgt.data
    n = diff.size

    def grad(g):
        d = diff * (2.0 * g / n)
        return d, -d

    return Tensor._from_op(np.asarray((diff * diff).mean()), (prediction, tgt), grad, "mse")


def loss(kind: str, prediction: Tensor, target) -> Tensor:
    if kind == "cross_entropy":
        return cross_entropy(prediction, target)
    if kind == "mse":
        return mse(prediction, target)
    raise ContractError(f"unknown loss kind {kind!r}")
