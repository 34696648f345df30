"""Pure-numpy reference implementations of the hot kernels."""

from functools import lru_cache

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view


def _gate_scale(hid):
    # sigmoid(z) = (1 + tanh(z / 2)) / 2, so one tanh pass covers all four gates.
    scale = np.full(4 * hid, 0.5)
    scale[2 * hid : 3 * hid] = 1.0
    return scale


_SCALES: dict = {}


def activate_gates(z, hid):
    """Activated gates in packed ``[i, f, g, o]`` layout, as a new array."""
    key = (hid, z.dtype.str)
    scale = _SCALES.get(key)
    if scale is None:
        scale = _SCALES[key] = _gate_scale(hid).astype(z.dtype)
    acts = np.tanh(z * scale)
    for lo, hi in ((0, 2 * hid), (3 * hid, 4 * hid)):
        block = acts[:, lo:hi]
        block += 1.0
        block *= 0.5
    return acts


def lstm_gates_forward(z, c_prev):
    """Activate packed pre-activations ``[i, f, g, o]`` and advance the cell.

    Returns ``(acts, c, h, tanh_c)`` where ``acts`` holds the activated gates
    in the same packed layout as ``z``.
    """
    hid = c_prev.shape[1]
    acts = activate_gates(z, hid)
    i = acts[:, :hid]
    f = acts[:, hid : 2 * hid]
    g = acts[:, 2 * hid : 3 * hid]
    o = acts[:, 3 * hid :]
    c = f * c_prev + i * g
    tanh_c = np.tanh(c)
    h = o * tanh_c
    return acts, c, h, tanh_c


def lstm_gates_backward(acts, c_prev, tanh_c, dh, dc):
    """Gradient of one cell step wrt packed pre-activations and ``c_prev``."""
    hid = c_prev.shape[1]
    i = acts[:, :hid]
    f = acts[:, hid : 2 * hid]
    g = acts[:, 2 * hid : 3 * hid]
    o = acts[:, 3 * hid :]
    dct = dc + dh * o * (1.0 - tanh_c * tanh_c)
    dz = np.empty_like(acts)
    dz[:, :hid] = dct * g * i * (1.0 - i)
    dz[:, hid : 2 * hid] = dct * c_prev * f * (1.0 - f)
    dz[:, 2 * hid : 3 * hid] = dct * i * (1.0 - g * g)
    dz[:, 3 * hid :] = dh * tanh_c * o * (1.0 - o)
    return dz, dct * f


def conv1d_forward(xp, w, stride):
    """Cross-correlate padded ``xp`` (B, Tp, C) with ``w`` (K, C, width)."""
    width = w.shape[2]
    cols = sliding_window_view(xp, width, axis=1)[:, ::stride]
    return np.tensordot(cols, w, axes=([2, 3], [1, 2]))


def conv1d_backward(xp, w, dy, stride):
    width = w.shape[2]
    t_out = dy.shape[1]
    cols = sliding_window_view(xp, width, axis=1)[:, ::stride]
    dw = np.tensordot(dy, cols, axes=([0, 1], [0, 1]))
    dxp = np.zeros_like(xp)
    span = stride * (t_out - 1) + 1
    for q in range(width):
        dxp[:, q : q + span : stride, :] += dy @ w[:, :, q]
    return dxp, dw


def maxpool1d_forward(x, size):
    b, t, c = x.shape
    t_out = t // size
    blocks = x[:, : t_out * size].reshape(b, t_out, size, c)
    arg = blocks.argmax(axis=2)
    out = np.take_along_axis(blocks, arg[:, :, None, :], axis=2)[:, :, 0, :]
    return out, arg


def maxpool1d_backward(dy, arg, size, t_in):
    b, t_out, c = dy.shape
    blocks = np.zeros((b, t_out, size, c), dtype=dy.dtype)
    np.put_along_axis(blocks, arg[:, :, None, :], dy[:, :, None, :], axis=2)
    dx = np.zeros((b, t_in, c), dtype=dy.dtype)
    dx[:, : t_out * size] = blocks.reshape(b, t_out * size, c)
    return dx


@lru_cache(maxsize=32)
def _dft_matrix(n):
    k = np.arange(n)
    return np.exp(-2j * np.pi * np.outer(k, k) / n)


def dft2_magnitude(x):
    """Direct (non-FFT) separable 2D DFT magnitude of a real matrix."""
    rows, cols = x.shape
    spec = _dft_matrix(rows) @ x @ _dft_matrix(cols)
    return np.abs(spec)
