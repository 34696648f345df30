"""numba-compiled versions of the hot kernels.

Signatures and return values mirror ``_numpy`` exactly; results agree to
rounding.
"""

import numpy as np
from numba import njit

# The forward gate step is transcendental-bound.  Without SVML, numba's scalar
# tanh/exp loses to numpy's vectorised loops, so the numpy version is reused.
from ._numpy import lstm_gates_forward  # noqa: F401

# The DFT is two small matrix products; BLAS beats a compiled triple loop
# by about 10x at window size 100 x 14.
from ._numpy import dft2_magnitude  # noqa: F401

_JIT = dict(cache=True, nogil=True)


@njit(**_JIT)
def lstm_gates_backward(acts, c_prev, tanh_c, dh, dc):
    b, hid = c_prev.shape
    dz = np.empty_like(acts)
    dc_prev = np.empty_like(c_prev)
    for r in range(b):
        for k in range(hid):
            i = acts[r, k]
            f = acts[r, hid + k]
            g = acts[r, 2 * hid + k]
            o = acts[r, 3 * hid + k]
            tc = tanh_c[r, k]
            dhk = dh[r, k]
            dct = dc[r, k] + dhk * o * (1.0 - tc * tc)
            dz[r, k] = dct * g * i * (1.0 - i)
            dz[r, hid + k] = dct * c_prev[r, k] * f * (1.0 - f)
            dz[r, 2 * hid + k] = dct * i * (1.0 - g * g)
            dz[r, 3 * hid + k] = dhk * tc * o * (1.0 - o)
            dc_prev[r, k] = dct * f
    return dz, dc_prev


@njit(**_JIT)
def _im2col(xp, width, stride, t_out):
    b, _, ch = xp.shape
    cols = np.empty((b * t_out, ch * width), dtype=xp.dtype)
    for n in range(b):
        for t in range(t_out):
            row = n * t_out + t
            base = t * stride
            for c in range(ch):
                for q in range(width):
                    cols[row, c * width + q] = xp[n, base + q, c]
    return cols


@njit(**_JIT)
def conv1d_forward(xp, w, stride):
    b, tp, _ = xp.shape
    k, ch, width = w.shape
    t_out = (tp - width) // stride + 1
    cols = _im2col(xp, width, stride, t_out)
    w2 = np.ascontiguousarray(w.reshape(k, ch * width).T)
    return np.dot(cols, w2).reshape(b, t_out, k)


@njit(**_JIT)
def conv1d_backward(xp, w, dy, stride):
    b, tp, _ = xp.shape
    k, ch, width = w.shape
    t_out = dy.shape[1]
    cols = _im2col(xp, width, stride, t_out)
    dy2 = np.ascontiguousarray(dy).reshape(b * t_out, k)
    dw = np.dot(dy2.T, cols).reshape(k, ch, width)
    dcols = np.dot(dy2, np.ascontiguousarray(w.reshape(k, ch * width)))
    dxp = np.zeros_like(xp)
    for n in range(b):
        for t in range(t_out):
            row = n * t_out + t
            base = t * stride
            for c in range(ch):
                for q in range(width):
                    dxp[n, base + q, c] += dcols[row, c * width + q]
    return dxp, dw


@njit(**_JIT)
def maxpool1d_forward(x, size):
    b, t, ch = x.shape
    t_out = t // size
    out = np.empty((b, t_out, ch), dtype=x.dtype)
    arg = np.empty((b, t_out, ch), dtype=np.int64)
    for n in range(b):
        for j in range(t_out):
            for c in range(ch):
                best = x[n, j * size, c]
                bi = 0
                for q in range(1, size):
                    v = x[n, j * size + q, c]
                    if v > best:
                        best = v
                        bi = q
                out[n, j, c] = best
                arg[n, j, c] = bi
    return out, arg


@njit(**_JIT)
def maxpool1d_backward(dy, arg, size, t_in):
    b, t_out, ch = dy.shape
    dx = np.zeros((b, t_in, ch), dtype=dy.dtype)
    for n in range(b):
        for j in range(t_out):
            for c in range(ch):
                dx[n, j * size + arg[n, j, c], c] = dy[n, j, c]
    return dx
