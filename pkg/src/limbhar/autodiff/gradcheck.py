"""Central finite-difference verification of analytic gradients."""

from __future__ import annotations

from typing import Callable, Sequence

import numpy as np

from ..errors import ContractError, NumericError
from .tensor import Tensor, backward


def numerical_grad(fn: Callable[..., Tensor], inputs: Sequence[Tensor], index: int, eps: float) -> np.ndarray:
    target = inputs[index]
    flat = target.data.reshape(-1)
    out = np.empty(flat.size)
    for k in range(flat.size):
        orig = flat[k]
        flat[k] = orig + eps
        f_plus = float(fn(*inputs).data)
        flat[k] = orig - eps
        f_minus = float(fn(*inputs).data)
        flat[k] = orig
        out[k] = (f_plus - f_minus) / (2.0 * eps)
    if not np.isfinite(out).all():
        raise NumericError("finite-difference gradient is not finite")
    return out.reshape(target.shape)


def relative_error(analytic: np.ndarray, numeric: np.ndarray) -> np.ndarray:
    denom = np.maximum(np.maximum(np.abs(analytic), np.abs(numeric)), 1e-8)
    return np.abs(analytic - numeric) / denom


def grad_check(fn: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-5) -> float:
    """Largest coordinate-wise relative error between backward and finite differences.

    ``fn(*inputs)`` must return a scalar tensor and be deterministic.  Every
    input with ``requires_grad`` is checked; the others are held fixed.
    """
    return grad_check_detail(fn, inputs, eps)[0]


def grad_check_detail(fn: Callable[..., Tensor], inputs: Sequence[Tensor], eps: float = 1e-5) -> tuple:
    """``(max relative error, max absolute error)`` over all checked coordinates.

    The absolute error tells a real mismatch apart from finite-difference
    roundoff, which is about ``ulp(loss) / eps`` whatever the gradient size.
    """
    if not eps > 0:
        raise ContractError(f"grad_check needs eps > 0, got {eps}")
    checked = [i for i, t in enumerate(inputs) if t.requires_grad]
    if not checked:
        raise ContractError("grad_check: no input requires a gradient")
    grads = backward(fn(*inputs), params=[inputs[i] for i in checked])
    worst_rel = worst_abs = 0.0
    for i in checked:
        num = numerical_grad(fn, inputs, i, eps)
        worst_rel = max(worst_rel, float(relative_error(grads[inputs[i]], num).max()))
        worst_abs = max(worst_abs, float(np.abs(grads[inputs[i]] - num).max()))
    return worst_rel, worst_abs
