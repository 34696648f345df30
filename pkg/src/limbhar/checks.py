"""Gradient-check suite over every differentiable op and every architecture.

Each case builds a small deterministic scalar program from a seed.  Op
programs contract the op output against a fixed random tensor so that every
output coordinate carries an O(1) weight.
"""

from __future__ import annotations

from dataclasses import dataclass
from typing import Callable, Iterable

import numpy as np

from .autodiff import ops
from .autodiff.gradcheck import grad_check_detail
from .autodiff.ops import LSTMWeights
from .autodiff.tensor import Tensor
from .models import ArchKind, ModelSpec, build

TOLERANCE = 1e-4


def _param(rng, *shape, scale=1.0):
    return Tensor(rng.normal(0.0, scale, size=shape), requires_grad=True)


def _away_from_zero(rng, *shape):
    mag = rng.uniform(0.1, 1.0, size=shape)
    return Tensor(mag * rng.choice([-1.0, 1.0], size=shape), requires_grad=True)


def _contract(out: Tensor, rng) -> Tensor:
    weights = Tensor(rng.normal(size=out.shape))
    return ops.sum(ops.mul(out, weights))


def _with_weights(rng, build_out: Callable, inputs: list):
    seed = int(rng.integers(1 << 31))

    def fn(*args):
        return _contract(build_out(*args), np.random.default_rng(seed))

    return fn, inputs


def _lstm_weights(rng, n_in, hid):
    return LSTMWeights(_param(rng, n_in, 4 * hid, scale=0.5), _param(rng, hid, 4 * hid, scale=0.5), _param(rng, 4 * hid, scale=0.5))


def _case_lstm_cell(rng):
    w = _lstm_weights(rng, 3, 4)
    x, h, c = _param(rng, 2, 3), _param(rng, 2, 4), _param(rng, 2, 4)

    def out(x, h, c, wx, wh, b):
        h2, c2 = ops.lstm_cell(x, h, c, LSTMWeights(wx, wh, b))
        return ops.add(h2, ops.scale(c2, 0.5))

    return _with_weights(rng, out, [x, h, c, *w])


def _case_lstm(return_sequences):
    def case(rng):
        w = _lstm_weights(rng, 3, 4)
        x = _param(rng, 2, 5, 3)
        return _with_weights(rng, lambda x, wx, wh, b: ops.lstm(x, LSTMWeights(wx, wh, b), return_sequences), [x, *w])

    return case


def _case_dropout(rng):
    seed = int(rng.integers(1 << 31))
    return _with_weights(rng, lambda x: ops.dropout(x, 0.3, np.random.default_rng(seed), training=True), [_param(rng, 4, 5)])


def _case_ce(rng):
    logits = _param(rng, 5, 4)
    target = rng.integers(0, 4, size=5)
    return (lambda z: ops.cross_entropy(z, target)), [logits]


def _case_mse(rng):
    return (lambda a, b: ops.mse(a, b)), [_param(rng, 3, 4), _param(rng, 3, 4)]


OP_CASES: dict = {
    "matmul": lambda r: _with_weights(r, ops.matmul, [_param(r, 3, 4), _param(r, 4, 2)]),
    "add": lambda r: _with_weights(r, ops.add, [_param(r, 3, 4), _param(r, 3, 4)]),
    "sub": lambda r: _with_weights(r, ops.sub, [_param(r, 3, 4), _param(r, 3, 4)]),
    "mul": lambda r: _with_weights(r, ops.mul, [_param(r, 3, 4), _param(r, 3, 4)]),
    "scale": lambda r: _with_weights(r, lambda x: ops.scale(x, -1.7), [_param(r, 3, 4)]),
    "add_bias": lambda r: _with_weights(r, ops.add_bias, [_param(r, 2, 3, 4), _param(r, 4)]),
    "relu": lambda r: _with_weights(r, ops.relu, [_away_from_zero(r, 3, 4)]),
    "tanh": lambda r: _with_weights(r, ops.tanh, [_param(r, 3, 4)]),
    "sigmoid": lambda r: _with_weights(r, ops.sigmoid, [_param(r, 3, 4)]),
    "sum": lambda r: ((lambda x: ops.scale(ops.sum(ops.mul(x, x)), 0.5)), [_param(r, 3, 4)]),
    "mean": lambda r: ((lambda x: ops.mean(ops.mul(x, x))), [_param(r, 3, 4)]),
    "mean_axis": lambda r: _with_weights(r, lambda x: ops.mean_axis(x, 1), [_param(r, 2, 5, 3)]),
    "reshape": lambda r: _with_weights(r, lambda x: ops.reshape(x, (4, 3)), [_param(r, 3, 4)]),
    "slice_last": lambda r: _with_weights(r, lambda x: ops.slice_last(x, 1, 3), [_param(r, 3, 4)]),
    "take_step": lambda r: _with_weights(r, lambda x: ops.take_step(x, 2), [_param(r, 2, 4, 3)]),
    "repeat_steps": lambda r: _with_weights(r, lambda x: ops.repeat_steps(x, 4), [_param(r, 2, 3)]),
    "dropout": _case_dropout,
    "conv1d": lambda r: _with_weights(r, lambda x, k: ops.conv1d(x, k, 1, 1), [_param(r, 2, 7, 3), _param(r, 4, 3, 3)]),
    "conv1d_strided": lambda r: _with_weights(r, lambda x, k: ops.conv1d(x, k, 2, 0), [_param(r, 9, 2), _param(r, 3, 2, 3)]),
    "maxpool1d": lambda r: _with_weights(r, lambda x: ops.maxpool1d(x, 2), [_param(r, 2, 7, 3)]),
    "lstm_cell": _case_lstm_cell,
    "lstm_sequence": _case_lstm(True),
    "lstm_last": _case_lstm(False),
    "cross_entropy": _case_ce,
    "mse": _case_mse,
}


TOY_SPECS = {
    ArchKind.DNN: dict(widths=(6, 5, 4)),
    ArchKind.CNN: dict(widths=(4, 5, 4), kernel_widths=(3, 3)),
    ArchKind.CNN_LSTM: dict(widths=(4, 3), kernel_widths=(3,)),
    ArchKind.LSTM_CNN: dict(widths=(3, 4), kernel_widths=(3,)),
    ArchKind.LSTM: dict(widths=(4, 3)),
    ArchKind.LSTM_AE: dict(widths=(5, 4, 3)),
}


def toy_spec(kind: ArchKind, steps: int = 8, channels: int = 3, n_classes: int = 4) -> ModelSpec:
    return ModelSpec(kind, input_shape=(steps, channels), n_classes=n_classes, **TOY_SPECS[kind])


def arch_case(kind: ArchKind):
    def case(rng):
        spec = toy_spec(kind)
        model = build(spec, seed=int(rng.integers(1 << 31)))
        x = rng.normal(size=(3, *spec.input_shape))
        y = rng.integers(0, spec.n_classes, size=3)
        params = model.parameters()

        def fn(*_):
            return model.loss(x, y, mode="eval")[0]

        return fn, params

    return case


ARCH_CASES = {f"arch:{k.value}": arch_case(k) for k in ArchKind}


@dataclass(frozen=True)
class CheckResult:
    name: str
    max_rel_error: float
    seeds: int
    max_abs_error: float = 0.0

    @property
    def passed(self) -> bool:
        return self.max_rel_error < TOLERANCE


def run_case(builder, seed: int, eps: float = 1e-5) -> tuple:
    """``(max relative error, max absolute error)`` for one seed."""
    fn, inputs = builder(np.random.default_rng(seed))
    return grad_check_detail(fn, inputs, eps)


def run_suite(seeds: Iterable[int] = range(10), eps: float = 1e-5, include_ops=True, include_archs=True, only=None) -> list:
    """Worst relative error per case over ``seeds``.

    ``only`` restricts the run to the named cases (for example ``"tanh"`` or
    ``"arch:LSTM_AE"``); unknown names raise ``KeyError``.
    """
    seeds = list(seeds)
    cases = {}
    if include_ops:
        cases.update(OP_CASES)
    if include_archs:
        cases.update(ARCH_CASES)
    if only:
        missing = [n for n in only if n not in cases]
        if missing:
            raise KeyError(f"unknown gradient-check cases {missing}")
        cases = {n: cases[n] for n in only}
    results = []
    for name, builder in cases.items():
        errs = [run_case(builder, s, eps) for s in seeds]
        results.append(CheckResult(name, max(e[0] for e in errs), len(seeds), max(e[1] for e in errs)))
    return results
