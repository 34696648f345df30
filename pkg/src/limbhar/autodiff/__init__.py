"""Minimal dense tensor engine with reverse-mode differentiation."""

from . import ops
from .checkpoint import load_checkpoint, save_checkpoint
from .gradcheck import grad_check, numerical_grad, relative_error
from .ops import (
    LSTMWeights,
    add,
    add_bias,
    conv1d,
    cross_entropy,
    dropout,
    loss,
    lstm,
    lstm_cell,
    matmul,
    maxpool1d,
    mean,
    mean_axis,
    mse,
    relu,
    reshape,
    sigmoid,
    softmax,
    tanh,
)
from .tensor import Tensor, backward

__all__ = [
    "LSTMWeights",
    "Tensor",
    "add",
    "add_bias",
    "backward",
    "conv1d",
    "cross_entropy",
    "dropout",
    "grad_check",
    "load_checkpoint",
    "loss",
    "lstm",
    "lstm_cell",
    "matmul",
    "maxpool1d",
    "mean",
    "mean_axis",
    "mse",
    "numerical_grad",
    "ops",
    "relative_error",
    "relu",
    "reshape",
    "save_checkpoint",
    "sigmoid",
    "softmax",
    "tanh",
]
