"""The six compared architectures, built from :mod:`limbhar.autodiff` ops.

Every model maps a ``(B, W, C)`` batch of feature windows to ``(B, n_classes)``
logits.  ``LSTM_AE`` additionally reconstructs its input window through a
mirrored decoder; its training loss is ``cross_entropy + recon_weight * mse``.

Default topologies (all overridable through :class:`ModelSpec`):

* ``DNN``: flatten, dense 256/128/64 with ReLU and dropout, logits.
* ``CNN``: conv(64, w5), pool 2, conv(128, w3), pool 2, global average,
  dense 64, logits.
* ``CNN_LSTM``: conv(64, w5), pool 2, LSTM(128), last hidden state, logits.
* ``LSTM_CNN``: LSTM(128) sequence, conv(64, w3), global average, logits.
* ``LSTM``: LSTM(128) sequence, LSTM(128) last state, logits.
* ``LSTM_AE``: encoder LSTMs 192/128/64 with the final hidden state as the
  latent code, classifier on the latent, decoder LSTMs 64/128/192 over the
  repeated latent, per-step linear projection back to ``C`` channels.

Convolutions use "same" padding (``width // 2``) and carry a bias.
"""

from __future__ import annotations

from dataclasses import asdict, dataclass, replace
from enum import Enum
from typing import NamedTuple, Optional

import numpy as np

from .autodiff import ops
from .autodiff.checkpoint import load_checkpoint, save_checkpoint
from .autodiff.ops import LSTMWeights
from .autodiff.tensor import Tensor
from .errors import DimensionError, SpecError


class ArchKind(str, Enum):
    DNN = "DNN"
    CNN = "CNN"
    CNN_LSTM = "CNN_LSTM"
    LSTM_CNN = "LSTM_CNN"
    LSTM = "LSTM"
    LSTM_AE = "LSTM_AE"

    @classmethod
    def parse(cls, value) -> "ArchKind":
        if isinstance(value, cls):
            return value
        key = str(value).strip().upper().replace("-", "_")
        try:
            return cls(key)
        except ValueError:
            raise SpecError(f"unknown architecture {value!r}; expected one of {[k.value for k in cls]}") from None


DEFAULT_WIDTHS = {
    ArchKind.DNN: (256, 128, 64),
    ArchKind.CNN: (64, 128, 64),
    ArchKind.CNN_LSTM: (64, 128),
    ArchKind.LSTM_CNN: (128, 64),
    ArchKind.LSTM: (128, 128),
    ArchKind.LSTM_AE: (192, 128, 64),
}

DEFAULT_KERNELS = {
    ArchKind.DNN: (),
    ArchKind.CNN: (5, 3),
    ArchKind.CNN_LSTM: (5,),
    ArchKind.LSTM_CNN: (3,),
    ArchKind.LSTM: (),
    ArchKind.LSTM_AE: (),
}

POOL = 2


@dataclass(frozen=True)
class ModelSpec:
    """Architecture description.

    ``widths`` per kind: DNN hidden sizes; CNN (conv1, conv2, dense);
    CNN_LSTM (conv, lstm); LSTM_CNN (lstm, conv); LSTM (lstm1, lstm2);
    LSTM_AE encoder sizes ending with the latent size (the decoder mirrors
    them).  ``None`` selects the defaults.
    """

    kind: ArchKind
    input_shape: Optional[tuple] = None
    n_classes: int = 8
    widths: Optional[tuple] = None
    kernel_widths: Optional[tuple] = None
    dropout: float = 0.2
    recon_weight: float = 1.0

    def __post_init__(self):
        object.__setattr__(self, "kind", ArchKind.parse(self.kind))
        for name in ("input_shape", "widths", "kernel_widths"):
            val = getattr(self, name)
            if val is not None:
                object.__setattr__(self, name, tuple(int(v) for v in val))

    def resolved(self) -> "ModelSpec":
        return replace(
            self,
            widths=self.widths if self.widths is not None else DEFAULT_WIDTHS[self.kind],
            kernel_widths=self.kernel_widths if self.kernel_widths is not None else DEFAULT_KERNELS[self.kind],
        )

    def to_dict(self) -> dict:
        d = asdict(self.resolved())
        d["kind"] = self.kind.value
        for key in ("input_shape", "widths", "kernel_widths"):
            if d[key] is not None:
                d[key] = list(d[key])
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "ModelSpec":
        return cls(**d)


class ModelOutput(NamedTuple):
    logits: Tensor
    reconstruction: Optional[Tensor] = None


def _validate(spec: ModelSpec) -> ModelSpec:
    spec = spec.resolved()
    if spec.input_shape is None or len(spec.input_shape) != 2 or min(spec.input_shape) < 1:
        raise SpecError(f"input_shape must be (W, C) with positive sizes, got {spec.input_shape}")
    if spec.n_classes < 2:
        raise SpecError("n_classes must be at least 2")
    if any(w < 1 for w in spec.widths) or any(k < 1 for k in spec.kernel_widths):
        raise SpecError(f"widths and kernel widths must be positive: {spec.widths}, {spec.kernel_widths}")
    if not 0.0 <= spec.dropout < 1.0:
        raise SpecError(f"dropout must be in [0, 1), got {spec.dropout}")
    if spec.recon_weight < 0:
        raise SpecError("recon_weight must be non-negative")
    need = {
        ArchKind.DNN: (None, 0),
        ArchKind.CNN: (3, 2),
        ArchKind.CNN_LSTM: (2, 1),
        ArchKind.LSTM_CNN: (2, 1),
        ArchKind.LSTM: (2, 0),
        ArchKind.LSTM_AE: (None, 0),
    }[spec.kind]
    n_w, n_k = need
    # a DNN may have no hidden layer; the LSTM_AE stack depth is free
    if (n_w is not None and len(spec.widths) != n_w) or (spec.kind is ArchKind.LSTM_AE and not spec.widths):
        raise SpecError(f"{spec.kind.value} needs {n_w or 'at least 1'} widths, got {spec.widths}")
    if len(spec.kernel_widths) != n_k:
        raise SpecError(f"{spec.kind.value} needs {n_k} kernel widths, got {spec.kernel_widths}")
    steps = spec.input_shape[0]
    if spec.kind is ArchKind.CNN:
        if steps < POOL * POOL:
            raise SpecError(f"CNN needs at least {POOL * POOL} time steps for two pooling stages")
    if spec.kind is ArchKind.CNN_LSTM and steps < POOL:
        raise SpecError(f"CNN_LSTM needs at least {POOL} time steps")
    return spec


def _param_shapes(spec: ModelSpec) -> list:
    """Ordered ``(name, shape, fan_in)`` for every parameter of ``spec``."""
    steps, ch = spec.input_shape
    w, k, ncls = spec.widths, spec.kernel_widths, spec.n_classes
    out = []

    def dense(name, n_in, n_out):
        out.extend([(f"{name}.w", (n_in, n_out), n_in), (f"{name}.b", (n_out,), n_in)])

    def conv(name, n_in, n_out, width):
        fan = n_in * width
        out.extend([(f"{name}.w", (n_out, n_in, width), fan), (f"{name}.b", (n_out,), fan)])

    def lstm(name, n_in, hid):
        out.extend([
            (f"{name}.w_x", (n_in, 4 * hid), hid),
            (f"{name}.w_h", (hid, 4 * hid), hid),
            (f"{name}.b", (4 * hid,), hid),
        ])

    kind = spec.kind
    if kind is ArchKind.DNN:
        prev = steps * ch
        for i, width in enumerate(w):
            dense(f"dense{i + 1}", prev, width)
            prev = width
        dense("logits", prev, ncls)
    elif kind is ArchKind.CNN:
        conv("conv1", ch, w[0], k[0])
        conv("conv2", w[0], w[1], k[1])
        dense("dense1", w[1], w[2])
        dense("logits", w[2], ncls)
    elif kind is ArchKind.CNN_LSTM:
        conv("conv1", ch, w[0], k[0])
        lstm("lstm1", w[0], w[1])
        dense("logits", w[1], ncls)
    elif kind is ArchKind.LSTM_CNN:
        lstm("lstm1", ch, w[0])
        conv("conv1", w[0], w[1], k[0])
        dense("logits", w[1], ncls)
    elif kind is ArchKind.LSTM:
        lstm("lstm1", ch, w[0])
        lstm("lstm2", w[0], w[1])
        dense("logits", w[1], ncls)
    elif kind is ArchKind.LSTM_AE:
        prev = ch
        for i, width in enumerate(w):
            lstm(f"enc{i + 1}", prev, width)
            prev = width
        latent = w[-1]
        dense("logits", latent, ncls)
        prev = latent
        for i, width in enumerate(reversed(w)):
            lstm(f"dec{i + 1}", prev, width)
            prev = width
        dense("recon", prev, ch)
    return out


def expected_param_count(spec: ModelSpec) -> int:
    """Closed-form parameter count, independent of any built model."""
    spec = _validate(spec)
    steps, ch = spec.input_shape
    w, k, ncls = spec.widths, spec.kernel_widths, spec.n_classes

    def dense(i, o):
        return i * o + o

    def conv(i, o, width):
        return o * i * width + o

    def lstm(i, h):
        return 4 * (h * (i + h) + h)

    kind = spec.kind
    if kind is ArchKind.DNN:
        dims = (steps * ch, *w, ncls)
        return sum(dense(a, b) for a, b in zip(dims[:-1], dims[1:]))
    if kind is ArchKind.CNN:
        return conv(ch, w[0], k[0]) + conv(w[0], w[1], k[1]) + dense(w[1], w[2]) + dense(w[2], ncls)
    if kind is ArchKind.CNN_LSTM:
        return conv(ch, w[0], k[0]) + lstm(w[0], w[1]) + dense(w[1], ncls)
    if kind is ArchKind.LSTM_CNN:
        return lstm(ch, w[0]) + conv(w[0], w[1], k[0]) + dense(w[1], ncls)
    if kind is ArchKind.LSTM:
        return lstm(ch, w[0]) + lstm(w[0], w[1]) + dense(w[1], ncls)
    enc_in = (ch, *w[:-1])
    dec_out = tuple(reversed(w))
    dec_in = (w[-1], *dec_out[:-1])
    return (
        sum(lstm(i, h) for i, h in zip(enc_in, w))
        + dense(w[-1], ncls)
        + sum(lstm(i, h) for i, h in zip(dec_in, dec_out))
        + dense(dec_out[-1], ch)
    )


def recurrent_layer_count(spec: ModelSpec) -> int:
    spec = spec.resolved()
    return {
        ArchKind.DNN: 0,
        ArchKind.CNN: 0,
        ArchKind.CNN_LSTM: 1,
        ArchKind.LSTM_CNN: 1,
        ArchKind.LSTM: 2,
        ArchKind.LSTM_AE: 2 * len(spec.widths),
    }[spec.kind]


class Model:
    """A built architecture: its spec, ordered parameters and forward program."""

    def __init__(self, spec: ModelSpec, params: dict):
        self.spec = spec
        self.params = params

    @property
    def kind(self) -> ArchKind:
        return self.spec.kind

    def parameters(self) -> list:
        return list(self.params.values())

    @property
    def dtype(self) -> np.dtype:
        return next(iter(self.params.values())).data.dtype

    def astype(self, dtype) -> "Model":
        """Cast every parameter in place (used for reduced-precision training)."""
        for p in self.params.values():
            p.data = p.data.astype(dtype)
        return self

    def param_count(self) -> int:
        return int(sum(p.size for p in self.params.values()))

    def flat_parameters(self) -> np.ndarray:
        return np.concatenate([p.data.reshape(-1) for p in self.params.values()])

    def state(self) -> dict:
        return {name: p.data.copy() for name, p in self.params.items()}

    def load_state(self, state: dict) -> None:
        if list(state) != list(self.params):
            raise SpecError("state does not match the model's parameter names")
        for name, arr in state.items():
            p = self.params[name]
            if arr.shape != p.shape:
                raise DimensionError(f"{name}: shape {arr.shape} != {p.shape}")
            p.data = np.array(arr, dtype=p.data.dtype)

    def _lstm(self, name) -> LSTMWeights:
        p = self.params
        return LSTMWeights(p[f"{name}.w_x"], p[f"{name}.w_h"], p[f"{name}.b"])

    def _dense(self, x, name):
        return ops.add_bias(ops.matmul(x, self.params[f"{name}.w"]), self.params[f"{name}.b"])

    def _conv(self, x, name):
        w = self.params[f"{name}.w"]
        y = ops.conv1d(x, w, stride=1, padding=w.shape[2] // 2)
        return ops.relu(ops.add_bias(y, self.params[f"{name}.b"]))

    def forward(self, batch, mode: str = "eval", rng: Optional[np.random.Generator] = None, dropout: Optional[float] = None) -> ModelOutput:
        """Run the network on a ``(B, W, C)`` batch.

        ``mode="train"`` enables dropout, drawing masks from ``rng``;
        ``mode="eval"`` is a pure function of parameters and input.
        ``dropout`` overrides the spec's rate.
        """
        if mode not in ("train", "eval"):
            raise ValueError(f"mode must be 'train' or 'eval', got {mode!r}")
        x = batch if isinstance(batch, Tensor) else Tensor(batch, dtype=self.dtype)
        steps, ch = self.spec.input_shape
        if x.ndim != 3 or x.shape[1:] != (steps, ch):
            raise DimensionError(f"expected batch of shape (B, {steps}, {ch}), got {x.shape}")
        train = mode == "train"
        rate = self.spec.dropout if dropout is None else dropout

        def drop(t):
            return ops.dropout(t, rate, rng, training=train)

        kind = self.kind
        recon = None
        if kind is ArchKind.DNN:
            h = ops.reshape(x, (x.shape[0], steps * ch))
            for i in range(len(self.spec.widths)):
                h = drop(ops.relu(self._dense(h, f"dense{i + 1}")))
            logits = self._dense(h, "logits")
        elif kind is ArchKind.CNN:
            h = ops.maxpool1d(self._conv(x, "conv1"), POOL)
            h = ops.maxpool1d(self._conv(h, "conv2"), POOL)
            h = ops.mean_axis(h, axis=1)
            h = drop(ops.relu(self._dense(h, "dense1")))
            logits = self._dense(h, "logits")
        elif kind is ArchKind.CNN_LSTM:
            h = ops.maxpool1d(self._conv(x, "conv1"), POOL)
            h = ops.lstm(h, self._lstm("lstm1"), return_sequences=False)
            logits = self._dense(drop(h), "logits")
        elif kind is ArchKind.LSTM_CNN:
            h = ops.lstm(x, self._lstm("lstm1"), return_sequences=True)
            h = ops.mean_axis(self._conv(h, "conv1"), axis=1)
            logits = self._dense(drop(h), "logits")
        elif kind is ArchKind.LSTM:
            h = ops.lstm(x, self._lstm("lstm1"), return_sequences=True)
            h = ops.lstm(h, self._lstm("lstm2"), return_sequences=False)
            logits = self._dense(drop(h), "logits")
        else:
            n_layers = len(self.spec.widths)
            h = x
            for i in range(n_layers):
                h = ops.lstm(h, self._lstm(f"enc{i + 1}"), return_sequences=i < n_layers - 1)
            latent = h
            logits = self._dense(drop(latent), "logits")
            h = ops.repeat_steps(latent, steps)
            for i in range(n_layers):
                h = ops.lstm(h, self._lstm(f"dec{i + 1}"), return_sequences=True)
            b, _, hid = h.shape
            flat = self._dense(ops.reshape(h, (b * steps, hid)), "recon")
            recon = ops.reshape(flat, (b, steps, ch))
        return ModelOutput(logits, recon)

    def loss(self, batch, labels, mode: str = "train", rng=None, dropout=None):
        """Training objective; returns ``(loss, output)``."""
        x = batch if isinstance(batch, Tensor) else Tensor(batch, dtype=self.dtype)
        out = self.forward(x, mode=mode, rng=rng, dropout=dropout)
        total = ops.cross_entropy(out.logits, labels)
        if out.reconstruction is not None and self.spec.recon_weight > 0:
            total = ops.add(total, ops.scale(ops.mse(out.reconstruction, x.data), self.spec.recon_weight))
        return total, out

    def predict(self, batch) -> np.ndarray:
        """Arg-max class per row; ties go to the lowest index."""
        return np.argmax(self.forward(batch, mode="eval").logits.data, axis=1)

    def save(self, path) -> None:
        save_checkpoint(path, {"kind": self.kind.value, "spec": self.spec.to_dict()}, self.state())

    @classmethod
    def load(cls, path) -> "Model":
        meta, params = load_checkpoint(path)
        model = build(ModelSpec.from_dict(meta["spec"]), seed=0)
        model.load_state(params)
        return model


def build(spec: ModelSpec, seed: int = 0) -> Model:
    """Instantiate ``spec`` with seeded ``uniform(-1/sqrt(fan_in), 1/sqrt(fan_in))`` weights.

    LSTM tensors use the hidden size as fan-in.
    """
    spec = _validate(spec)
    rng = np.random.default_rng(seed)
    params = {}
    for name, shape, fan_in in _param_shapes(spec):
        bound = 1.0 / np.sqrt(fan_in)
        params[name] = Tensor(rng.uniform(-bound, bound, size=shape), requires_grad=True, name=name)
    return Model(spec, params)


def param_count(model: Model) -> int:
    return model.param_count()
