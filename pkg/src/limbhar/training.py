"""Adam training with early stopping, and subject-wise cross-validation."""

from __future__ import annotations

import logging
from concurrent.futures import ProcessPoolExecutor
from dataclasses import asdict, dataclass, field, replace
from typing import Callable, Optional, Sequence

import numpy as np

from .autodiff.tensor import backward
from .dataset import Dataset, FoldPlan
from .errors import ContractError, HarError, LeakageError, NumericError
from .features import FeatureConfig, WindowSet, apply_norm, extract_dataset, fit_norm
from .metrics import CVAggregate, MetricsReport, aggregate_cv, confusion, metrics
from .models import Model, ModelSpec, build

log = logging.getLogger(__name__)

PRECISIONS = ("float64", "float32")


@dataclass(frozen=True)
class AdamConfig:
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 0.0

    def __post_init__(self):
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ContractError("Adam betas must lie in [0, 1)")
        if self.lr <= 0 or self.eps <= 0 or self.weight_decay < 0:
            raise ContractError("lr and eps must be positive, weight_decay non-negative")


@dataclass(frozen=True)
class TrainConfig:
    batch_size: int = 20
    lr: float = 1e-3
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    weight_decay: float = 1e-4
    dropout: float = 0.2
    max_epochs: int = 200
    patience: int = 10
    min_delta: float = 1e-4
    seed: int = 0
    precision: str = "float64"

    def __post_init__(self):
        if self.batch_size < 1:
            raise ContractError("batch_size must be at least 1")
        if self.patience < 1 or self.max_epochs < 1:
            raise ContractError("patience and max_epochs must be at least 1")
        if not 0.0 <= self.dropout < 1.0:
            raise ContractError("dropout must be in [0, 1)")
        if self.min_delta < 0:
            raise ContractError("min_delta must be non-negative")
        if self.precision not in PRECISIONS:
            raise ContractError(f"precision must be one of {PRECISIONS}")
        self.adam  # validates the optimiser fields

    @property
    def adam(self) -> AdamConfig:
        return AdamConfig(self.lr, self.beta1, self.beta2, self.eps, self.weight_decay)


# ------------------------------------------------------------------------- Adam


@dataclass
class AdamState:
    m: list
    v: list
    t: int = 0

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray]) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], 0)


def adam_step(params, grads, state: AdamState, hyper: AdamConfig, t: int, names: Optional[Sequence[str]] = None):
    """One in-place Adam update with decoupled weight decay.

    ``params`` and ``grads`` are aligned lists of arrays; ``t`` is the 1-based
    step index used for bias correction.  Returns ``(params, state)``.
    """
    if t < 1:
        raise ContractError(f"Adam step index must be >= 1, got {t}")
    if not (len(params) == len(grads) == len(state.m)):
        raise ContractError("params, grads and optimiser state are misaligned")
    for k, g in enumerate(grads):
        if not np.isfinite(g).all():
            label = names[k] if names is not None else f"#{k}"
            raise NumericError(f"non-finite gradient for parameter {label}")
    b1, b2 = hyper.beta1, hyper.beta2
    c1 = 1.0 - b1**t
    c2 = 1.0 - b2**t
    for p, g, m, v in zip(params, grads, state.m, state.v):
        if p.shape != g.shape:
            raise ContractError(f"gradient shape {g.shape} != parameter shape {p.shape}")
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        step = hyper.lr * (m / c1) / (np.sqrt(v / c2) + hyper.eps)
        if hyper.weight_decay:
            p -= step + hyper.lr * hyper.weight_decay * p
        else:
            p -= step
    state.t = t
    return params, state


# --------------------------------------------------------------- early stopping


@dataclass(frozen=True)
class EpochRecord:
    epoch: int
    train_loss: float
    val_loss: float
    val_macro_f1: float


@dataclass
class TrainHistory:
    """Per-epoch records (epochs numbered from 1)."""

    epochs: list = field(default_factory=list)
    best_epoch: int = 0
    stop_reason: str = ""

    @property
    def val_losses(self) -> list:
        return [r.val_loss for r in self.epochs]

    def to_dict(self) -> dict:
        return {
            "best_epoch": self.best_epoch,
            "stop_reason": self.stop_reason,
            "epochs": [asdict(r) for r in self.epochs],
        }


def best_epoch(val_losses: Sequence[float]) -> int:
    """1-based epoch of the minimum validation loss, earliest on ties."""
    return int(np.argmin(np.asarray(val_losses))) + 1


def should_stop(history, patience: int, min_delta: float) -> bool:
    """True once ``patience`` consecutive epochs failed to beat the best loss by more than ``min_delta``."""
    losses = history.val_losses if isinstance(history, TrainHistory) else list(history)
    if not losses:
        raise ContractError("should_stop needs at least one recorded epoch")
    ref = losses[0]
    stale = 0
    for loss in losses[1:]:
        if loss < ref - min_delta:
            ref = loss
            stale = 0
        else:
            stale += 1
    return stale >= patience


# --------------------------------------------------------------------- training


def _batches(n: int, size: int, order: np.ndarray):
    for start in range(0, n, size):
        yield order[start : start + size]


def evaluate(model: Model, windows: WindowSet, batch_size: int = 64):
    """Eval-mode loss and arg-max predictions over ``windows``."""
    total = 0.0
    preds = []
    idx = np.arange(len(windows))
    for sel in _batches(len(windows), batch_size, idx):
        loss, out = model.loss(windows.X[sel], windows.y[sel], mode="eval")
        total += float(loss.data) * len(sel)
        preds.append(np.argmax(out.logits.data, axis=1))
    return total / len(windows), np.concatenate(preds)


class Trainer:
    """Epoch-level driver shared by :func:`train_one` and ad-hoc loops."""

    def __init__(self, model: Model, cfg: TrainConfig):
        self.model = model
        self.cfg = cfg
        self.rng = np.random.default_rng(cfg.seed)
        self.names = list(model.params)
        self.state = AdamState.zeros_like([p.data for p in model.parameters()])
        self.step = 0

    def epoch(self, train: WindowSet) -> float:
        cfg, model = self.cfg, self.model
        params = model.parameters()
        order = self.rng.permutation(len(train))
        total = 0.0
        for sel in _batches(len(train), cfg.batch_size, order):
            loss, _ = model.loss(train.X[sel], train.y[sel], mode="train", rng=self.rng, dropout=cfg.dropout)
            grads = backward(loss, params)
            self.step += 1
            adam_step([p.data for p in params], [grads[p] for p in params], self.state, cfg.adam, self.step, self.names)
            total += float(loss.data) * len(sel)
        return total / len(train)


def _check_splits(train: WindowSet, val: WindowSet) -> None:
    if len(train) == 0 or len(val) == 0:
        raise ContractError("train and validation splits must both be non-empty")
    overlap = train.subject_set & val.subject_set
    if overlap:
        raise LeakageError(f"subjects in both train and validation: {sorted(overlap)}")


def train_one(model: Model, train: WindowSet, val: WindowSet, cfg: TrainConfig, on_epoch: Optional[Callable] = None):
    """Train with Adam and early stopping on validation loss.

    Returns ``(model, history)`` with the model holding its best-epoch weights.
    """
    _check_splits(train, val)
    trainer = Trainer(model, cfg)
    history = TrainHistory()
    best_loss = np.inf
    best_state = model.state()
    for epoch in range(1, cfg.max_epochs + 1):
        train_loss = trainer.epoch(train)
        val_loss, preds = evaluate(model, val)
        val_f1 = metrics(confusion(preds, val.y, model.spec.n_classes)).macro_f1
        history.epochs.append(EpochRecord(epoch, train_loss, val_loss, val_f1))
        if val_loss < best_loss:
            best_loss = val_loss
            best_state = model.state()
            history.best_epoch = epoch
        if on_epoch is not None:
            on_epoch(history.epochs[-1])
        if should_stop(history, cfg.patience, cfg.min_delta):
            history.stop_reason = "early_stop"
            break
    else:
        history.stop_reason = "max_epochs"
    model.load_state(best_state)
    return model, history


# ---------------------------------------------------------------- cross-val


@dataclass
class FoldResult:
    index: int
    test_subjects: tuple
    val_subjects: tuple
    train_subjects: tuple
    metrics: Optional[MetricsReport] = None
    history: Optional[TrainHistory] = None
    error: Optional[str] = None
    error_code: int = 0
    model_state: Optional[dict] = field(default=None, repr=False)

    @property
    def ok(self) -> bool:
        return self.error is None

    def to_dict(self) -> dict:
        return {
            "fold": self.index,
            "test_subjects": list(self.test_subjects),
            "val_subjects": list(self.val_subjects),
            "train_subjects": list(self.train_subjects),
            "error": self.error,
            "metrics": self.metrics.to_dict() if self.metrics else None,
            "history": self.history.to_dict() if self.history else None,
        }


@dataclass
class CVReport:
    spec: ModelSpec
    modality: str
    folds: list
    aggregate: Optional[CVAggregate]
    config: dict
    seed: int

    @property
    def failed_folds(self) -> list:
        return [f.index for f in self.folds if not f.ok]

    def to_dict(self) -> dict:
        return {
            "architecture": self.spec.kind.value,
            "modality": self.modality,
            "seed": self.seed,
            "config": self.config,
            "spec": self.spec.to_dict(),
            "failed_folds": self.failed_folds,
            "aggregate": self.aggregate.to_dict() if self.aggregate else None,
            "folds": [f.to_dict() for f in self.folds],
        }


def _run_fold(windows: WindowSet, spec: ModelSpec, cfg: TrainConfig, fold, keep_state: bool) -> FoldResult:
    result = FoldResult(fold.index, fold.test, fold.val, fold.train)
    try:
        train = windows.of_subjects(fold.train)
        val = windows.of_subjects(fold.val)
        test = windows.of_subjects(fold.test)
        if len(train) == 0 or len(test) == 0:
            raise ContractError(f"fold {fold.index}: empty train or test split")
        stats = fit_norm(train)
        train, val, test = (apply_norm(s, stats) for s in (train, val, test))
        fold_cfg = replace(cfg, seed=cfg.seed + fold.index)
        model = build(spec, seed=fold_cfg.seed).astype(cfg.precision)
        model, history = train_one(model, train, val, fold_cfg)
        result.history = history
        result.metrics = metrics(confusion(model.predict(test.X), test.y, spec.n_classes))
        if keep_state:
            result.model_state = model.state()
    except HarError as exc:
        log.error("fold %d failed: %s", fold.index, exc)
        result.error = f"{type(exc).__name__}: {exc}"
        result.error_code = exc.exit_code
    return result


def run_crossval(
    dataset: Dataset,
    spec: ModelSpec,
    cfg: TrainConfig,
    fold_plan: FoldPlan,
    feature_cfg: FeatureConfig = FeatureConfig(),
    workers: int = 1,
    keep_states: bool = False,
    windows: Optional[WindowSet] = None,
) -> CVReport:
    """Subject-wise cross-validation of one architecture on one dataset.

    Fold ``i`` fits normalisation on its training subjects only and trains
    with seed ``cfg.seed + i``, so serial and parallel runs agree exactly.
    ``windows`` may supply pre-extracted (un-normalised) features.
    """
    if set(fold_plan.roster) != set(dataset.subjects):
        raise ContractError("fold plan roster does not match the dataset subjects")
    if windows is None:
        windows = extract_dataset(dataset.sequences, feature_cfg)
    spec = replace(spec, input_shape=windows.X.shape[1:])
    jobs = [(windows, spec, cfg, fold, keep_states) for fold in fold_plan.folds]
    if workers > 1 and len(jobs) > 1:
        with ProcessPoolExecutor(max_workers=min(workers, len(jobs))) as pool:
            results = list(pool.map(_run_fold, *zip(*jobs)))
    else:
        results = [_run_fold(*job) for job in jobs]
    ok = [r.metrics for r in results if r.ok]
    config = {"train": asdict(cfg), "features": asdict(feature_cfg), "folds": {"k": fold_plan.k, "n_val": fold_plan.n_val, "seed": fold_plan.seed}}
    return CVReport(spec, dataset.modality, results, aggregate_cv(ok) if ok else None, config, cfg.seed)
