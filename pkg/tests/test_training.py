import random

import numpy as np
import pytest

from limbhar.autodiff import backward
from limbhar.checks import toy_spec
from limbhar.dataset import SynthConfig, make_folds, synth_generate
from limbhar.errors import ContractError, LeakageError, NumericError
from limbhar.features import FeatureConfig, WindowSet, extract_dataset
from limbhar.models import ArchKind, ModelSpec, build
from limbhar.training import (
    AdamConfig,
    AdamState,
    TrainConfig,
    adam_step,
    best_epoch,
    run_crossval,
    should_stop,
    train_one,
)

# ------------------------------------------------------------------ Adam


def _adam(theta, grad, hyper, t=1, state=None):
    p = [np.array(theta, dtype=float)]
    state = state or AdamState.zeros_like(p)
    adam_step(p, [np.array(grad, dtype=float)], state, hyper, t)
    return p[0], state


def test_first_step_is_lr_times_sign():
    theta, _ = _adam([1.0], [2.0], AdamConfig())
    assert theta[0] - 1.0 == pytest.approx(-1e-3, rel=1e-6)
    theta, _ = _adam([1.0], [-0.003], AdamConfig())
    assert theta[0] - 1.0 == pytest.approx(1e-3, rel=1e-4)


def test_zero_gradient_is_fixed_point():
    theta, _ = _adam([0.7, -2.0], [0.0, 0.0], AdamConfig())
    assert theta.tolist() == [0.7, -2.0]


def test_converges_on_quadratic():
    p = [np.array([1.0])]
    state = AdamState.zeros_like(p)
    hyper = AdamConfig(lr=0.01)
    for t in range(1, 501):
        adam_step(p, [2.0 * p[0]], state, hyper, t)
    assert abs(p[0][0]) < 1e-2


def test_default_lr_moves_quadratic_toward_zero():
    p = [np.array([1.0])]
    state = AdamState.zeros_like(p)
    for t in range(1, 501):
        adam_step(p, [2.0 * p[0]], state, AdamConfig(), t)
    assert 0.0 < p[0][0] < 1.0


def test_zero_decay_matches_plain_formula_bitwise():
    rng = np.random.default_rng(0)
    theta, g = rng.normal(size=5), rng.normal(size=5)
    hyper = AdamConfig(lr=0.01, weight_decay=0.0)
    got, _ = _adam(theta, g, hyper)
    m = (1 - 0.9) * g
    v = (1 - 0.999) * g * g
    want = theta - hyper.lr * (m / (1 - 0.9)) / (np.sqrt(v / (1 - 0.999)) + hyper.eps)
    assert got.tobytes() == want.tobytes()


def test_decoupled_decay_on_zero_gradient():
    theta, _ = _adam([2.0], [0.0], AdamConfig(lr=0.1, weight_decay=0.5))
    assert theta[0] == pytest.approx(2.0 - 0.1 * 0.5 * 2.0)


def test_non_finite_gradient_names_parameter():
    p = [np.zeros(2), np.zeros(3)]
    with pytest.raises(NumericError, match="dense1.b"):
        adam_step(p, [np.zeros(2), np.array([0, np.nan, 0])], AdamState.zeros_like(p), AdamConfig(), 1, ["dense1.w", "dense1.b"])


def test_step_index_must_be_positive():
    p = [np.zeros(1)]
    with pytest.raises(ContractError):
        adam_step(p, [np.zeros(1)], AdamState.zeros_like(p), AdamConfig(), 0)


@pytest.mark.parametrize("kind", list(ArchKind))
def test_small_lr_step_decreases_loss(kind):
    for seed in range(20):
        rng = np.random.default_rng(seed)
        spec = toy_spec(kind)
        model = build(spec, seed=seed)
        x, y = rng.normal(size=(4, *spec.input_shape)), rng.integers(0, spec.n_classes, 4)
        params = model.parameters()
        before = model.loss(x, y, mode="eval")[0]
        grads = backward(before, params)
        adam_step([p.data for p in params], [grads[p] for p in params], AdamState.zeros_like([p.data for p in params]), AdamConfig(lr=1e-5), 1)
        assert model.loss(x, y, mode="eval")[0].item() < before.item(), seed


# -------------------------------------------------------- early stopping


def test_should_stop_worked_example():
    losses = [1.0, 0.9, 0.95, 0.96, 0.97]
    assert not should_stop(losses[:3], 2, 1e-4)
    assert should_stop(losses[:4], 2, 1e-4)
    assert best_epoch(losses[:4]) == 2


def test_strictly_decreasing_never_stops():
    losses = list(np.linspace(2.0, 1.0, 200))
    assert not any(should_stop(losses[: k + 1], 1, 1e-4) for k in range(200))


def test_improvement_of_exactly_min_delta_is_not_improvement():
    assert should_stop([1.0, 0.75], 1, 0.25)
    assert not should_stop([1.0, 0.74], 1, 0.25)


def test_best_epoch_earliest_on_ties():
    assert best_epoch([3.0, 1.0, 2.0, 1.0]) == 2


def test_should_stop_needs_history():
    with pytest.raises(ContractError):
        should_stop([], 3, 0.0)


# -------------------------------------------------------------- training


def _windows(n, subjects, seed=0, steps=8, ch=3, classes=4):
    rng = np.random.default_rng(seed)
    y = np.arange(n) % classes
    X = rng.normal(size=(n, steps, ch)) * 0.1 + y[:, None, None] * 0.5
    subj = np.array([subjects[k % len(subjects)] for k in range(n)])
    return WindowSet(X, y, subj)


TINY = TrainConfig(max_epochs=6, patience=3, batch_size=7)


def test_same_seed_identical_history():
    train, val = _windows(30, ["S01", "S02"]), _windows(10, ["S03"], seed=1)
    spec = toy_spec(ArchKind.CNN)
    h1 = train_one(build(spec, 0), train, val, TINY)[1]
    h2 = train_one(build(spec, 0), train, val, TINY)[1]
    assert h1.to_dict() == h2.to_dict()
    assert [r.train_loss for r in h1.epochs] == [r.train_loss for r in h2.epochs]


def test_constant_val_loss_with_patience_one_stops_at_two():
    train, val = _windows(20, ["S01"]), _windows(8, ["S02"])
    spec = ModelSpec("DNN", input_shape=(8, 3), widths=(4,), n_classes=4)
    model = build(spec)
    # lr so small that the validation loss cannot move at float64 print precision
    cfg = TrainConfig(lr=1e-300, weight_decay=0.0, patience=1, max_epochs=50)
    _, hist = train_one(model, train, val, cfg)
    assert len(hist.epochs) == 2 and hist.stop_reason == "early_stop" and hist.best_epoch == 1


def test_best_weights_are_restored():
    train, val = _windows(30, ["S01", "S02"]), _windows(10, ["S03"], seed=1)
    spec = toy_spec(ArchKind.DNN)
    seen = {}
    model = build(spec, 1)

    def snap(record):
        seen[record.epoch] = model.flat_parameters().copy()

    _, hist = train_one(model, train, val, TrainConfig(max_epochs=12, patience=2), on_epoch=snap)
    assert model.flat_parameters().tobytes() == seen[hist.best_epoch].tobytes()


def test_subject_overlap_is_leakage():
    with pytest.raises(LeakageError):
        train_one(build(toy_spec(ArchKind.DNN)), _windows(10, ["S01", "S02"]), _windows(4, ["S02"]), TINY)


def test_empty_split_rejected():
    empty = _windows(4, ["S09"]).select(np.zeros(4, bool))
    with pytest.raises(ContractError):
        train_one(build(toy_spec(ArchKind.DNN)), _windows(10, ["S01"]), empty, TINY)


def test_overfit_tiny_separable_set():
    data = _windows(40, ["S01", "S02"])
    val = _windows(8, ["S03"], seed=2)
    model = build(toy_spec(ArchKind.LSTM), 0)
    train_one(model, data, val, TrainConfig(lr=0.02, max_epochs=80, patience=80, dropout=0.0))
    assert (model.predict(data.X) == data.y).all()


# -------------------------------------------------------------- crossval

SMALL = SynthConfig(n_subjects=6, n_activities=3, n_channels=3, trials=1, duration_s=3.0, seed=2)
FEAT = FeatureConfig()
CV_CFG = TrainConfig(max_epochs=3, patience=2)
CV_SPEC = ModelSpec("DNN", widths=(8,), n_classes=3)


@pytest.fixture(scope="module")
def small_ds():
    return synth_generate(SMALL)


def test_crossval_cardinality_and_aggregate(small_ds):
    plan = make_folds(small_ds.subjects, k=3, n_val=1, seed=0)
    rep = run_crossval(small_ds, CV_SPEC, CV_CFG, plan, FEAT)
    assert len(rep.folds) == 3 and all(f.ok for f in rep.folds)
    f1s = [f.metrics.macro_f1 for f in rep.folds]
    assert abs(rep.aggregate.mean_macro_f1 - sum(f1s) / 3) < 1e-12
    assert set(rep.to_dict()) >= {"aggregate", "folds", "spec", "config"}


def test_crossval_is_deterministic_and_order_free(small_ds):
    plan = make_folds(small_ds.subjects, k=3, n_val=1, seed=0)
    a = run_crossval(small_ds, CV_SPEC, CV_CFG, plan, FEAT).to_dict()
    shuffled = list(small_ds.sequences)
    random.Random(0).shuffle(shuffled)
    ds2 = type(small_ds)(tuple(shuffled), small_ds.subjects, small_ds.modality, small_ds.activity_names)
    b = run_crossval(ds2, CV_SPEC, CV_CFG, plan, FEAT).to_dict()
    assert [f["test_subjects"] for f in a["folds"]] == [f["test_subjects"] for f in b["folds"]]
    c = run_crossval(small_ds, CV_SPEC, CV_CFG, plan, FEAT).to_dict()
    assert a == c


def test_crossval_serial_equals_parallel(small_ds):
    plan = make_folds(small_ds.subjects, k=2, n_val=1, seed=1)
    a = run_crossval(small_ds, CV_SPEC, CV_CFG, plan, FEAT, workers=1, keep_states=True)
    b = run_crossval(small_ds, CV_SPEC, CV_CFG, plan, FEAT, workers=2, keep_states=True)
    assert a.to_dict() == b.to_dict()
    for fa, fb in zip(a.folds, b.folds):
        for k in fa.model_state:
            assert fa.model_state[k].tobytes() == fb.model_state[k].tobytes()


def test_leakage_mutation_leaves_weights_bit_identical(small_ds):
    plan = make_folds(small_ds.subjects, k=3, n_val=1, seed=0)
    windows = extract_dataset(small_ds.sequences, FEAT)
    base = run_crossval(small_ds, CV_SPEC, CV_CFG, plan, FEAT, keep_states=True, windows=windows)
    for fold in plan.folds:
        mutated = WindowSet(windows.X.copy(), windows.y.copy(), windows.subjects.copy(), windows.modality)
        hit = np.isin(mutated.subjects, fold.test)
        mutated.X[hit] = np.random.default_rng(fold.index).normal(size=mutated.X[hit].shape) * 1e3
        again = run_crossval(small_ds, CV_SPEC, CV_CFG, plan, FEAT, keep_states=True, windows=mutated)
        ref, got = base.folds[fold.index], again.folds[fold.index]
        for k in ref.model_state:
            assert ref.model_state[k].tobytes() == got.model_state[k].tobytes()


def test_failed_fold_is_reported(small_ds):
    plan = make_folds(small_ds.subjects, k=3, n_val=1, seed=0)
    windows = extract_dataset(small_ds.sequences, FEAT)
    keep = ~np.isin(windows.subjects, plan.folds[0].val)
    rep = run_crossval(small_ds, CV_SPEC, CV_CFG, plan, FEAT, windows=windows.select(keep))
    assert rep.failed_folds == [0] and rep.aggregate.n_folds == 2


def test_roster_mismatch(small_ds):
    plan = make_folds(["S01", "S02", "S99"], k=2, n_val=0, seed=0)
    with pytest.raises(ContractError):
        run_crossval(small_ds, CV_SPEC, CV_CFG, plan, FEAT)
