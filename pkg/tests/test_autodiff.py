import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from limbhar.autodiff import (
    LSTMWeights,
    Tensor,
    backward,
    conv1d,
    cross_entropy,
    grad_check,
    load_checkpoint,
    loss,
    lstm,
    lstm_cell,
    matmul,
    mse,
    save_checkpoint,
    softmax,
)
from limbhar.autodiff import ops
from limbhar.autodiff.gradcheck import numerical_grad, relative_error
from limbhar.checks import ARCH_CASES, OP_CASES, run_case
from limbhar.errors import ContractError, DimensionError, LabelError, NumericError


def T(x, grad=False):
    return Tensor(np.asarray(x, dtype=float), requires_grad=grad)


# ---------------------------------------------------------------- matmul


def test_matmul_identity():
    a = T([[1, 2], [3, 4]])
    np.testing.assert_array_equal(matmul(T(np.eye(2)), a).data, a.data)


def test_matmul_hand_arithmetic():
    out = matmul(T([[1, 2], [3, 4]]), T([[5, 6], [7, 8]]))
    np.testing.assert_array_equal(out.data, [[19, 22], [43, 50]])


def test_matmul_grad_matches_central_differences():
    rng = np.random.default_rng(3)
    a, b = T(rng.normal(size=(3, 3)), True), T(rng.normal(size=(3, 3)))
    grads = backward(ops.sum(matmul(a, b)))
    fd = numerical_grad(lambda a, b: ops.sum(matmul(a, b)), [a, b], 0, 1e-5)
    assert relative_error(grads[a], fd).max() < 1e-6


def test_matmul_shape_mismatch():
    with pytest.raises(DimensionError):
        matmul(T(np.ones((2, 3))), T(np.ones((2, 3))))


def _naive_matmul(a, b):
    out = np.zeros((a.shape[0], b.shape[1]))
    for i in range(a.shape[0]):
        for j in range(b.shape[1]):
            for k in range(a.shape[1]):
                out[i, j] += a[i, k] * b[k, j]
    return out


def test_matmul_matches_loop_oracle():
    rng = np.random.default_rng(11)
    a, b = rng.normal(size=(5, 7)), rng.normal(size=(7, 4))
    assert np.abs(matmul(T(a), T(b)).data - _naive_matmul(a, b)).max() < 1e-12


# ---------------------------------------------------------------- conv1d


def _naive_conv(x, w, stride=1, padding=0):
    t, c = x.shape
    k, _, width = w.shape
    xp = np.zeros((t + 2 * padding, c))
    xp[padding : padding + t] = x
    t_out = (t + 2 * padding - width) // stride + 1
    out = np.zeros((t_out, k))
    for o in range(t_out):
        for kk in range(k):
            acc = 0.0
            for cc in range(c):
                for q in range(width):
                    acc += xp[o * stride + q, cc] * w[kk, cc, q]
            out[o, kk] = acc
    return out


def test_conv1d_constant_signal():
    out = conv1d(T(np.ones((5, 1))), T(np.ones((1, 1, 3))))
    np.testing.assert_array_equal(out.data[:, 0], [3, 3, 3])


def test_conv1d_impulse_reverses_kernel():
    x = T(np.array([0, 0, 1, 0, 0], dtype=float)[:, None])
    out = conv1d(x, T(np.array([1.0, 2.0, 3.0]).reshape(1, 1, 3)))
    np.testing.assert_array_equal(out.data[:, 0], [3, 2, 1])


@pytest.mark.parametrize("stride,padding", [(1, 0), (2, 0), (1, 1), (3, 2)])
def test_conv1d_matches_naive_oracle(stride, padding):
    rng = np.random.default_rng(stride * 10 + padding)
    x, w = rng.normal(size=(10, 3)), rng.normal(size=(4, 3, 3))
    out = conv1d(T(x), T(w), stride, padding)
    assert out.shape == ((10 + 2 * padding - 3) // stride + 1, 4)
    assert np.abs(out.data - _naive_conv(x, w, stride, padding)).max() < 1e-12


def test_conv1d_batched_rows_match_single():
    rng = np.random.default_rng(5)
    x, w = rng.normal(size=(3, 10, 2)), T(rng.normal(size=(4, 2, 5)))
    batched = conv1d(T(x), w, 1, 2).data
    for i in range(3):
        np.testing.assert_allclose(batched[i], conv1d(T(x[i]), w, 1, 2).data, atol=1e-12)


def test_conv1d_kernel_too_wide():
    with pytest.raises(DimensionError):
        conv1d(T(np.ones((3, 1))), T(np.ones((1, 1, 4))))


# ------------------------------------------------------------------ LSTM


def _lstm_w(rng, n_in, hid, scale=0.5):
    return LSTMWeights(
        T(rng.normal(0, scale, (n_in, 4 * hid)), True),
        T(rng.normal(0, scale, (hid, 4 * hid)), True),
        T(rng.normal(0, scale, 4 * hid), True),
    )


def test_lstm_cell_all_zero():
    w = LSTMWeights(T(np.zeros((3, 8))), T(np.zeros((2, 8))), T(np.zeros(8)))
    h, c = lstm_cell(T(np.zeros(3)), T(np.zeros(2)), T(np.zeros(2)), w)
    np.testing.assert_array_equal(h.data, 0)
    np.testing.assert_array_equal(c.data, 0)


def test_lstm_cell_forget_bias_alone_keeps_zero_state():
    b = np.zeros(8)
    b[2:4] = 2.5  # forget gate block
    w = LSTMWeights(T(np.zeros((3, 8))), T(np.zeros((2, 8))), T(b))
    h, c = lstm_cell(T(np.zeros(3)), T(np.zeros(2)), T(np.zeros(2)), w)
    np.testing.assert_array_equal(c.data, 0)
    np.testing.assert_array_equal(h.data, 0)


def test_lstm_cell_gradients_match_finite_differences():
    rng = np.random.default_rng(0)
    w = _lstm_w(rng, 3, 4)
    x, h, c = T(rng.normal(size=3)), T(rng.normal(size=4)), T(rng.normal(size=4))
    err = grad_check(lambda wx, wh, b: ops.sum(lstm_cell(x, h, c, LSTMWeights(wx, wh, b))[0]), list(w))
    assert err < 1e-4


def test_lstm_cell_param_count_formula():
    n_in, hid = 28, 128
    w = _lstm_w(np.random.default_rng(0), n_in, hid)
    assert sum(p.size for p in w) == 4 * (hid * (n_in + hid) + hid) == 80384


def test_fused_lstm_matches_unrolled_cells():
    rng = np.random.default_rng(1)
    w = _lstm_w(rng, 3, 5)
    x = rng.normal(size=(2, 6, 3))
    fused = lstm(T(x, True), w, return_sequences=True)
    h = T(np.zeros((2, 5)))
    c = T(np.zeros((2, 5)))
    steps = []
    for t in range(6):
        h, c = lstm_cell(T(x[:, t]), h, c, w)
        steps.append(h.data)
    np.testing.assert_allclose(fused.data, np.stack(steps, axis=1), atol=1e-12)


def test_fused_lstm_gradients_match_unrolled():
    rng = np.random.default_rng(2)
    w = _lstm_w(rng, 3, 4)
    x = rng.normal(size=(2, 5, 3))
    g_fused = backward(ops.sum(lstm(T(x), w, return_sequences=False)), list(w))
    fused = {k: g_fused[p].copy() for k, p in zip("xhb", w)}
    h, c = T(np.zeros((2, 4))), T(np.zeros((2, 4)))
    for t in range(5):
        h, c = lstm_cell(T(x[:, t]), h, c, w)
    g_cell = backward(ops.sum(h), list(w))
    for k, p in zip("xhb", w):
        np.testing.assert_allclose(fused[k], g_cell[p], atol=1e-12)


def test_lstm_weight_shape_error():
    rng = np.random.default_rng(0)
    with pytest.raises(DimensionError):
        lstm(T(rng.normal(size=(1, 4, 2))), _lstm_w(rng, 3, 4))


# ------------------------------------------------------------------ loss


def test_uniform_logits_give_log_n():
    for target in range(8):
        assert math.isclose(cross_entropy(T(np.zeros(8)), target).item(), math.log(8), rel_tol=1e-14)


def test_mse_identity_is_zero():
    x = T(np.random.default_rng(0).normal(size=(4, 3)))
    assert mse(x, x.data).item() == 0.0


def test_cross_entropy_matches_naive_softmax():
    rng = np.random.default_rng(4)
    z = rng.normal(size=(6, 8)) * 3
    y = rng.integers(0, 8, size=6)
    naive = np.mean([-math.log(math.exp(z[i, y[i]]) / sum(math.exp(v) for v in z[i])) for i in range(6)])
    assert abs(loss("cross_entropy", T(z), y).item() - naive) < 1e-12


def test_cross_entropy_label_out_of_range():
    with pytest.raises(LabelError):
        cross_entropy(T(np.zeros((2, 8))), np.array([0, 8]))


def test_unknown_loss_kind():
    with pytest.raises(ContractError):
        loss("hinge", T(np.zeros(3)), 0)


@settings(max_examples=50, deadline=None)
@given(arrays(np.float64, (4, 8), elements=st.floats(-50, 50)), st.integers(0, 7))
def test_softmax_normalised_and_ce_nonnegative(z, target):
    p = softmax(z)
    assert np.abs(p.sum(axis=1) - 1.0).max() < 1e-12
    assert cross_entropy(T(z), np.full(4, target)).item() >= 0.0


# -------------------------------------------------------------- backward


def test_backward_square_sum():
    x = T([1.0, 2.0], True)
    grads = backward(ops.sum(ops.mul(x, x)))
    np.testing.assert_array_equal(grads[x], [2.0, 4.0])
    np.testing.assert_array_equal(x.grad, [2.0, 4.0])


def test_backward_unused_parameter_is_zero():
    x, p = T([1.0, 2.0], True), T([[3.0, 4.0]], True)
    grads = backward(ops.sum(x), params=[x, p])
    np.testing.assert_array_equal(grads[p], np.zeros((1, 2)))


def test_backward_rejects_non_scalar_root():
    with pytest.raises(ContractError):
        backward(T([1.0, 2.0], True) * 2.0)


def test_backward_twice_is_identical():
    rng = np.random.default_rng(0)
    w = _lstm_w(rng, 3, 4)
    root = ops.sum(lstm(T(rng.normal(size=(2, 5, 3))), w, return_sequences=True))
    first = {k: v.copy() for k, v in backward(root).items()}
    second = backward(root)
    for k in first:
        np.testing.assert_array_equal(first[k], second[k])


def test_composite_dnn_gradients():
    rng = np.random.default_rng(7)
    w1, b1 = T(rng.normal(size=(6, 5)), True), T(rng.normal(size=5), True)
    w2, b2 = T(rng.normal(size=(5, 4)), True), T(rng.normal(size=4), True)
    x = T(rng.normal(size=(3, 6)))
    y = np.array([0, 3, 1])

    def net(w1, b1, w2, b2):
        h = ops.tanh(ops.add_bias(matmul(x, w1), b1))
        return cross_entropy(ops.add_bias(matmul(h, w2), b2), y)

    assert grad_check(net, [w1, b1, w2, b2]) < 1e-4


def test_non_finite_forward_is_an_error():
    with pytest.raises(NumericError):
        T([1.0]) * np.inf
    with pytest.raises(NumericError):
        Tensor([np.nan])


# ------------------------------------------------------------- grad_check


def test_grad_check_exact_for_linear():
    rng = np.random.default_rng(0)
    a = T(rng.normal(size=(3, 4)), True)
    c = T(rng.normal(size=(3, 4)))
    assert grad_check(lambda a: ops.sum(ops.mul(a, c)), [a]) < 1e-9


def test_grad_check_rejects_zero_eps():
    with pytest.raises(ContractError):
        grad_check(lambda a: ops.sum(a), [T([1.0], True)], eps=0.0)


@pytest.mark.parametrize("name", sorted(OP_CASES))
@pytest.mark.parametrize("seed", range(10))
def test_every_op_passes_finite_differences(name, seed):
    assert run_case(OP_CASES[name], seed)[0] < 1e-4


@pytest.mark.parametrize("seed", range(2))
def test_autoencoder_gradient_sits_at_roundoff_floor(seed):
    # central differences on an O(1) loss cannot resolve better than ~ulp(loss)/eps;
    # a wrong backward shows up orders of magnitude above that
    fn, params = ARCH_CASES["arch:LSTM_AE"](np.random.default_rng(seed))
    floor = 4 * np.spacing(abs(fn().item())) / 1e-5
    assert run_case(ARCH_CASES["arch:LSTM_AE"], seed)[1] < floor


def test_dropout_disabled_in_eval():
    x = T(np.ones((3, 3)))
    assert ops.dropout(x, 0.5, None, training=False) is x


def test_dropout_reproducible_with_seed():
    x = T(np.ones((50, 4)))
    a = ops.dropout(x, 0.5, np.random.default_rng(3)).data
    b = ops.dropout(x, 0.5, np.random.default_rng(3)).data
    np.testing.assert_array_equal(a, b)
    assert set(np.unique(a)) <= {0.0, 2.0}


# ------------------------------------------------------------ checkpoint


def test_checkpoint_round_trip_bit_exact(tmp_path):
    rng = np.random.default_rng(0)
    params = {"a.w": rng.normal(size=(3, 4)), "a.b": rng.normal(size=4), "scalar": np.array(np.pi)}
    path = tmp_path / "m.ckpt"
    save_checkpoint(path, {"kind": "DNN"}, params)
    meta, loaded = load_checkpoint(path)
    assert meta == {"kind": "DNN"}
    assert list(loaded) == list(params)
    for k in params:
        assert loaded[k].tobytes() == params[k].tobytes()
        assert loaded[k].shape == params[k].shape
