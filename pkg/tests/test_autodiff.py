import math
import zlib

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from helpers import to_scalar
from seq2drnn.autodiff import (
    Adam,
    DimensionError,
    DomainError,
    OptimizerStateError,
    Tape,
    Tensor,
    add,
    add_n,
    add_row,
    binary_cross_entropy,
    concat,
    cross_entropy,
    dot,
    glorot,
    gradient_check,
    lstm_cell,
    matmul,
    matvec,
    mul,
    numerical_gradient,
    relative_error,
    scale,
    sigmoid,
    softmax,
    stack,
    take_row,
    tanh,
    transpose,
)


def param(rng, *shape):
    return Tensor(rng.normal(size=shape), requires_grad=True)


# -- forward values ---------------------------------------------------------


def test_matvec_identity_and_zero():
    x = Tensor([1.0, 2.0, 3.0])
    np.testing.assert_array_equal(matvec(Tensor(np.eye(3)), x).data, [1, 2, 3])
    np.testing.assert_array_equal(matvec(Tensor(np.zeros((2, 3))), Tensor(np.ones(3))).data, [0, 0])


def test_matvec_shape_error_names_both_shapes():
    with pytest.raises(DimensionError, match=r"\(2, 3\).*\(4,\)"):
        matvec(Tensor(np.zeros((2, 3))), Tensor(np.zeros(4)))


def test_elementwise_values():
    assert tanh(Tensor(0.0)).item() == 0.0
    assert sigmoid(Tensor(0.0)).item() == 0.5
    np.testing.assert_array_equal(concat([Tensor([1.0, 2.0]), Tensor([3.0])]).data, [1, 2, 3])
    with pytest.raises(DimensionError):
        add(Tensor(np.zeros(2)), Tensor(np.zeros(3)))


def test_sigmoid_saturates_without_overflow():
    with np.errstate(all="raise"):
        out = sigmoid(Tensor([-1000.0, 1000.0])).data
    np.testing.assert_allclose(out, [0.0, 1.0])


def test_softmax_cases():
    np.testing.assert_allclose(softmax(Tensor([0.0, 0.0])).data, [0.5, 0.5])
    np.testing.assert_allclose(softmax(Tensor([1000.0, 0.0])).data, [1.0, 0.0], atol=1e-9)
    with pytest.raises(DomainError):
        softmax(Tensor(np.zeros(0)))


@settings(max_examples=200, deadline=None)
@given(arrays(np.float64, st.integers(1, 30), elements=st.floats(-1e3, 1e3)))
def test_softmax_is_a_distribution(x):
    p = softmax(Tensor(x)).data
    assert np.all(p >= 0)
    assert abs(p.sum() - 1.0) <= 1e-9


def test_loss_values():
    assert cross_entropy(Tensor([1.0, 0.0, 0.0]), 0).item() == 0.0
    assert math.isclose(binary_cross_entropy(Tensor(0.5), 1).item(), math.log(2), rel_tol=1e-12)
    with pytest.raises(DomainError):
        cross_entropy(Tensor([0.5, 0.5]), 2)
    with pytest.raises(DomainError):
        binary_cross_entropy(Tensor(0.5), 2)


def test_losses_are_floored_at_zero_probability():
    assert math.isclose(cross_entropy(Tensor([0.0, 1.0]), 0).item(), -math.log(1e-12))
    assert math.isclose(binary_cross_entropy(Tensor(1.0), 0).item(), -math.log(1e-12))


def test_losses_match_direct_formulas():
    rng = np.random.default_rng(3)
    for _ in range(20):
        p = rng.dirichlet(np.ones(6))
        k = int(rng.integers(6))
        assert math.isclose(cross_entropy(Tensor(p), k).item(), -math.log(p[k]), rel_tol=1e-12)
        q = float(rng.uniform(0.01, 0.99))
        y = int(rng.integers(2))
        want = -(y * math.log(q) + (1 - y) * math.log(1 - q))
        assert math.isclose(binary_cross_entropy(Tensor(q), y).item(), want, rel_tol=1e-12)


# -- gradients ----------------------------------------------------------------


def _check(build, tensors, tol=1e-6):
    errs = gradient_check(build, tensors)
    assert max(errs.values()) < tol, errs


def test_matvec_gradient_4x5():
    rng = np.random.default_rng(0)
    W, x = param(rng, 4, 5), param(rng, 5)
    w = rng.normal(size=4)
    _check(lambda: dot(Tensor(w), matvec(W, x)), [W, x])


@pytest.mark.parametrize(
    "name",
    ["matmul", "transpose", "add", "add_n", "add_row", "mul", "scale", "tanh", "sigmoid", "concat", "concat_rows",
     "stack", "take_row", "dot", "softmax"],
)
def test_op_gradients(name):
    rng = np.random.default_rng(zlib.crc32(name.encode()))
    A, B, C = param(rng, 3, 4), param(rng, 4, 2), param(rng, 3, 4)
    u, v = param(rng, 4), param(rng, 4)
    s = param(rng, 7)
    probe = np.random.default_rng(1)
    build, tensors = {
        "matmul": (lambda: matmul(A, B), [A, B]),
        "transpose": (lambda: transpose(A), [A]),
        "add": (lambda: add(A, C), [A, C]),
        "add_n": (lambda: add_n([u, v, u]), [u, v]),
        "add_row": (lambda: add_row(A, u), [A, u]),
        "mul": (lambda: mul(u, v), [u, v]),
        "scale": (lambda: scale(u, -2.5), [u]),
        "tanh": (lambda: tanh(A), [A]),
        "sigmoid": (lambda: sigmoid(u), [u]),
        "concat": (lambda: concat([u, s]), [u, s]),
        "concat_rows": (lambda: concat([A, C], axis=0), [A, C]),
        "stack": (lambda: stack([u, v]), [u, v]),
        "take_row": (lambda: take_row(A, 1), [A]),
        "dot": (lambda: dot(u, v), [u, v]),
        "softmax": (lambda: softmax(s), [s]),
    }[name]
    seed = int(probe.integers(1 << 30))
    _check(lambda: to_scalar(build(), np.random.default_rng(seed)), tensors)


def test_loss_gradients():
    rng = np.random.default_rng(5)
    z = param(rng, 6)
    _check(lambda: cross_entropy(softmax(z), 2), [z])
    a = param(rng, 3)
    w = Tensor(rng.normal(size=3))
    _check(lambda: binary_cross_entropy(sigmoid(dot(w, a)), 1), [a])
    _check(lambda: binary_cross_entropy(sigmoid(dot(w, a)), 0), [a])


def _lstm_reference(x, h, c, W, b):
    z = W @ np.concatenate([x, h]) + b
    H = h.size
    sig = lambda t: 1.0 / (1.0 + np.exp(-t))
    i, f, g, o = sig(z[:H]), sig(z[H : 2 * H]), np.tanh(z[2 * H : 3 * H]), sig(z[3 * H :])
    c_new = f * c + i * g
    return o * np.tanh(c_new), c_new


def test_lstm_cell_matches_reference_formula():
    rng = np.random.default_rng(7)
    x, h, c = rng.normal(size=3), rng.normal(size=4), rng.normal(size=4)
    W, b = rng.normal(size=(16, 7)), rng.normal(size=16)
    h2, c2 = lstm_cell(Tensor(x), Tensor(h), Tensor(c), Tensor(W), Tensor(b))
    rh, rc = _lstm_reference(x, h, c, W, b)
    np.testing.assert_allclose(h2.data, rh, rtol=1e-12, atol=1e-14)
    np.testing.assert_allclose(c2.data, rc, rtol=1e-12, atol=1e-14)


def test_lstm_cell_gradients_both_outputs():
    rng = np.random.default_rng(8)
    x, h, c = param(rng, 3), param(rng, 4), param(rng, 4)
    W, b = param(rng, 16, 7), param(rng, 16)
    wh, wc = Tensor(rng.normal(size=4)), Tensor(rng.normal(size=4))

    def build():
        h2, c2 = lstm_cell(x, h, c, W, b)
        return add(dot(wh, h2), dot(wc, c2))

    _check(build, [x, h, c, W, b])

    def only_h():
        h2, _ = lstm_cell(x, h, c, W, b)
        return dot(wh, h2)

    _check(only_h, [x, h, c, W, b])


def test_quadratic_gradient():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        loss = dot(x, x)
    tape.backward(loss)
    np.testing.assert_array_equal(x.grad, [2.0, 4.0])


def test_backward_rejects_non_scalar():
    x = Tensor([1.0, 2.0], requires_grad=True)
    with Tape() as tape:
        y = tanh(x)
    with pytest.raises(DomainError):
        tape.backward(y)


def test_backward_twice_is_deterministic():
    rng = np.random.default_rng(9)
    W, x = param(rng, 5, 5), param(rng, 5)
    with Tape() as tape:
        loss = dot(x, tanh(matvec(W, tanh(matvec(W, x)))))
    tape.backward(loss)
    first = (W.grad.copy(), x.grad.copy())
    W.zero_grad(), x.zero_grad()
    tape.backward(loss)
    np.testing.assert_array_equal(first[0], W.grad)
    np.testing.assert_array_equal(first[1], x.grad)


def test_leaf_grads_accumulate_until_zeroed():
    x = Tensor([3.0], requires_grad=True)
    for _ in range(2):
        with Tape() as tape:
            loss = dot(x, x)
        tape.backward(loss)
    np.testing.assert_array_equal(x.grad, [12.0])


def test_repeated_cycles_are_bitwise_identical():
    rng = np.random.default_rng(10)
    W, x = param(rng, 4, 4), param(rng, 4)
    losses, grads = [], []
    for _ in range(3):
        W.zero_grad()
        with Tape() as tape:
            loss = cross_entropy(softmax(matvec(W, tanh(x))), 1)
        tape.backward(loss)
        losses.append(loss.item())
        grads.append(W.grad.copy())
    assert losses[0] == losses[1] == losses[2]
    assert all(np.array_equal(grads[0], g) for g in grads)


def test_take_row_accumulates_sparse_rows():
    E = Tensor(np.arange(6.0).reshape(3, 2), requires_grad=True)
    with Tape() as tape:
        loss = add(dot(take_row(E, 1), Tensor([1.0, 1.0])), dot(take_row(E, 1), Tensor([2.0, 0.0])))
    tape.backward(loss)
    np.testing.assert_array_equal(E.grad, [[0, 0], [3, 1], [0, 0]])


def test_adam_step_matches_hand_formula():
    rng = np.random.default_rng(11)
    p = param(rng, 5)
    start = p.data.copy()
    opt = Adam([p], lr=0.1, beta1=0.9, beta2=0.999, epsilon=1e-8)
    m0, v0 = rng.normal(size=5), rng.uniform(0.1, 1.0, size=5)
    opt.m[0], opt.v[0], opt.steps[0] = m0.copy(), v0.copy(), 3
    g = rng.normal(size=5)
    p.grad[...] = g
    p.populated = True
    opt.step()
    m = 0.9 * m0 + 0.1 * g
    v = 0.999 * v0 + 0.001 * g * g
    t = 4
    want = start - 0.1 * (m / (1 - 0.9**t)) / (np.sqrt(v / (1 - 0.999**t)) + 1e-8)
    np.testing.assert_allclose(p.data, want, rtol=1e-14)
    assert opt.steps[0] == 4
    assert not p.grad.any() and not p.populated


def test_adam_without_gradients_is_an_error():
    p = Tensor(np.zeros(3), requires_grad=True)
    with pytest.raises(OptimizerStateError):
        Adam([p]).step()


def test_adam_skips_params_without_gradients():
    a, b = Tensor(np.ones(2), requires_grad=True), Tensor(np.ones(2), requires_grad=True)
    opt = Adam([a, b], lr=0.5)
    with Tape() as tape:
        loss = dot(a, a)
    tape.backward(loss)
    opt.step()
    np.testing.assert_array_equal(b.data, [1.0, 1.0])
    assert opt.steps == [1, 0]
    assert np.all(a.data < 1.0)


def test_glorot_bounds_and_dtype():
    rng = np.random.default_rng(0)
    w = glorot(rng, (30, 20), np.float32)
    assert w.dtype == np.float32
    assert np.abs(w).max() <= math.sqrt(6 / 50)


def test_float32_profile_keeps_dtype():
    W = Tensor(np.ones((2, 2), dtype=np.float32), requires_grad=True)
    x = Tensor(np.ones(2, dtype=np.float32))
    with Tape() as tape:
        loss = dot(x, tanh(matvec(W, x)))
    tape.backward(loss)
    assert loss.data.dtype == np.float32 and W.grad.dtype == np.float32


def test_relative_error_conventions():
    assert relative_error(np.zeros(3), np.full(3, 1e-12)) == 0.0
    assert relative_error(np.array([1.0, 0.0]), np.array([1.0, 0.0])) == 0.0


def test_numerical_gradient_restores_values():
    t = Tensor(np.array([1.0, -2.0]))
    before = t.data.copy()
    g = numerical_gradient(lambda: float(np.sum(t.data**3)), t)
    np.testing.assert_allclose(g, 3 * before**2, rtol=1e-8)
    np.testing.assert_array_equal(t.data, before)
