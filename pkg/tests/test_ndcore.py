import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from affinitynet import ndcore as nd
from affinitynet.errors import NonFinite, NotScalar, ShapeMismatch


def test_matmul_identity():
    a = nd.constant([[1, 2], [3, 4]])
    np.testing.assert_array_equal(nd.matmul(a, np.eye(2)).value, [[1, 2], [3, 4]])


def test_relu_definition():
    np.testing.assert_array_equal(nd.relu(nd.constant([[-1, 0, 2]])).value, [[0, 0, 2]])


def test_row_softmax_closed_form():
    out = nd.row_softmax(nd.constant([[0.0, math.log(3.0)]])).value
    np.testing.assert_allclose(out, [[0.25, 0.75]], rtol=0, atol=1e-15)


def test_shape_mismatch():
    with pytest.raises(ShapeMismatch):
        nd.matmul(nd.constant(np.ones((2, 3))), nd.constant(np.ones((2, 3))))
    with pytest.raises(ShapeMismatch):
        nd.add(nd.constant(np.ones((2, 3))), nd.constant(np.ones((3, 2))))


def test_one_row_broadcast_allowed():
    out = nd.add(nd.constant(np.zeros((3, 2))), nd.constant([[1.0, 2.0]]))
    np.testing.assert_array_equal(out.value, [[1, 2]] * 3)


def test_nonfinite_input_rejected():
    with pytest.raises(NonFinite):
        nd.constant([[np.nan, 1.0]])
    with pytest.raises(NonFinite):
        nd.log(nd.constant([[0.0]]))


def test_backward_square_sum():
    w = nd.parameter([[1.0, 2.0]])
    nd.backward(nd.sum(nd.mul(w, w)))
    np.testing.assert_array_equal(w.grad, [[2.0, 4.0]])


def test_backward_linear_map():
    A = nd.parameter([[1.0, 1.0]])
    B = nd.constant([[1.0], [1.0]])
    nd.backward(nd.sum(nd.matmul(A, B)))
    np.testing.assert_array_equal(A.grad, [[1.0, 1.0]])


def test_backward_requires_scalar():
    with pytest.raises(NotScalar):
        nd.backward(nd.parameter(np.ones((2, 1))))


def test_loss_grad_is_one():
    w = nd.parameter([[3.0]])
    loss = nd.square(w)
    nd.backward(loss)
    assert loss.grad[0, 0] == 1.0


def test_two_paths_accumulate():
    x = nd.parameter([[1.5, -2.0]])
    both = nd.sum(nd.add(nd.exp(x), nd.square(x)))
    nd.backward(both)
    g_both = x.grad.copy()

    x1 = nd.parameter([[1.5, -2.0]])
    nd.backward(nd.sum(nd.exp(x1)))
    x2 = nd.parameter([[1.5, -2.0]])
    nd.backward(nd.sum(nd.square(x2)))
    np.testing.assert_allclose(g_both, x1.grad + x2.grad, rtol=1e-15)


def test_leaf_grads_accumulate_until_zeroed():
    w = nd.parameter([[2.0]])
    nd.backward(nd.square(w))
    nd.backward(nd.square(w))
    assert w.grad[0, 0] == 8.0
    nd.zero_grad([w])
    assert w.grad is None


def test_topological_order_parents_first():
    a = nd.parameter([[1.0]])
    b = nd.exp(a)
    c = nd.add(b, a)
    order = nd.topological_order(nd.sum(c))
    pos = {id(n): i for i, n in enumerate(order)}
    for node in order:
        for parent in node.parents:
            assert pos[id(parent)] < pos[id(node)]


def test_finite_diff_quadratic():
    err = nd.finite_diff_check(lambda t: nd.square(t), np.array([[3.0]]), 1e-5)
    assert err <= 1e-8


UNARY = {
    "exp": nd.exp,
    "square": nd.square,
    "relu": nd.relu,
    "row_softmax": nd.row_softmax,
    "row_log_softmax": nd.row_log_softmax,
    "softmax_vector": lambda x: nd.softmax_vector(nd.reshape(x, (1, -1))),
    "row_norm": nd.row_norm,
    "row_normalize": nd.row_normalize,
    "transpose": nd.transpose,
    "cumsum": nd.cumsum,
    "mean0": lambda x: nd.mean(x, axis=0),
    "sum1": lambda x: nd.sum(x, axis=1),
    "col_slice": lambda x: nd.col_slice(x, 1, 3),
    "gather": lambda x: nd.gather_rows(x, [0, 2, 2, 1]),
    "log_abs": lambda x: nd.log(nd.add_scalar(nd.square(x), 0.5)),
    "div": lambda x: nd.div(x, nd.add_scalar(nd.square(x), 1.0)),
}


@pytest.mark.parametrize("name", sorted(UNARY))
def test_unary_op_gradients(name):
    rng = np.random.default_rng(7)
    for _ in range(3):
        x0 = rng.normal(size=(3, 4))
        weights = rng.normal(size=UNARY[name](nd.constant(x0)).shape)
        f = lambda x: nd.sum(nd.mul(UNARY[name](x), weights))  # noqa: E731
        assert nd.finite_diff_check(f, x0, 1e-5) <= 1e-4


def test_binary_op_gradients():
    rng = np.random.default_rng(3)
    A0, B0, row0 = rng.normal(size=(3, 4)), rng.normal(size=(4, 2)), rng.normal(size=(1, 4))
    W = rng.normal(size=(3, 2))
    assert nd.finite_diff_check(lambda a: nd.sum(nd.mul(nd.matmul(a, B0), W)), A0) <= 1e-4
    assert nd.finite_diff_check(lambda b: nd.sum(nd.mul(nd.matmul(A0, b), W)), B0) <= 1e-4
    # broadcast operand gets summed gradient
    assert nd.finite_diff_check(lambda r: nd.sum(nd.square(nd.sub(A0, r))), row0) <= 1e-4
    assert nd.finite_diff_check(lambda r: nd.sum(nd.mul(nd.mul(A0, r), A0)), row0) <= 1e-4


def test_neighbor_pool_gradients():
    rng = np.random.default_rng(11)
    idx = np.array([[0, 2], [1, 0], [2, 2]])
    a0, h0 = rng.random((3, 2)), rng.normal(size=(3, 4))
    G = rng.normal(size=(3, 4))
    assert nd.finite_diff_check(lambda a: nd.sum(nd.mul(nd.neighbor_pool(a, h0, idx), G)), a0) <= 1e-4
    assert nd.finite_diff_check(lambda h: nd.sum(nd.mul(nd.neighbor_pool(a0, h, idx), G)), h0) <= 1e-4


def test_row_normalize_zero_row_maps_to_zero():
    x = nd.parameter([[0.0, 0.0], [3.0, 4.0]])
    out = nd.row_normalize(x)
    np.testing.assert_allclose(out.value, [[0, 0], [0.6, 0.8]])
    nd.backward(nd.sum(out))
    np.testing.assert_array_equal(x.grad[0], [0.0, 0.0])


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 6), st.integers(1, 6), st.integers(1, 6))
def test_shape_algebra(m, k, n):
    a, b = nd.constant(np.ones((m, k))), nd.constant(np.ones((k, n)))
    assert nd.matmul(a, b).shape == (m, n)
    assert nd.transpose(a).shape == (k, m)
    assert nd.sum(a, axis=0).shape == (1, k)
    assert nd.sum(a, axis=1).shape == (m, 1)
    assert nd.row_norm(a).shape == (m, 1)
    assert nd.add(a, nd.constant(np.ones((1, k)))).shape == (m, k)
    assert nd.mul(a, nd.constant(np.ones((m, 1)))).shape == (m, k)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.lists(st.floats(-50, 50), min_size=3, max_size=3), min_size=1, max_size=5))
def test_softmax_rows_sum_to_one(rows):
    s = nd.row_softmax(nd.constant(rows)).value
    np.testing.assert_allclose(s.sum(axis=1), 1.0, atol=1e-12)
    assert (s > 0).all()
