import numpy as np
import pytest

from beamfuse.tensor import Tensor, concat, where

from conftest import check_grads


def test_scalar_promotion_and_shape():
    t = Tensor(3.0)
    assert t.shape == (1,)
    with pytest.raises(ValueError):
        Tensor(np.zeros((2, 2))).backward()


def test_sum_gradient_is_ones():
    x = Tensor(np.arange(12.0).reshape(3, 4), requires_grad=True)
    x.sum().backward()
    assert np.array_equal(x.grad, np.ones((3, 4)))


def test_square_gradient():
    x = Tensor(np.array([1.0, -2.0, 3.0]), requires_grad=True)
    (x * x).sum().backward()
    assert np.allclose(x.grad, 2.0 * x.data)


def test_grad_accumulates_across_backward_calls():
    x = Tensor(np.ones(3), requires_grad=True)
    x.sum().backward()
    x.sum().backward()
    assert np.array_equal(x.grad, 2.0 * np.ones(3))


def test_shared_node_counted_once():
    x = Tensor(np.array([2.0]), requires_grad=True)
    y = x * 3.0
    (y + y).backward()
    assert np.allclose(x.grad, [6.0])


def test_broadcast_add_unbroadcasts_grad():
    a = Tensor(np.ones((4, 3)), requires_grad=True)
    b = Tensor(np.ones(3), requires_grad=True)
    (a + b).sum().backward()
    assert a.grad.shape == (4, 3)
    assert np.array_equal(b.grad, 4.0 * np.ones(3))


def test_dtype_mismatch_rejected():
    a = Tensor(np.ones(2, dtype=np.float32))
    b = Tensor(np.ones(2, dtype=np.float64))
    with pytest.raises(TypeError):
        _ = a + b


def test_matmul_batched_shapes():
    a = Tensor(np.random.default_rng(0).normal(size=(2, 4, 3, 5)))
    b = Tensor(np.random.default_rng(1).normal(size=(5, 6)))
    out = a @ b
    assert out.shape == (2, 4, 3, 6)


def test_getitem_scatter_gradient():
    x = Tensor(np.arange(6.0), requires_grad=True)
    x[np.array([1, 4])].sum().backward()
    expect = np.zeros(6)
    expect[[1, 4]] = 1.0
    assert np.array_equal(x.grad, expect)


def test_composite_matches_finite_differences():
    rng = np.random.default_rng(7)
    arrays = {
        "a": rng.normal(size=(3, 4)),
        "b": rng.normal(size=(4, 5)),
        "c": rng.normal(size=(5,)),
    }

    def loss(t):
        y = (t["a"] @ t["b"] + t["c"]) * 0.5
        z = (y * y).sum(axis=1) / (1.0 + (y.exp().sum()))
        return z.mean()

    check_grads(loss, arrays)


def test_reductions_and_shapes_match_fd():
    rng = np.random.default_rng(11)
    arrays = {"x": rng.normal(size=(2, 3, 4))}

    def loss(t):
        x = t["x"]
        y = x.transpose(2, 0, 1).reshape(4, 6)
        return (y.mean(axis=0) * y.sum(axis=0)).sum() + x[0, 1, 2]

    check_grads(loss, arrays)


def test_concat_split_gradient():
    rng = np.random.default_rng(3)
    arrays = {"a": rng.normal(size=(2, 3)), "b": rng.normal(size=(4, 3))}

    def loss(t):
        joined = concat([t["a"], t["b"]], axis=0)
        return (joined * joined).sum()

    check_grads(loss, arrays)


def test_where_routes_gradients():
    cond = np.array([[True], [False]])
    a = Tensor(np.ones((2, 3)), requires_grad=True)
    b = Tensor(np.full((2, 3), 5.0), requires_grad=True)
    out = where(cond, a, b)
    assert np.array_equal(out.data[0], np.ones(3))
    assert np.array_equal(out.data[1], np.full(3, 5.0))
    out.sum().backward()
    assert np.array_equal(a.grad, [[1, 1, 1], [0, 0, 0]])
    assert np.array_equal(b.grad, [[0, 0, 0], [1, 1, 1]])


def test_division_and_power_fd():
    rng = np.random.default_rng(5)
    arrays = {"a": rng.uniform(0.5, 2.0, size=(3, 3)),
              "b": rng.uniform(0.5, 2.0, size=(3, 3))}

    def loss(t):
        return ((t["a"] / t["b"]) ** 1.7).sum() + (1.0 / t["b"]).sum()

    check_grads(loss, arrays)


def test_backward_deterministic():
    rng = np.random.default_rng(13)
    x0 = rng.normal(size=(8, 8))

    def run():
        x = Tensor(x0.copy(), requires_grad=True)
        ((x @ x.transpose(1, 0)).exp().sum() * 1e-3).backward()
        return x.grad.copy()

    assert np.array_equal(run(), run())
