import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from beamfuse import ops
from beamfuse.tensor import Tensor

from conftest import check_grads


# ---------------------------------------------------------------- softmax

def test_masked_softmax_symmetry():
    out = ops.masked_softmax(Tensor(np.array([[0.0, 0.0]])),
                             np.array([[1.0, 1.0]]))
    assert np.allclose(out.data, [[0.5, 0.5]])


def test_masked_softmax_all_ones_equals_softmax():
    rng = np.random.default_rng(0)
    scores = rng.normal(size=(5, 7))
    masked = ops.masked_softmax(Tensor(scores), np.ones((5, 7)))
    plain = ops.softmax(Tensor(scores))
    assert np.abs(masked.data - plain.data).max() < 1e-12


def test_masked_softmax_scalar_example():
    out = ops.masked_softmax(Tensor(np.array([[1.0, 2.0, 3.0]])),
                             np.array([[1.0, 0.0, 1.0]]))
    assert np.allclose(out.data, [[0.11920, 0.0, 0.88080]], atol=1e-5)
    assert out.data[0, 1] == 0.0


def test_masked_softmax_rows_sum_to_one():
    rng = np.random.default_rng(1)
    for _ in range(20):
        scores = rng.normal(size=(6, 9)) * 50.0
        mask = (rng.random((6, 9)) > 0.4).astype(float)
        mask[:, 0] = 1.0   # keep every row alive
        out = ops.masked_softmax(Tensor(scores.astype(np.float64)), mask)
        assert np.abs(out.data.sum(-1) - 1.0).max() < 1e-12
        assert (out.data[mask == 0] == 0.0).all()


def test_masked_softmax_huge_masked_scores_stay_finite():
    scores = np.array([[1.0, 1e6, 2.0]])
    out = ops.masked_softmax(Tensor(scores), np.array([[1.0, 0.0, 1.0]]))
    assert np.isfinite(out.data).all()
    assert out.data[0, 1] == 0.0


def test_masked_softmax_rejects_dead_row():
    with pytest.raises(ValueError, match="row"):
        ops.masked_softmax(Tensor(np.zeros((2, 3))),
                           np.array([[1.0, 1, 1], [0, 0, 0]]))


def test_masked_softmax_gradient():
    rng = np.random.default_rng(2)
    mask = np.array([[1.0, 0, 1, 1], [1, 1, 0, 0]])
    arrays = {"s": rng.normal(size=(2, 4))}

    def loss(t):
        w = ops.masked_softmax(t["s"], mask)
        return (w * w).sum()

    check_grads(loss, arrays)


# ---------------------------------------------------------------- pooling

def test_adaptive_pool_identity():
    x = np.random.default_rng(3).normal(size=(1, 2, 4, 4))
    out = ops.adaptive_avg_pool(Tensor(x), (4, 4))
    assert np.array_equal(out.data, x)


def test_adaptive_pool_halving_rows():
    x = np.arange(8.0).reshape(1, 1, 8, 1).repeat(4, axis=3)
    out = ops.adaptive_avg_pool(Tensor(x), (4, 4))
    assert np.allclose(out.data[0, 0, :, 0], [0.5, 2.5, 4.5, 6.5])


def test_adaptive_pool_ceil_kernel_truncates():
    # 7 -> 4 uses kernel 2; the last window covers a single row
    x = np.arange(7.0).reshape(1, 1, 7, 1)
    out = ops.adaptive_avg_pool(Tensor(x), (4, 1))
    assert np.allclose(out.data[0, 0, :, 0], [0.5, 2.5, 4.5, 6.0])


def test_adaptive_pool_mean_preserved_when_divisible():
    x = np.random.default_rng(4).normal(size=(2, 3, 8, 6))
    out = ops.adaptive_avg_pool(Tensor(x), (4, 3))
    assert np.isclose(out.data.mean(), x.mean())


def test_adaptive_pool_rejects_upsampling():
    with pytest.raises(ValueError):
        ops.adaptive_avg_pool(Tensor(np.zeros((1, 1, 2, 2))), (4, 4))


def test_adaptive_pool_gradients_both_paths():
    rng = np.random.default_rng(5)
    for shape, target in [((2, 2, 8, 8), (4, 4)), ((1, 3, 7, 5), (4, 3))]:
        arrays = {"x": rng.normal(size=shape)}

        def loss(t):
            y = ops.adaptive_avg_pool(t["x"], target)
            return (y * y).sum()

        check_grads(loss, arrays)


# ---------------------------------------------------------------- dense ops

def test_layer_norm_constant_row_is_zero():
    x = Tensor(np.full((3, 8), 2.5))
    out = ops.layer_norm(x, Tensor(np.ones(8)), Tensor(np.zeros(8)))
    assert np.abs(out.data).max() < 1e-4


def test_layer_norm_normalizes_last_axis():
    rng = np.random.default_rng(6)
    x = rng.normal(2.0, 3.0, size=(4, 16))
    out = ops.layer_norm(Tensor(x), Tensor(np.ones(16)), Tensor(np.zeros(16)))
    assert np.abs(out.data.mean(-1)).max() < 1e-10
    assert np.abs(out.data.std(-1) - 1.0).max() < 1e-3


def test_layer_norm_shape_mismatch():
    with pytest.raises(ValueError):
        ops.layer_norm(Tensor(np.zeros((2, 4))), Tensor(np.ones(3)),
                       Tensor(np.zeros(3)))


def test_layer_norm_gradient():
    rng = np.random.default_rng(7)
    arrays = {"x": rng.normal(size=(3, 6)), "g": rng.normal(size=(6,)),
              "s": rng.normal(size=(6,))}

    def loss(t):
        return (ops.layer_norm(t["x"], t["g"], t["s"]) ** 2.0).sum()

    check_grads(loss, arrays)


def test_affine_identity():
    x = np.random.default_rng(8).normal(size=(5, 4))
    out = ops.affine(Tensor(x), Tensor(np.eye(4)), Tensor(np.zeros(4)))
    assert np.allclose(out.data, x)


def test_affine_shape_error_reports_both_shapes():
    with pytest.raises(ValueError, match=r"\(2, 3\).*\(4, 5\)"):
        ops.affine(Tensor(np.zeros((2, 3))), Tensor(np.zeros((4, 5))))


def test_relu_gelu_sigmoid_gradients():
    rng = np.random.default_rng(9)
    arrays = {"x": rng.normal(size=(4, 5)) + 0.1}

    def loss_relu(t):
        return ops.relu(t["x"]).sum()

    def loss_gelu(t):
        return (ops.gelu(t["x"]) * 2.0).sum()

    def loss_sig(t):
        return (ops.sigmoid(t["x"]) ** 2.0).sum()

    check_grads(loss_relu, arrays)
    check_grads(loss_gelu, arrays)
    check_grads(loss_sig, arrays)


def test_gelu_reference_values():
    # 0.5 * x * (1 + erf(x / sqrt 2)) at a few points
    x = Tensor(np.array([0.0, 1.0, -1.0]))
    out = ops.gelu(x)
    assert np.allclose(out.data, [0.0, 0.841345, -0.158655], atol=1e-6)


def test_dropout_identity_cases():
    x = Tensor(np.random.default_rng(10).normal(size=(3, 3)))
    rng = np.random.default_rng(0)
    assert ops.dropout(x, 0.0, rng, True) is x
    assert ops.dropout(x, 0.5, rng, False) is x


def test_dropout_scales_surviving_entries():
    x = Tensor(np.ones((100, 100)))
    out = ops.dropout(x, 0.25, np.random.default_rng(1), True)
    kept = out.data != 0
    assert np.allclose(out.data[kept], 1.0 / 0.75)
    assert abs(kept.mean() - 0.75) < 0.02


def test_logsumexp_matches_numpy():
    rng = np.random.default_rng(11)
    x = rng.normal(size=(4, 6)) * 10
    out = ops.logsumexp(Tensor(x))
    expect = np.log(np.exp(x - x.max(-1, keepdims=True)).sum(-1)) + x.max(-1)
    assert np.allclose(out.data, expect)

    arrays = {"x": x}

    def loss(t):
        return ops.logsumexp(t["x"]).sum()

    check_grads(loss, arrays)


def test_clip_gradient_zero_outside():
    x = Tensor(np.array([-1.0, 0.5, 2.0]), requires_grad=True)
    ops.clip(x, 0.0, 1.0).sum().backward()
    assert np.array_equal(x.grad, [0.0, 1.0, 0.0])


# ---------------------------------------------------------------- conv2d

def _conv2d_naive(x, w, b, stride, padding):
    bsz, cin, h, wdt = x.shape
    cout, _, kh, kw = w.shape
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding)))
    ho = (h + 2 * padding - kh) // stride + 1
    wo = (wdt + 2 * padding - kw) // stride + 1
    out = np.zeros((bsz, cout, ho, wo))
    for n in range(bsz):
        for o in range(cout):
            for i in range(ho):
                for j in range(wo):
                    patch = xp[n, :, i * stride:i * stride + kh,
                               j * stride:j * stride + kw]
                    out[n, o, i, j] = (patch * w[o]).sum() + b[o]
    return out


@pytest.mark.parametrize("stride,padding", [(1, 0), (1, 1), (2, 1)])
def test_conv2d_matches_naive(stride, padding):
    rng = np.random.default_rng(12)
    x = rng.normal(size=(2, 3, 6, 5))
    w = rng.normal(size=(4, 3, 3, 3))
    b = rng.normal(size=(4,))
    out = ops.conv2d(Tensor(x), Tensor(w), Tensor(b), stride, padding)
    assert np.allclose(out.data, _conv2d_naive(x, w, b, stride, padding),
                       atol=1e-12)


def test_conv2d_gradients():
    rng = np.random.default_rng(13)
    arrays = {"x": rng.normal(size=(2, 2, 5, 5)),
              "w": rng.normal(size=(3, 2, 3, 3)),
              "b": rng.normal(size=(3,))}

    def loss(t):
        y = ops.conv2d(t["x"], t["w"], t["b"], stride=2, padding=1)
        return (y * y).sum()

    check_grads(loss, arrays)


def test_conv2d_channel_mismatch():
    with pytest.raises(ValueError):
        ops.conv2d(Tensor(np.zeros((1, 3, 4, 4))),
                   Tensor(np.zeros((2, 4, 3, 3))))


# ---------------------------------------------------------------- property

@settings(max_examples=30, deadline=None)
@given(st.integers(2, 6), st.integers(2, 8), st.integers(0, 1000))
def test_masked_softmax_row_sums_property(rows, cols, seed):
    rng = np.random.default_rng(seed)
    scores = rng.normal(size=(rows, cols)) * 10
    mask = (rng.random((rows, cols)) > 0.5).astype(float)
    mask[np.arange(rows), rng.integers(0, cols, rows)] = 1.0
    out = ops.masked_softmax(Tensor(scores), mask)
    assert np.abs(out.data.sum(-1) - 1.0).max() < 1e-12
    assert (out.data[mask == 0] == 0.0).all()
