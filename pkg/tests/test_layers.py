import numpy as np
import pytest

from hblab_app.core import layers as L
from hblab_app.core.errors import ContractError


def _numeric_grad(f, x, eps=1e-6):
    grad = np.zeros_like(x)
    it = np.nditer(x, flags=["multi_index"])
    for _ in it:
        idx = it.multi_index
        orig = x[idx]
        x[idx] = orig + eps
        hi = f()
        x[idx] = orig - eps
        lo = f()
        x[idx] = orig
        grad[idx] = (hi - lo) / (2 * eps)
    return grad


def _rel_err(a, b):
    return np.max(np.abs(a - b)) / max(np.max(np.abs(a)), np.max(np.abs(b)), 1e-12)


def test_same_padding_puts_the_extra_row_last():
    assert L.conv_padding(2, 2, "same") == ((0, 1), (0, 1))
    assert L.conv_padding(3, 3, "same") == ((1, 1), (1, 1))
    assert L.conv_output_hw(4, 16, 2, 2, 1, "same") == (4, 16)
    assert L.conv_output_hw(4, 16, 2, 2, 1, "valid") == (3, 15)
    with pytest.raises(ContractError):
        L.conv_output_hw(1, 1, 2, 2, 1, "valid")


def test_conv_of_ones_with_a_ones_kernel_counts_the_window():
    x = np.ones((1, 2, 2, 1))
    out, _ = L.conv2d_forward(x, np.ones((2, 2, 1, 1)), np.zeros(1))
    # zero padding after the last row and column
    assert np.array_equal(out[0, :, :, 0], np.array([[4.0, 2.0], [2.0, 1.0]]))


def test_conv_matches_a_direct_loop(rng):
    x = rng.standard_normal((2, 3, 4, 2))
    w = rng.standard_normal((2, 2, 2, 3))
    b = rng.standard_normal(3)
    out, _ = L.conv2d_forward(x, w, b)
    xp = np.pad(x, ((0, 0), (0, 1), (0, 1), (0, 0)))
    ref = np.zeros((2, 3, 4, 3))
    for n in range(2):
        for i in range(3):
            for j in range(4):
                ref[n, i, j] = np.tensordot(xp[n, i:i + 2, j:j + 2, :], w, axes=3) + b
    assert np.allclose(out, ref, atol=1e-12)


def test_conv_rejects_mismatched_channels(rng):
    with pytest.raises(ContractError):
        L.conv2d_forward(rng.standard_normal((1, 2, 2, 3)), rng.standard_normal((2, 2, 2, 4)), np.zeros(4))
    with pytest.raises(ContractError):
        L.conv2d_forward(rng.standard_normal((2, 2, 3)), rng.standard_normal((2, 2, 3, 4)), np.zeros(4))


@pytest.mark.parametrize("stride, padding", [(1, "same"), (1, "valid"), (2, "same")])
def test_conv_gradients_match_finite_differences(rng, stride, padding):
    x = rng.standard_normal((2, 3, 4, 2))
    w = rng.standard_normal((2, 2, 2, 3))
    b = rng.standard_normal(3)
    out, cache = L.conv2d_forward(x, w, b, stride, padding)
    g = rng.standard_normal(out.shape)
    gx, gw, gb = L.conv2d_backward(g, cache)

    def f():
        return float(np.sum(L.conv2d_forward(x, w, b, stride, padding)[0] * g))

    assert _rel_err(gx, _numeric_grad(f, x)) < 1e-6
    assert _rel_err(gw, _numeric_grad(f, w)) < 1e-6
    assert _rel_err(gb, _numeric_grad(f, b)) < 1e-6


def test_fully_connected_gradients_match_finite_differences(rng):
    x = rng.standard_normal((3, 2, 2, 3))
    w = rng.standard_normal((12, 5))
    b = rng.standard_normal(5)
    out, cache = L.fully_connected_forward(x, w, b)
    assert out.shape == (3, 1, 1, 5)
    g = rng.standard_normal(out.shape)
    gx, gw, gb = L.fully_connected_backward(g, cache)

    def f():
        return float(np.sum(L.fully_connected_forward(x, w, b)[0] * g))

    assert _rel_err(gx, _numeric_grad(f, x)) < 1e-6
    assert _rel_err(gw, _numeric_grad(f, w)) < 1e-6
    assert _rel_err(gb, _numeric_grad(f, b)) < 1e-6


def test_relu():
    x = np.array([[-1.0, 0.0, 2.0]])
    out, cache = L.relu_forward(x)
    assert np.array_equal(out, [[0.0, 0.0, 2.0]])
    assert np.array_equal(L.relu_backward(np.ones_like(x), cache), [[0.0, 0.0, 1.0]])


def test_dropout_infer_is_identity_and_train_keeps_half(rng):
    x = np.ones((1, 1, 1, 100_000))
    out, cache = L.dropout_forward(x, 0.5, "infer", None)
    assert out is x and cache is None
    out, mask = L.dropout_forward(x, 0.5, "train", rng)
    kept = np.count_nonzero(out) / out.size
    assert abs(kept - 0.5) < 0.01
    assert set(np.unique(out)) <= {0.0, 2.0}
    assert np.array_equal(L.dropout_backward(np.ones_like(x), mask), mask)


def test_dropout_contracts(rng):
    x = np.ones((1, 4))
    with pytest.raises(ContractError):
        L.dropout_forward(x, 1.0, "train", rng)
    with pytest.raises(ContractError):
        L.dropout_forward(x, 0.5, "train", None)
    with pytest.raises(ContractError):
        L.dropout_forward(x, 0.5, "eval", rng)
    out, cache = L.dropout_forward(x, 0.0, "train", rng)
    assert out is x and cache is None


def test_softmax_is_stable_for_large_logits():
    p = L.softmax(np.array([[1000.0, 0.0, -1000.0]]))
    assert np.all(np.isfinite(p))
    assert p[0, 0] == pytest.approx(1.0)
    assert np.sum(p) == pytest.approx(1.0)


def test_cross_entropy_loss_and_gradient(rng):
    loss, grad = L.softmax_cross_entropy(np.zeros((2, 4)), [1, 3])
    assert loss == pytest.approx(np.log(4.0))
    assert np.allclose(grad[0], [0.125, -0.375, 0.125, 0.125])

    z = rng.standard_normal((3, 5))
    labels = np.array([0, 4, 2])
    _, grad = L.softmax_cross_entropy(z, labels)
    numeric = _numeric_grad(lambda: L.softmax_cross_entropy(z, labels)[0], z)
    assert _rel_err(grad, numeric) < 1e-6

    with pytest.raises(ContractError):
        L.softmax_cross_entropy(z, [0, 5, 1])
    with pytest.raises(ContractError):
        L.softmax_cross_entropy(z, [0, 1])


def test_mse_loss_and_gradient():
    loss, grad = L.mse_loss(np.array([[1.0, 2.0]]), np.array([0.0, 0.0]))
    assert loss == pytest.approx(2.5)
    assert np.allclose(grad, [[1.0, 2.0]])
    with pytest.raises(ContractError):
        L.mse_loss(np.zeros((1, 2)), np.zeros(3))
