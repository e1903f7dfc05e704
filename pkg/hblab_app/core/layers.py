"""Forward and backward kernels of the fixed CNN layer set.

Tensors are NHWC ``(batch, height, width, channels)``. Convolution weights are
``(kernel_h, kernel_w, c_in, c_out)`` and use the cross-correlation convention.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from hblab_app.core.errors import ContractError


def _check_tensor4(x: np.ndarray, name: str = "input") -> None:
    if x.ndim != 4:
        raise ContractError(f"{name} must be (batch, height, width, channels), got shape {x.shape}")


def conv_padding(kernel_h: int, kernel_w: int, padding) -> tuple[tuple[int, int], tuple[int, int]]:
    """Zero padding as ((top, bottom), (left, right)); "same" puts the odd extra row/column last."""
    if padding == "same":
        ph, pw = kernel_h - 1, kernel_w - 1
        return (ph // 2, ph - ph // 2), (pw // 2, pw - pw // 2)
    if padding == "valid":
        return (0, 0), (0, 0)
    p = int(padding)
    return (p, p), (p, p)


def conv_output_hw(height: int, width: int, kernel_h: int, kernel_w: int, stride: int, padding) -> tuple[int, int]:
    (pt, pb), (pl, pr) = conv_padding(kernel_h, kernel_w, padding)
    hp, wp = height + pt + pb, width + pl + pr
    if kernel_h > hp or kernel_w > wp:
        raise ContractError(f"{kernel_h}x{kernel_w} kernel does not fit a padded {hp}x{wp} input")
    return (hp - kernel_h) // stride + 1, (wp - kernel_w) // stride + 1


def _patches(xp: np.ndarray, kh: int, kw: int, stride: int, ho: int, wo: int) -> np.ndarray:
    win = sliding_window_view(xp, (kh, kw), axis=(1, 2))  # (B, H', W', C, kh, kw)
    win = win[:, : (ho - 1) * stride + 1 : stride, : (wo - 1) * stride + 1 : stride]
    return win.transpose(0, 1, 2, 4, 5, 3)  # (B, ho, wo, kh, kw, C)


def conv2d_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray, stride: int = 1, padding="same"):
    """Returns ``(out, cache)``."""
    _check_tensor4(x)
    kh, kw, c_in, c_out = weights.shape
    if x.shape[3] != c_in:
        raise ContractError(f"input has {x.shape[3]} channels, kernel expects {c_in}")
    if bias.shape != (c_out,):
        raise ContractError(f"bias shape {bias.shape} does not match {c_out} filters")
    ho, wo = conv_output_hw(x.shape[1], x.shape[2], kh, kw, stride, padding)
    pad_h, pad_w = conv_padding(kh, kw, padding)
    xp = np.pad(x, ((0, 0), pad_h, pad_w, (0, 0)))
    cols = _patches(xp, kh, kw, stride, ho, wo).reshape(-1, kh * kw * c_in)
    out = cols @ weights.reshape(-1, c_out) + bias
    cache = (x.shape, xp.shape, cols, weights, stride, pad_h, pad_w, ho, wo)
    return out.reshape(x.shape[0], ho, wo, c_out), cache


def conv2d_backward(grad_out: np.ndarray, cache):
    """Returns ``(grad_x, grad_weights, grad_bias)``."""
    x_shape, xp_shape, cols, weights, stride, pad_h, pad_w, ho, wo = cache
    kh, kw, c_in, c_out = weights.shape
    g2 = grad_out.reshape(-1, c_out)
    grad_w = (cols.T @ g2).reshape(weights.shape)
    grad_b = g2.sum(axis=0)
    dcols = (g2 @ weights.reshape(-1, c_out).T).reshape(x_shape[0], ho, wo, kh, kw, c_in)
    dxp = np.zeros(xp_shape, dtype=grad_out.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, i : i + (ho - 1) * stride + 1 : stride, j : j + (wo - 1) * stride + 1 : stride, :] += dcols[
                :, :, :, i, j, :
            ]
    h, w = x_shape[1], x_shape[2]
    grad_x = dxp[:, pad_h[0] : pad_h[0] + h, pad_w[0] : pad_w[0] + w, :]
    return grad_x, grad_w, grad_b


def relu_forward(x: np.ndarray):
    return np.maximum(x, 0), x


def relu_backward(grad_out: np.ndarray, cache) -> np.ndarray:
    return grad_out * (cache > 0)


def fully_connected_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray):
    """Affine map on the flattened sample; output is (batch, 1, 1, nodes)."""
    flat = x.reshape(x.shape[0], -1)
    if flat.shape[1] != weights.shape[0]:
        raise ContractError(f"flattened input has {flat.shape[1]} features, layer expects {weights.shape[0]}")
    out = flat @ weights + bias
    return out.reshape(x.shape[0], 1, 1, weights.shape[1]), (x.shape, flat, weights)


def fully_connected_backward(grad_out: np.ndarray, cache):
    x_shape, flat, weights = cache
    g2 = grad_out.reshape(grad_out.shape[0], -1)
    grad_w = flat.T @ g2
    grad_b = g2.sum(axis=0)
    grad_x = (g2 @ weights.T).reshape(x_shape)
    return grad_x, grad_w, grad_b


def dropout_forward(x: np.ndarray, rate: float, mode: str, rng: np.random.Generator | None):
    """Inverted dropout; infer mode and ``rate == 0`` pass ``x`` through untouched."""
    if not 0.0 <= rate < 1.0:
        raise ContractError(f"dropout rate must lie in [0, 1), got {rate}")
    if mode not in ("train", "infer"):
        raise ContractError(f"unknown mode {mode!r}")
    if mode == "infer" or rate == 0.0:
        return x, None
    if rng is None:
        raise ContractError("training-mode dropout needs a generator")
    mask = (rng.random(x.shape) >= rate).astype(x.dtype) / x.dtype.type(1.0 - rate)
    return x * mask, mask


def dropout_backward(grad_out: np.ndarray, cache) -> np.ndarray:
    return grad_out if cache is None else grad_out * cache


def softmax(logits: np.ndarray) -> np.ndarray:
    shifted = logits - np.max(logits, axis=-1, keepdims=True)
    e = np.exp(shifted)
    return e / np.sum(e, axis=-1, keepdims=True)


def softmax_cross_entropy(logits: np.ndarray, labels) -> tuple[float, np.ndarray]:
    """Mean loss over the batch and its gradient w.r.t. the logits, (p - onehot) / batch."""
    logits = np.asarray(logits)
    squeeze = logits.ndim == 1
    z = logits.reshape(1, -1) if squeeze else logits.reshape(logits.shape[0], -1)
    labels = np.atleast_1d(np.asarray(labels, dtype=np.int64))
    if labels.shape[0] != z.shape[0]:
        raise ContractError(f"{labels.shape[0]} labels for a batch of {z.shape[0]}")
    if np.any(labels < 0) or np.any(labels >= z.shape[1]):
        raise ContractError(f"label outside [0, {z.shape[1]})")
    shifted = z - np.max(z, axis=1, keepdims=True)
    log_norm = np.log(np.sum(np.exp(shifted), axis=1))
    rows = np.arange(z.shape[0])
    loss = float(np.mean(log_norm - shifted[rows, labels]))
    grad = softmax(z)
    grad[rows, labels] -= 1.0
    grad /= z.shape[0]
    return loss, grad.reshape(logits.shape)


def mse_loss(pred: np.ndarray, target: np.ndarray) -> tuple[float, np.ndarray]:
    pred = np.asarray(pred)
    target = np.asarray(target, dtype=pred.dtype)
    if pred.size != target.size:
        raise ContractError(f"prediction has {pred.size} values, target {target.size}")
    diff = pred - target.reshape(pred.shape)
    return float(np.mean(diff**2)), 2.0 * diff / diff.size
