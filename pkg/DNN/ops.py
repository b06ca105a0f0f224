"""Batched layer primitives shared by the reference DNN, the trainer and the SNN simulator.

Arrays carry a leading batch axis; images are (N, h, w, c).
"""
from typing import Tuple

import numpy as np

from INGESTION.layers import LayerSpec, conv_output_hw


def dense_forward(x: np.ndarray, weights: np.ndarray, bias: np.ndarray) -> np.ndarray:
    return x.reshape(len(x), -1) @ weights + bias


def dense_backward(x: np.ndarray, weights: np.ndarray, dout: np.ndarray):
    flat = x.reshape(len(x), -1)
    dw = flat.T @ dout
    db = dout.sum(axis=0)
    dx = (dout @ weights.T).reshape(x.shape)
    return dx, dw, db


def _same_padding(size: int, k: int, stride: int, out: int) -> Tuple[int, int]:
    total = max((out - 1) * stride + k - size, 0)
    return total // 2, total - total // 2


def _pad_input(x: np.ndarray, layer: LayerSpec):
    out_h, out_w = conv_output_hw(layer.in_h, layer.in_w, layer.k_h, layer.k_w, layer.stride, layer.padding)
    if layer.padding == "same":
        top, bottom = _same_padding(layer.in_h, layer.k_h, layer.stride, out_h)
        left, right = _same_padding(layer.in_w, layer.k_w, layer.stride, out_w)
        x = np.pad(x, ((0, 0), (top, bottom), (left, right), (0, 0)))
    else:
        top = left = 0
    return x, out_h, out_w, top, left


def _patches(xp: np.ndarray, k_h: int, k_w: int, stride: int, out_h: int, out_w: int) -> np.ndarray:
    """Sliding windows of shape (N, out_h, out_w, k_h, k_w, c)."""
    n, _, _, c = xp.shape
    cols = np.empty((n, out_h, out_w, k_h, k_w, c), dtype=xp.dtype)
    for i in range(k_h):
        for j in range(k_w):
            cols[:, :, :, i, j, :] = xp[:, i:i + stride * out_h:stride, j:j + stride * out_w:stride, :]
    return cols


def _scatter_patches(dcols: np.ndarray, padded_shape, stride: int) -> np.ndarray:
    n, out_h, out_w, k_h, k_w, c = dcols.shape
    dxp = np.zeros(padded_shape, dtype=dcols.dtype)
    for i in range(k_h):
        for j in range(k_w):
            dxp[:, i:i + stride * out_h:stride, j:j + stride * out_w:stride, :] += dcols[:, :, :, i, j, :]
    return dxp


def conv2d_forward(x: np.ndarray, layer: LayerSpec, weights=None, bias=None) -> np.ndarray:
    """Cross-correlation of (N, h, w, in_c) inputs with the layer's [k_h][k_w][in_c][out_c] kernel."""
    weights = layer.weight_matrix() if weights is None else weights
    bias = layer.bias if bias is None else bias
    x = x.reshape(len(x), layer.in_h, layer.in_w, layer.in_c)
    xp, out_h, out_w, _, _ = _pad_input(x, layer)
    cols = _patches(xp, layer.k_h, layer.k_w, layer.stride, out_h, out_w)
    flat = cols.reshape(len(x) * out_h * out_w, -1)
    out = flat @ weights.reshape(-1, layer.out_c) + bias
    return out.reshape(len(x), out_h, out_w, layer.out_c)


def conv2d_backward(x: np.ndarray, layer: LayerSpec, dout: np.ndarray):
    weights = layer.weight_matrix()
    x = x.reshape(len(x), layer.in_h, layer.in_w, layer.in_c)
    xp, out_h, out_w, top, left = _pad_input(x, layer)
    cols = _patches(xp, layer.k_h, layer.k_w, layer.stride, out_h, out_w)
    flat_cols = cols.reshape(len(x) * out_h * out_w, -1)
    flat_dout = dout.reshape(-1, layer.out_c)
    dw = (flat_cols.T @ flat_dout).reshape(weights.shape)
    db = flat_dout.sum(axis=0)
    dcols = (flat_dout @ weights.reshape(-1, layer.out_c).T).reshape(cols.shape)
    dxp = _scatter_patches(dcols, xp.shape, layer.stride)
    dx = dxp[:, top:top + layer.in_h, left:left + layer.in_w, :]
    return dx, dw, db


def _pool_out(x: np.ndarray, window: int, stride: int) -> Tuple[int, int]:
    return (x.shape[1] - window) // stride + 1, (x.shape[2] - window) // stride + 1


def avgpool_forward(x: np.ndarray, window: int, stride: int) -> np.ndarray:
    out_h, out_w = _pool_out(x, window, stride)
    return _patches(x, window, window, stride, out_h, out_w).mean(axis=(3, 4))


def avgpool_backward(x_shape, window: int, stride: int, dout: np.ndarray) -> np.ndarray:
    n, out_h, out_w, c = dout.shape
    share = dout / (window * window)
    dcols = np.broadcast_to(share[:, :, :, None, None, :], (n, out_h, out_w, window, window, c))
    return _scatter_patches(np.ascontiguousarray(dcols), x_shape, stride)


def maxpool_forward(x: np.ndarray, window: int, stride: int) -> np.ndarray:
    out_h, out_w = _pool_out(x, window, stride)
    return _patches(x, window, window, stride, out_h, out_w).max(axis=(3, 4))


def relu(x: np.ndarray) -> np.ndarray:
    return np.maximum(x, 0.0)


def relu_backward(x: np.ndarray, dout: np.ndarray) -> np.ndarray:
    return dout * (x > 0)


def cross_entropy(logits: np.ndarray, labels: np.ndarray) -> Tuple[float, np.ndarray]:
    """Mean softmax cross-entropy and its gradient with respect to the logits."""
    shifted = logits - logits.max(axis=1, keepdims=True)
    log_probs = shifted - np.log(np.exp(shifted).sum(axis=1, keepdims=True))
    n = len(labels)
    loss = -log_probs[np.arange(n), labels].mean()
    grad = np.exp(log_probs)
    grad[np.arange(n), labels] -= 1.0
    return float(loss), grad / n
