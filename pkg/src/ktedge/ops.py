"""Forward and backward passes for every layer primitive, plus loss and init.

All functions operate on single examples (no batch axis). Images are
row-major H x W x C, convolution kernels are kh x kw x in_c x out_c, and every
op preserves the dtype of its inputs so the same code runs in 32-bit training
mode and 64-bit gradient-check mode.
"""

from __future__ import annotations

import math

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .rng import RngState


def he_uniform_init(shape, fan_in: int, rng: RngState, dtype=np.float32) -> np.ndarray:
    """Kernel init: uniform on [-limit, +limit] with limit = sqrt(6 / fan_in)."""
    if fan_in < 1:
        raise ValueError("fan_in must be >= 1")
    limit = math.sqrt(6.0 / fan_in)
    n = int(np.prod(shape))
    u = rng.uniform(n)
    return ((2.0 * u - 1.0) * limit).reshape(shape).astype(dtype)


def _softplus(x: np.ndarray) -> np.ndarray:
    # log1p(exp(x)) overflows for large x; above 20 the identity is exact to
    # double precision.
    return np.where(x > 20.0, x, np.log1p(np.exp(np.minimum(x, 20.0))))


def _sigmoid(x: np.ndarray) -> np.ndarray:
    out = np.empty_like(x)
    pos = x >= 0
    out[pos] = 1.0 / (1.0 + np.exp(-x[pos]))
    ex = np.exp(x[~pos])
    out[~pos] = ex / (1.0 + ex)
    return out


def mish(x: np.ndarray) -> np.ndarray:
    """y = x * tanh(softplus(x))."""
    x = np.asarray(x)
    return (x * np.tanh(_softplus(x))).astype(x.dtype, copy=False)


def mish_backward(dy: np.ndarray, x: np.ndarray) -> np.ndarray:
    x = np.asarray(x)
    t = np.tanh(_softplus(x))
    grad = t + x * (1.0 - t * t) * _sigmoid(x)
    return (dy * grad).astype(x.dtype, copy=False)


def softmax(logits: np.ndarray) -> np.ndarray:
    z = logits - np.max(logits)
    e = np.exp(z)
    return e / np.sum(e)


def scc_loss(logits: np.ndarray, true_index: int) -> float:
    """Sparse categorical cross-entropy: -log softmax(logits)[true_index]."""
    if not 0 <= true_index < logits.shape[0]:
        raise ValueError(f"class index {true_index} out of range for {logits.shape[0]} classes")
    m = float(np.max(logits))
    lse = m + math.log(float(np.sum(np.exp(logits - m))))
    return lse - float(logits[true_index])


def scc_loss_backward(logits: np.ndarray, true_index: int) -> np.ndarray:
    if not 0 <= true_index < logits.shape[0]:
        raise ValueError(f"class index {true_index} out of range for {logits.shape[0]} classes")
    g = softmax(logits)
    g[true_index] -= 1.0
    return g.astype(logits.dtype, copy=False)


def _conv_geometry(h: int, w: int, kh: int, kw: int, stride: int, padding: str):
    """Returns (pad_top, pad_bottom, pad_left, pad_right, out_h, out_w)."""
    if stride < 1:
        raise ValueError("stride must be >= 1")
    if padding == "valid":
        if kh > h or kw > w:
            raise ValueError(f"kernel {kh}x{kw} larger than input {h}x{w}")
        return 0, 0, 0, 0, (h - kh) // stride + 1, (w - kw) // stride + 1
    if padding == "same":
        out_h = -(-h // stride)
        out_w = -(-w // stride)
        total_h = max((out_h - 1) * stride + kh - h, 0)
        total_w = max((out_w - 1) * stride + kw - w, 0)
        return total_h // 2, total_h - total_h // 2, total_w // 2, total_w - total_w // 2, out_h, out_w
    raise ValueError(f"unknown padding mode {padding!r}")


def _im2col(xp: np.ndarray, kh: int, kw: int, stride: int) -> np.ndarray:
    """Patches of a padded H x W x C image as an (out_h*out_w, kh*kw*C) matrix."""
    win = sliding_window_view(xp, (kh, kw), axis=(0, 1))  # (oh', ow', C, kh, kw)
    win = win[::stride, ::stride]
    oh, ow = win.shape[0], win.shape[1]
    # reorder to (oh, ow, kh, kw, C) so columns line up with kernel layout
    return np.ascontiguousarray(win.transpose(0, 1, 3, 4, 2)).reshape(oh * ow, -1)


def conv2d(x: np.ndarray, kernels: np.ndarray, bias: np.ndarray,
           stride: int = 1, padding: str = "valid") -> np.ndarray:
    """2-d cross-correlation of an H x W x C image with kh x kw x C x F kernels."""
    h, w, c = x.shape
    kh, kw, kc, f = kernels.shape
    if kc != c:
        raise ValueError(f"input has {c} channels but kernels expect {kc}")
    pt, pb, pl, pr, oh, ow = _conv_geometry(h, w, kh, kw, stride, padding)
    xp = np.pad(x, ((pt, pb), (pl, pr), (0, 0))) if pt or pb or pl or pr else x
    cols = _im2col(xp, kh, kw, stride)
    y = cols @ kernels.reshape(-1, f) + bias
    return y.reshape(oh, ow, f)


def conv2d_backward(dy: np.ndarray, x: np.ndarray, kernels: np.ndarray,
                    stride: int = 1, padding: str = "valid",
                    cols: np.ndarray | None = None):
    """Gradients of conv2d: returns (dx, dkernels, dbias)."""
    h, w, c = x.shape
    kh, kw, _, f = kernels.shape
    pt, pb, pl, pr, oh, ow = _conv_geometry(h, w, kh, kw, stride, padding)
    xp = np.pad(x, ((pt, pb), (pl, pr), (0, 0))) if pt or pb or pl or pr else x
    if cols is None:
        cols = _im2col(xp, kh, kw, stride)
    dy_flat = dy.reshape(oh * ow, f)

    dbias = dy_flat.sum(axis=0)
    dkernels = (cols.T @ dy_flat).reshape(kernels.shape)

    dcols = (dy_flat @ kernels.reshape(-1, f).T).reshape(oh, ow, kh, kw, c)
    dxp = np.zeros_like(xp)
    for i in range(kh):
        for j in range(kw):
            dxp[i:i + oh * stride:stride, j:j + ow * stride:stride, :] += dcols[:, :, i, j, :]
    dx = dxp[pt:pt + h, pl:pl + w, :] if pt or pb or pl or pr else dxp
    return dx, dkernels, dbias


def maxpool2d(x: np.ndarray, pool_size: int, stride: int) -> np.ndarray:
    h, w, c = x.shape
    if pool_size > h or pool_size > w:
        raise ValueError(f"pool {pool_size}x{pool_size} larger than input {h}x{w}")
    win = sliding_window_view(x, (pool_size, pool_size), axis=(0, 1))[::stride, ::stride]
    return win.max(axis=(3, 4))


def maxpool2d_backward(dy: np.ndarray, x: np.ndarray, pool_size: int, stride: int) -> np.ndarray:
    """Routes each output gradient to the first (row-major) max of its window."""
    h, w, c = x.shape
    win = sliding_window_view(x, (pool_size, pool_size), axis=(0, 1))[::stride, ::stride]
    oh, ow = win.shape[0], win.shape[1]
    flat = win.reshape(oh, ow, c, pool_size * pool_size)
    amax = flat.argmax(axis=3)  # first occurrence on ties
    oi, oj, ch = np.meshgrid(np.arange(oh), np.arange(ow), np.arange(c), indexing="ij")
    rows = oi * stride + amax // pool_size
    cls = oj * stride + amax % pool_size
    dx = np.zeros_like(x)
    np.add.at(dx, (rows.ravel(), cls.ravel(), ch.ravel()), dy.ravel())
    return dx


def dropout_mask(shape, rate: float, rng: RngState, dtype=np.float32) -> np.ndarray:
    """Inverted-dropout mask: 0 with probability `rate`, else 1/(1-rate)."""
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if rate == 0.0:
        return np.ones(shape, dtype=dtype)
    n = int(np.prod(shape))
    u = rng.uniform(n)
    keep = (u >= rate).astype(np.float64) / (1.0 - rate)
    return keep.reshape(shape).astype(dtype)


def dropout(x: np.ndarray, rate: float, mode: str, rng: RngState | None = None) -> np.ndarray:
    if not 0.0 <= rate < 1.0:
        raise ValueError("dropout rate must be in [0, 1)")
    if mode == "infer" or rate == 0.0:
        return x
    if mode != "train":
        raise ValueError(f"unknown mode {mode!r}")
    if rng is None:
        raise ValueError("train-mode dropout needs an rng")
    return x * dropout_mask(x.shape, rate, rng, x.dtype)


def global_avg_pool(x: np.ndarray) -> np.ndarray:
    """Per-channel mean over spatial positions: H x W x C -> C."""
    return x.mean(axis=(0, 1))


def global_avg_pool_backward(dy: np.ndarray, in_shape) -> np.ndarray:
    h, w, c = in_shape
    return np.broadcast_to(dy / (h * w), (h, w, c)).astype(dy.dtype, copy=True)
