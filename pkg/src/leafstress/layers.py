"""Forward and backward passes for the layers of the network.

Every layer is a pair of functions: ``*_forward`` returns ``(out, cache)``
and ``*_backward(dout, cache)`` returns the gradients of the forward map.
Arrays are NCHW. Convolution is cross-correlation (no kernel flip).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import BatchTooSmall, InvalidParameter, InvalidTarget, ShapeMismatch
from .tensor import matmul

LOG_EPS = 1e-12


@dataclass
class Conv2dParams:
    weight: np.ndarray  # C_out x C_in x kh x kw
    bias: np.ndarray  # C_out
    stride: int = 1
    padding: int = 0

    def __post_init__(self):
        if self.weight.ndim != 4 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeMismatch(f"bad conv shapes {self.weight.shape}, {self.bias.shape}")
        if self.stride < 1 or self.padding < 0:
            raise InvalidParameter("stride must be >= 1 and padding >= 0")


@dataclass
class BatchNormParams:
    gamma: np.ndarray
    beta: np.ndarray
    running_mean: np.ndarray
    running_var: np.ndarray
    momentum: float = 0.1
    eps: float = 1e-5
    mode: str = "train"

    @classmethod
    def create(cls, channels: int, dtype=np.float32, **kw) -> "BatchNormParams":
        return cls(
            gamma=np.ones(channels, dtype),
            beta=np.zeros(channels, dtype),
            running_mean=np.zeros(channels, dtype),
            running_var=np.ones(channels, dtype),
            **kw,
        )


@dataclass
class DenseParams:
    weight: np.ndarray  # out x in
    bias: np.ndarray  # out

    def __post_init__(self):
        if self.weight.ndim != 2 or self.bias.shape != (self.weight.shape[0],):
            raise ShapeMismatch(f"bad dense shapes {self.weight.shape}, {self.bias.shape}")


def conv_output_size(size: int, k: int, stride: int, padding: int) -> int:
    return (size + 2 * padding - k) // stride + 1


# --------------------------------------------------------------------------
# convolution


def _im2col(x, kh, kw, stride):
    # x is already padded: (N, C, Hp, Wp) -> (N*Ho*Wo, C*kh*kw)
    win = sliding_window_view(x, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    n, c, ho, wo = win.shape[:4]
    return win.transpose(0, 2, 3, 1, 4, 5).reshape(n * ho * wo, c * kh * kw), ho, wo


def conv2d_forward(x, p: Conv2dParams):
    n, c_in, h, w = x.shape
    c_out, c_w, kh, kw = p.weight.shape
    if c_in != c_w:
        raise ShapeMismatch(f"input has {c_in} channels, kernel expects {c_w}")
    if h + 2 * p.padding < kh or w + 2 * p.padding < kw:
        raise ShapeMismatch("padded input smaller than kernel")
    pad = p.padding
    xp = np.pad(x, ((0, 0), (0, 0), (pad, pad), (pad, pad))) if pad else x
    cols, ho, wo = _im2col(xp, kh, kw, p.stride)
    out = matmul(cols, p.weight.reshape(c_out, -1).T, ordered=False) + p.bias
    out = out.reshape(n, ho, wo, c_out).transpose(0, 3, 1, 2)
    return np.ascontiguousarray(out), (x.shape, xp.shape, cols, ho, wo, p)


def conv2d_backward(dout, cache):
    """Returns ``(dx, dweight, dbias)``."""
    x_shape, xp_shape, cols, ho, wo, p = cache
    n, c_in = x_shape[:2]
    c_out, _, kh, kw = p.weight.shape
    s = p.stride
    d2 = dout.transpose(0, 2, 3, 1).reshape(-1, c_out)
    dw = matmul(d2.T, cols, ordered=False).reshape(p.weight.shape)
    db = d2.sum(axis=0)
    dcols = matmul(d2, p.weight.reshape(c_out, -1), ordered=False)
    dcols = dcols.reshape(n, ho, wo, c_in, kh, kw)
    dxp = np.zeros(xp_shape, dtype=dout.dtype)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + s * ho : s, j : j + s * wo : s] += dcols[:, :, :, :, i, j].transpose(0, 3, 1, 2)
    pad = p.padding
    dx = dxp[:, :, pad : xp_shape[2] - pad, pad : xp_shape[3] - pad] if pad else dxp
    return np.ascontiguousarray(dx), dw, db


# --------------------------------------------------------------------------
# batch normalization


def batchnorm2d_forward(x, p: BatchNormParams):
    c = x.shape[1]
    g = p.gamma.reshape(1, c, 1, 1)
    b = p.beta.reshape(1, c, 1, 1)
    if p.mode == "eval":
        inv_std = 1.0 / np.sqrt(p.running_var + p.eps)
        xhat = (x - p.running_mean.reshape(1, c, 1, 1)) * inv_std.reshape(1, c, 1, 1)
        return (g * xhat + b).astype(x.dtype, copy=False), ("eval", xhat, inv_std, p)
    if p.mode != "train":
        raise InvalidParameter(f"unknown batchnorm mode {p.mode!r}")
    m = x.shape[0] * x.shape[2] * x.shape[3]
    if m < 2:
        raise BatchTooSmall("batchnorm train mode needs at least 2 values per channel")
    mean = x.mean(axis=(0, 2, 3))
    centered = x - mean.reshape(1, c, 1, 1)
    var = (centered * centered).mean(axis=(0, 2, 3))
    inv_std = (1.0 / np.sqrt(var + p.eps)).astype(x.dtype)
    xhat = centered * inv_std.reshape(1, c, 1, 1)
    mom = p.running_mean.dtype.type(p.momentum)
    one = p.running_mean.dtype.type(1)
    p.running_mean[...] = (one - mom) * p.running_mean + mom * mean
    p.running_var[...] = (one - mom) * p.running_var + mom * var
    return g * xhat + b, ("train", xhat, inv_std, p)


def batchnorm2d_backward(dout, cache):
    """Returns ``(dx, dgamma, dbeta)``."""
    mode, xhat, inv_std, p = cache
    c = dout.shape[1]
    dgamma = (dout * xhat).sum(axis=(0, 2, 3))
    dbeta = dout.sum(axis=(0, 2, 3))
    dxhat = dout * p.gamma.reshape(1, c, 1, 1)
    if mode == "eval":
        return dxhat * inv_std.reshape(1, c, 1, 1).astype(dout.dtype), dgamma, dbeta
    m = dout.shape[0] * dout.shape[2] * dout.shape[3]
    sum_dxhat = dxhat.sum(axis=(0, 2, 3)).reshape(1, c, 1, 1)
    sum_dxhat_xhat = (dxhat * xhat).sum(axis=(0, 2, 3)).reshape(1, c, 1, 1)
    dx = (inv_std.reshape(1, c, 1, 1) / m) * (m * dxhat - sum_dxhat - xhat * sum_dxhat_xhat)
    return dx, dgamma, dbeta


# --------------------------------------------------------------------------
# pooling


def maxpool2x2_forward(x):
    n, c, h, w = x.shape
    if h % 2 or w % 2:
        raise ShapeMismatch(f"max2x2 pooling needs even spatial dims, got {h}x{w}")
    win = x.reshape(n, c, h // 2, 2, w // 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(n, c, h // 2, w // 2, 4)
    idx = win.argmax(axis=-1)  # first max wins ties
    out = np.take_along_axis(win, idx[..., None], axis=-1)[..., 0]
    return out, (x.shape, idx)


def maxpool2x2_backward(dout, cache):
    shape, idx = cache
    n, c, h, w = shape
    win = np.zeros((n, c, h // 2, w // 2, 4), dtype=dout.dtype)
    np.put_along_axis(win, idx[..., None], dout[..., None], axis=-1)
    dx = win.reshape(n, c, h // 2, w // 2, 2, 2).transpose(0, 1, 2, 4, 3, 5).reshape(shape)
    return dx


def global_avgpool_forward(x):
    return x.mean(axis=(2, 3)), x.shape


def global_avgpool_backward(dout, cache):
    n, c, h, w = cache
    scale = dout.dtype.type(1.0 / (h * w))
    return np.broadcast_to((dout * scale)[:, :, None, None], cache).copy()


def pool_forward(x, kind: str):
    if kind == "max2x2_stride2":
        return maxpool2x2_forward(x)
    if kind == "global_avg":
        return global_avgpool_forward(x)
    raise InvalidParameter(f"unknown pool kind {kind!r}")


def pool_backward(dout, cache, kind: str):
    if kind == "max2x2_stride2":
        return maxpool2x2_backward(dout, cache)
    return global_avgpool_backward(dout, cache)


# --------------------------------------------------------------------------
# activations / dense


def relu_forward(x):
    return np.where(x > 0, x, x.dtype.type(0)), x > 0


def relu_backward(dout, mask):
    # subgradient at exactly 0 is 0
    return np.where(mask, dout, dout.dtype.type(0))


def dense_forward(x, p: DenseParams, activation: str = "none"):
    if x.ndim != 2 or x.shape[1] != p.weight.shape[1]:
        raise ShapeMismatch(f"dense expects N x {p.weight.shape[1]}, got {x.shape}")
    pre = matmul(x, p.weight.T, ordered=False) + p.bias
    if activation == "relu":
        out, mask = relu_forward(pre)
    elif activation == "none":
        out, mask = pre, None
    else:
        raise InvalidParameter(f"unknown activation {activation!r}")
    return out, (x, p, mask)


def dense_backward(dout, cache):
    """Returns ``(dx, dweight, dbias)``."""
    x, p, mask = cache
    if mask is not None:
        dout = relu_backward(dout, mask)
    dw = matmul(dout.T, x, ordered=False)
    db = dout.sum(axis=0)
    dx = matmul(dout, p.weight, ordered=False)
    return dx, dw, db


# --------------------------------------------------------------------------
# loss


def softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    e = np.exp(z)
    return e / e.sum(axis=1, keepdims=True)


def log_softmax(logits):
    z = logits - logits.max(axis=1, keepdims=True)
    return z - np.log(np.maximum(np.exp(z).sum(axis=1, keepdims=True), LOG_EPS))


def check_targets(targets, k=None, tol=1e-6):
    targets = np.asarray(targets)
    if targets.ndim != 2 or (k is not None and targets.shape[1] != k):
        raise InvalidTarget(f"targets must be N x {k}, got {targets.shape}")
    if np.any(targets < 0):
        raise InvalidTarget("negative target entry")
    sums = targets.sum(axis=1, dtype=np.float64)
    bad = np.flatnonzero(np.abs(sums - 1.0) > tol)
    if bad.size:
        raise InvalidTarget(f"target row {int(bad[0])} sums to {sums[bad[0]]:.8g}, not 1")


def softmax_cross_entropy(logits, targets):
    """Mean soft-target cross-entropy and its gradient w.r.t. the logits."""
    if logits.ndim != 2 or logits.shape != np.shape(targets):
        raise ShapeMismatch(f"logits {logits.shape} vs targets {np.shape(targets)}")
    check_targets(targets)
    targets = np.asarray(targets, dtype=logits.dtype)
    n = logits.shape[0]
    logp = log_softmax(logits)
    loss = float(-(targets * logp).sum(dtype=np.float64) / n)
    grad = (np.exp(logp) - targets) / logits.dtype.type(n)
    return loss, grad
