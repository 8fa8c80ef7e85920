"""Tensor layer primitives with explicit forward/backward pairs.

Convolutions run as one im2col GEMM per layer; each forward returns a cache
that its backward consumes. Shapes follow the (N, C, H, W) convention, with
thin wrappers accepting single (C, H, W) inputs where the public contract
asks for them.
"""

from __future__ import annotations

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from ..errors import DegenerateBatchError, ShapeError

BN_EPS = 1e-5
BN_MOMENTUM = 0.1


def _as_batched(x):
    if x.ndim == 3:
        return x[None], True
    if x.ndim == 4:
        return x, False
    raise ShapeError(f"expected (C,H,W) or (N,C,H,W), got shape {x.shape}")


# --- convolution -----------------------------------------------------------

def _im2col(xp, kh, kw, stride):
    n, c, hp, wp = xp.shape
    ho = (hp - kh) // stride + 1
    wo = (wp - kw) // stride + 1
    v = sliding_window_view(xp, (kh, kw), axis=(2, 3))[:, :, ::stride, ::stride]
    cols = np.ascontiguousarray(v.transpose(0, 2, 3, 1, 4, 5)).reshape(n * ho * wo, c * kh * kw)
    return cols, ho, wo


def conv2d_forward(x, kernel, bias, stride=1, padding=0):
    """Cross-correlation with zero padding. x: (N,C,H,W), kernel:
    (C_out,C_in,kh,kw) -> (N,C_out,H',W') plus backward cache."""
    n, c, h, w = x.shape
    c_out, c_in, kh, kw = kernel.shape
    if c != c_in:
        raise ShapeError(f"input has {c} channels, kernel expects {c_in}")
    if h + 2 * padding < kh or w + 2 * padding < kw:
        raise ShapeError("kernel larger than padded input")
    xp = np.pad(x, ((0, 0), (0, 0), (padding, padding), (padding, padding))) if padding else x
    cols, ho, wo = _im2col(xp, kh, kw, stride)
    kmat = kernel.reshape(c_out, -1)
    y = cols @ kmat.T
    y += bias
    y = y.reshape(n, ho, wo, c_out).transpose(0, 3, 1, 2)
    cache = (cols, x.shape, kernel, stride, padding, ho, wo)
    return y, cache


def conv2d_backward(dy, cache, need_dx=True):
    cols, x_shape, kernel, stride, padding, ho, wo = cache
    n, c, h, w = x_shape
    c_out, c_in, kh, kw = kernel.shape
    dyr = np.ascontiguousarray(dy.transpose(0, 2, 3, 1)).reshape(-1, c_out)
    db = dyr.sum(axis=0)
    dk = (dyr.T @ cols).reshape(kernel.shape)
    if not need_dx:
        return None, dk, db

    dcols = dyr @ kernel.reshape(c_out, -1)
    hp, wp = h + 2 * padding, w + 2 * padding
    dxp = np.zeros((n, c, hp, wp), dtype=dy.dtype)
    d6 = dcols.reshape(n, ho, wo, c, kh, kw)
    for i in range(kh):
        for j in range(kw):
            dxp[:, :, i : i + ho * stride : stride, j : j + wo * stride : stride] += (
                d6[:, :, :, :, i, j].transpose(0, 3, 1, 2)
            )
    dx = dxp[:, :, padding : hp - padding, padding : wp - padding] if padding else dxp
    return dx, dk, db


def conv2d(x, kernel, bias, stride=1, padding=0):
    """Forward-only convenience; accepts (C,H,W) or (N,C,H,W)."""
    xb, squeezed = _as_batched(np.asarray(x))
    y, _ = conv2d_forward(xb, np.asarray(kernel), np.asarray(bias), stride, padding)
    return y[0] if squeezed else y


# --- 2x2 max pooling --------------------------------------------------------

def maxpool2_forward(x):
    n, c, h, w = x.shape
    if h < 2 or w < 2:
        raise ShapeError(f"cannot 2x2-pool a {h}x{w} map")
    h2, w2 = h // 2, w // 2
    # windows stacked as [(0,0), (0,1), (1,0), (1,1)]; argmax of the first
    # maximal entry keeps the backward routing deterministic
    windows = np.stack(
        [
            x[:, :, 0 : h2 * 2 : 2, 0 : w2 * 2 : 2],
            x[:, :, 0 : h2 * 2 : 2, 1 : w2 * 2 : 2],
            x[:, :, 1 : h2 * 2 : 2, 0 : w2 * 2 : 2],
            x[:, :, 1 : h2 * 2 : 2, 1 : w2 * 2 : 2],
        ],
        axis=-1,
    )
    arg = windows.argmax(axis=-1)
    y = np.take_along_axis(windows, arg[..., None], axis=-1)[..., 0]
    return y, (arg, x.shape)


def maxpool2_backward(dy, cache):
    arg, x_shape = cache
    n, c, h, w = x_shape
    h2, w2 = h // 2, w // 2
    dx = np.zeros(x_shape, dtype=dy.dtype)
    for slot, (i, j) in enumerate(((0, 0), (0, 1), (1, 0), (1, 1))):
        view = dx[:, :, i : h2 * 2 : 2, j : w2 * 2 : 2]
        np.copyto(view, dy, where=arg == slot)
    return dx


def maxpool2(x):
    xb, squeezed = _as_batched(np.asarray(x))
    y, _ = maxpool2_forward(xb)
    return y[0] if squeezed else y


# --- batch normalization -----------------------------------------------------

def batchnorm_forward(x, gamma, beta, running_mean, running_var, mode,
                      momentum=BN_MOMENTUM, eps=BN_EPS):
    """Per-channel batch norm over (N, H, W).

    Train mode normalizes with batch statistics and updates the running
    arrays in place (new = (1 - momentum) * old + momentum * batch); eval
    mode normalizes with the running statistics.
    """
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode!r}")
    axes = (0, 2, 3)
    if mode == "train":
        if x.shape[0] < 2:
            raise DegenerateBatchError("train-mode batch norm needs batch size >= 2")
        mean = x.mean(axis=axes)
        var = np.einsum("nchw,nchw->c", x, x) / (x.shape[0] * x.shape[2] * x.shape[3]) - mean**2
        np.maximum(var, 0.0, out=var)
        running_mean *= 1.0 - momentum
        running_mean += momentum * mean
        running_var *= 1.0 - momentum
        running_var += momentum * var
    else:
        mean = running_mean
        var = running_var
    inv_std = 1.0 / np.sqrt(var + eps)
    # y = gamma * (x - mean) * inv_std + beta, folded into one scale/shift
    scale = (gamma * inv_std).astype(x.dtype)
    shift = (beta - gamma * inv_std * mean).astype(x.dtype)
    y = x * scale[None, :, None, None]
    y += shift[None, :, None, None]
    xhat = (x - mean[None, :, None, None]) * inv_std[None, :, None, None]
    return y, (xhat, inv_std, gamma, mode)


def batchnorm_backward(dy, cache):
    xhat, inv_std, gamma, mode = cache
    dgamma = np.einsum("nchw,nchw->c", dy, xhat)
    dbeta = np.einsum("nchw->c", dy)
    a = gamma * inv_std
    dx = dy * a[None, :, None, None]
    if mode == "eval":
        return dx, dgamma, dbeta
    m = dy.shape[0] * dy.shape[2] * dy.shape[3]
    # dx = a*dy - a*dbeta/m - (a*dgamma/m)*xhat
    dx -= (a * dbeta / m)[None, :, None, None]
    dx -= xhat * (a * dgamma / m)[None, :, None, None].astype(dy.dtype)
    return dx, dgamma, dbeta


def batchnorm(x, gamma, beta, running_mean, running_var, mode,
              momentum=BN_MOMENTUM, eps=BN_EPS):
    y, _ = batchnorm_forward(np.asarray(x), gamma, beta, running_mean, running_var,
                             mode, momentum, eps)
    return y


# --- ReLU / dropout / linear --------------------------------------------------

def relu_forward(x):
    y = np.maximum(x, 0.0)
    return y, x > 0


def relu_backward(dy, mask):
    return dy * mask


def dropout_forward(x, rate, rng, train):
    """Inverted dropout: kept activations scale by 1/(1-rate) at train time
    so eval needs no rescaling."""
    if not train or rate == 0.0:
        return x, None
    keep = (rng.random(x.shape) >= rate).astype(x.dtype)
    keep /= 1.0 - rate
    return x * keep, keep


def dropout_backward(dy, keep):
    if keep is None:
        return dy
    return dy * keep


def linear_forward(x, weight, bias):
    if x.shape[1] != weight.shape[1]:
        raise ShapeError(f"linear got {x.shape[1]} features, weight expects {weight.shape[1]}")
    return x @ weight.T + bias, x


def linear_backward(dy, cache, weight):
    x = cache
    dw = dy.T @ x
    db = dy.sum(axis=0)
    dx = dy @ weight
    return dx, dw, db
