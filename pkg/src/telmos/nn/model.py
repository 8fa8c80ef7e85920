"""The MOS regressor: a six-conv CNN applied per spectrogram segment, a
bidirectional LSTM over the segment sequence, and a scalar head.

Per segment (1x32x33): [conv-bn-relu] x2 with 2x2 pools, two more
conv-bn-relu at doubled width with a pool, then two final conv-bn-relu
stages where the last conv uses no padding and stride 2 to collapse the
4x4 map to 1x1, followed by a linear projection to the segment feature.
Dropout sits after the second and third pools and after the fifth conv
stage. The feature sequence feeds forward and reverse LSTMs; the head
reads the last index of both output sequences.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..errors import ShapeError
from ..rng import make_rng
from . import layers
from .lstm import lstm_backward, lstm_forward

CONV_COUNT = 6
_POOL_AFTER = (1, 2, 4)  # pools follow these conv stages
_DROP_AFTER_POOL = (2, 4)  # dropout follows the pools of these stages
_DROP_AFTER_CONV = (5,)  # and the relu of this stage


@dataclass(frozen=True)
class ModelArch:
    conv_channels: tuple = (16, 16, 32, 32, 32, 32)
    feature_dim: int = 10
    hidden: int = 50

    def __post_init__(self):
        if len(self.conv_channels) != CONV_COUNT:
            raise ValueError(f"need {CONV_COUNT} conv channel counts")


DEFAULT_ARCH = ModelArch()


def tensor_specs(arch: ModelArch) -> dict:
    """Canonical tensor name -> shape map; also fixes serialization order."""
    specs = {}
    c_prev = 1
    for i, c in enumerate(arch.conv_channels, start=1):
        specs[f"conv{i}.kernel"] = (c, c_prev, 3, 3)
        specs[f"conv{i}.bias"] = (c,)
        for stat in ("gamma", "beta", "running_mean", "running_var"):
            specs[f"bn{i}.{stat}"] = (c,)
        c_prev = c
    specs["seg_fc.weight"] = (arch.feature_dim, arch.conv_channels[-1])
    specs["seg_fc.bias"] = (arch.feature_dim,)
    h = arch.hidden
    for d in ("fw", "bw"):
        specs[f"lstm_{d}.W"] = (4 * h, arch.feature_dim)
        specs[f"lstm_{d}.U"] = (4 * h, h)
        specs[f"lstm_{d}.b"] = (4 * h,)
    specs["head.weight"] = (1, 2 * h)
    specs["head.bias"] = (1,)
    return specs


class ModelParams:
    """Named tensors of one model instance.

    Running batch-norm statistics live here too but are state, not
    trainable parameters; trainable_names excludes them.
    """

    def __init__(self, tensors: dict, arch: ModelArch):
        specs = tensor_specs(arch)
        if set(tensors) != set(specs):
            missing = sorted(set(specs) - set(tensors))
            extra = sorted(set(tensors) - set(specs))
            raise ShapeError(f"tensor set mismatch: missing {missing}, extra {extra}")
        for name, shape in specs.items():
            if tuple(tensors[name].shape) != shape:
                raise ShapeError(f"tensor {name} has shape {tensors[name].shape}, want {shape}")
        self.arch = arch
        self.tensors = {name: tensors[name] for name in specs}  # canonical order

    @property
    def dtype(self):
        return self.tensors["conv1.kernel"].dtype

    @property
    def trainable_names(self) -> list:
        return [n for n in self.tensors if "running_" not in n]

    def __getitem__(self, name):
        return self.tensors[name]

    def copy(self) -> "ModelParams":
        return ModelParams({n: t.copy() for n, t in self.tensors.items()}, self.arch)

    def astype(self, dtype) -> "ModelParams":
        return ModelParams({n: t.astype(dtype) for n, t in self.tensors.items()}, self.arch)


def _glorot(rng, shape, fan_in, fan_out, dtype):
    a = np.sqrt(6.0 / (fan_in + fan_out))
    return rng.uniform(-a, a, size=shape).astype(dtype)


def init_params(arch: ModelArch = DEFAULT_ARCH, seed: int = 0, dtype=np.float32) -> ModelParams:
    """Glorot-uniform convs and linears, +-1/sqrt(H) LSTM matrices with the
    forget-gate bias at 1, identity batch-norm."""
    rng = make_rng(seed)
    t = {}
    c_prev = 1
    for i, c in enumerate(arch.conv_channels, start=1):
        t[f"conv{i}.kernel"] = _glorot(rng, (c, c_prev, 3, 3), c_prev * 9, c * 9, dtype)
        t[f"conv{i}.bias"] = np.zeros(c, dtype=dtype)
        t[f"bn{i}.gamma"] = np.ones(c, dtype=dtype)
        t[f"bn{i}.beta"] = np.zeros(c, dtype=dtype)
        t[f"bn{i}.running_mean"] = np.zeros(c, dtype=dtype)
        t[f"bn{i}.running_var"] = np.ones(c, dtype=dtype)
        c_prev = c
    feat, c_last = arch.feature_dim, arch.conv_channels[-1]
    t["seg_fc.weight"] = _glorot(rng, (feat, c_last), c_last, feat, dtype)
    t["seg_fc.bias"] = np.zeros(feat, dtype=dtype)
    h = arch.hidden
    bound = 1.0 / np.sqrt(h)
    for d in ("fw", "bw"):
        t[f"lstm_{d}.W"] = rng.uniform(-bound, bound, size=(4 * h, feat)).astype(dtype)
        t[f"lstm_{d}.U"] = rng.uniform(-bound, bound, size=(4 * h, h)).astype(dtype)
        b = np.zeros(4 * h, dtype=dtype)
        b[h : 2 * h] = 1.0  # forget gate starts open
        t[f"lstm_{d}.b"] = b
    t["head.weight"] = _glorot(rng, (1, 2 * h), 2 * h, 1, dtype)
    t["head.bias"] = np.zeros(1, dtype=dtype)
    return ModelParams(t, arch)


def _conv_plan(i):
    """(stride, padding) of conv stage i; the last stage collapses 4x4->1x1."""
    return (2, 0) if i == CONV_COUNT else (1, 1)


def _cnn_forward(params, x, bn_mode, dropout_rate, rng, want_cache, trace=None):
    p = params.tensors
    caches = [] if want_cache else None

    def record(name, arr):
        if trace is not None:
            trace.append((name, tuple(arr.shape)))

    record("input", x)
    for i in range(1, CONV_COUNT + 1):
        stride, pad = _conv_plan(i)
        x, c_conv = layers.conv2d_forward(x, p[f"conv{i}.kernel"], p[f"conv{i}.bias"], stride, pad)
        x, c_bn = layers.batchnorm_forward(
            x, p[f"bn{i}.gamma"], p[f"bn{i}.beta"],
            p[f"bn{i}.running_mean"], p[f"bn{i}.running_var"], bn_mode,
        )
        x, c_relu = layers.relu_forward(x)
        record(f"conv{i}", x)
        c_pool = c_drop = None
        if i in _POOL_AFTER:
            x, c_pool = layers.maxpool2_forward(x)
            record(f"pool{_POOL_AFTER.index(i) + 1}", x)
        if (i in _DROP_AFTER_POOL) or (i in _DROP_AFTER_CONV):
            train = rng is not None and dropout_rate > 0.0
            x, c_drop = layers.dropout_forward(x, dropout_rate, rng, train)
        if want_cache:
            caches.append((c_conv, c_bn, c_relu, c_pool, c_drop))
    n = x.shape[0]
    flat = x.reshape(n, -1)
    feats, c_fc = layers.linear_forward(flat, p["seg_fc.weight"], p["seg_fc.bias"])
    record("fc", feats)
    if want_cache:
        return feats, (caches, c_fc, x.shape)
    return feats, None


def _cnn_backward(params, dfeats, cnn_cache, grads):
    p = params.tensors
    caches, c_fc, conv_out_shape = cnn_cache
    dflat, dw, db = layers.linear_backward(dfeats, c_fc, p["seg_fc.weight"])
    grads["seg_fc.weight"] = dw
    grads["seg_fc.bias"] = db
    dx = dflat.reshape(conv_out_shape)
    for i in range(CONV_COUNT, 0, -1):
        c_conv, c_bn, c_relu, c_pool, c_drop = caches[i - 1]
        if c_drop is not None:
            dx = layers.dropout_backward(dx, c_drop)
        if c_pool is not None:
            dx = layers.maxpool2_backward(dx, c_pool)
        dx = layers.relu_backward(dx, c_relu)
        dx, dgamma, dbeta = layers.batchnorm_backward(dx, c_bn)
        grads[f"bn{i}.gamma"] = dgamma
        grads[f"bn{i}.beta"] = dbeta
        dx, dk, dbias = layers.conv2d_backward(dx, c_conv, need_dx=(i > 1))
        grads[f"conv{i}.kernel"] = dk
        grads[f"conv{i}.bias"] = dbias
    return dx


def forward_batch(params, x, *, train=False, dropout_rate=0.0, rng=None,
                  want_cache=False, trace=None):
    """Raw (unclamped) predictions for a batch of segment stacks.

    x: (B, S, 1, mels, width). Train mode uses batch-norm batch statistics
    and, when rng is given and dropout_rate > 0, dropout masks drawn from
    rng.
    """
    x = np.asarray(x)
    if x.ndim != 5:
        raise ShapeError(f"expected (B, S, 1, mels, width), got {x.shape}")
    B, S = x.shape[:2]
    xs = x.reshape(B * S, *x.shape[2:]).astype(params.dtype, copy=False)
    bn_mode = "train" if train else "eval"
    drop_rng = rng if train else None

    feats, cnn_cache = _cnn_forward(
        params, xs, bn_mode, dropout_rate, drop_rng, want_cache, trace
    )
    seq = feats.reshape(B, S, -1)
    p = params.tensors
    if want_cache:
        h_fw, cache_fw = lstm_forward(seq, p["lstm_fw.W"], p["lstm_fw.U"], p["lstm_fw.b"],
                                      reverse=False, want_cache=True)
        h_bw, cache_bw = lstm_forward(seq, p["lstm_bw.W"], p["lstm_bw.U"], p["lstm_bw.b"],
                                      reverse=True, want_cache=True)
    else:
        h_fw = lstm_forward(seq, p["lstm_fw.W"], p["lstm_fw.U"], p["lstm_fw.b"], reverse=False)
        h_bw = lstm_forward(seq, p["lstm_bw.W"], p["lstm_bw.U"], p["lstm_bw.b"], reverse=True)
        cache_fw = cache_bw = None
    last = np.concatenate([h_fw[:, -1], h_bw[:, -1]], axis=1)
    out, c_head = layers.linear_forward(last, p["head.weight"], p["head.bias"])
    preds = out[:, 0]
    if not want_cache:
        return preds, None
    return preds, (cnn_cache, cache_fw, cache_bw, c_head, (B, S))


def backward_batch(params, dpreds, cache):
    """Gradients of all trainable tensors given d(loss)/d(preds)."""
    cnn_cache, cache_fw, cache_bw, c_head, (B, S) = cache
    p = params.tensors
    grads = {}
    dout = np.asarray(dpreds, dtype=params.dtype).reshape(B, 1)
    dlast, dw, db = layers.linear_backward(dout, c_head, p["head.weight"])
    grads["head.weight"] = dw
    grads["head.bias"] = db

    h = params.arch.hidden
    dh_fw = np.zeros((B, S, h), dtype=params.dtype)
    dh_bw = np.zeros((B, S, h), dtype=params.dtype)
    dh_fw[:, -1] = dlast[:, :h]
    dh_bw[:, -1] = dlast[:, h:]
    dseq_fw, dWf, dUf, dbf = lstm_backward(dh_fw, cache_fw)
    dseq_bw, dWb, dUb, dbb = lstm_backward(dh_bw, cache_bw)
    grads["lstm_fw.W"], grads["lstm_fw.U"], grads["lstm_fw.b"] = dWf, dUf, dbf
    grads["lstm_bw.W"], grads["lstm_bw.U"], grads["lstm_bw.b"] = dWb, dUb, dbb

    dfeats = (dseq_fw + dseq_bw).reshape(B * S, -1)
    _cnn_backward(params, dfeats, cnn_cache, grads)
    return grads


def mse_loss_and_grads(params, x, y, *, bn_mode="train", dropout_rate=0.0, rng=None):
    """Mean-squared-error loss over a batch plus gradients for every
    trainable tensor. bn_mode='eval' freezes batch-norm statistics (used by
    gradient checking); dropout only applies with a generator."""
    y = np.asarray(y, dtype=np.float64)
    preds, cache = forward_batch(
        params, x, train=(bn_mode == "train"), dropout_rate=dropout_rate,
        rng=rng, want_cache=True,
    )
    err = preds.astype(np.float64) - y
    loss = float(np.mean(err**2))
    dpreds = (2.0 / len(y)) * err
    grads = backward_batch(params, dpreds, cache)
    return loss, preds, grads


def predict_batch(params, x, batch_size: int = 256) -> np.ndarray:
    """Eval-mode MOS predictions clamped to [1, 5]."""
    x = np.asarray(x)
    outs = []
    for i in range(0, x.shape[0], batch_size):
        preds, _ = forward_batch(params, x[i : i + batch_size])
        outs.append(preds)
    return np.clip(np.concatenate(outs).astype(np.float64), 1.0, 5.0)


def model_forward(params, segments, mode: str = "eval", dropout_seed: int = 0,
                  dropout_rate: float = 0.2) -> float:
    """Score one clip's MelSegments. Eval mode is deterministic and clamps
    the prediction to [1, 5]; train mode applies dropout from dropout_seed
    and leaves the output unclamped."""
    if mode not in ("train", "eval"):
        raise ValueError(f"mode must be train or eval, got {mode!r}")
    x = segments.data[None]
    if mode == "eval":
        preds, _ = forward_batch(params, x)
        return float(np.clip(preds[0], 1.0, 5.0))
    rng = make_rng(dropout_seed)
    preds, _ = forward_batch(params, x, train=True, dropout_rate=dropout_rate, rng=rng)
    return float(preds[0])


def forward_shapes(params, segments) -> list:
    """(stage name, output shape) pairs of an eval forward pass."""
    trace: list = []
    forward_batch(params, segments.data[None], trace=trace)
    # drop the batch axis folded into the segment axis: shapes are reported
    # per clip, matching the (segments, C, H, W) convention
    return trace
