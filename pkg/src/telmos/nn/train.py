"""Mini-batch training loop: MSE loss, Adam updates, early stopping on
validation RMSE, and the epoch,train_mse,val_rmse,val_pcc log format."""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field

import numpy as np

from ..errors import DivergenceError, UndefinedCorrelationError
from ..rng import make_rng, mix_seed
from .model import ModelParams, forward_batch, backward_batch, init_params, predict_batch
from .optim import OptimizerState, adam_step, init_optimizer

_SHUFFLE_TAG = 0xC0FFEE
_DROPOUT_TAG = 0xD0


@dataclass
class TrainConfig:
    lr: float = 1e-3
    batch_size: int = 200
    max_epochs: int = 60
    seed: int = 0
    dropout_rate: float = 0.2
    patience: int = 10  # epochs without val RMSE improvement; <= 0 disables

    def __post_init__(self):
        if not 0.0 <= self.dropout_rate < 1.0:
            raise ValueError("dropout_rate must be in [0, 1)")


@dataclass
class TrainLog:
    rows: list = field(default_factory=list)  # (epoch, train_mse, val_rmse, val_pcc)

    def append(self, epoch, train_mse, val_rmse, val_pcc):
        self.rows.append((int(epoch), float(train_mse),
                          float("nan") if val_rmse is None else float(val_rmse),
                          float("nan") if val_pcc is None else float(val_pcc)))

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["epoch", "train_mse", "val_rmse", "val_pcc"])
            for epoch, mse, rmse, pcc in self.rows:
                w.writerow([epoch, repr(mse), repr(rmse), repr(pcc)])


def train_step(params: ModelParams, opt: OptimizerState, batch, cfg: TrainConfig,
               dropout_seed: int | None = None) -> float:
    """One gradient step on a batch of (MelSegments, mos) pairs.

    All clips must share a segment count. Returns the batch MSE; a
    non-finite loss aborts with the step index.
    """
    if not batch:
        raise ValueError("empty batch")
    seg_counts = {seg.n_seg for seg, _ in batch}
    if len(seg_counts) != 1:
        raise ValueError(f"batch mixes segment counts {sorted(seg_counts)}")
    x = np.stack([seg.data for seg, _ in batch])
    y = np.array([mos for _, mos in batch], dtype=np.float64)
    return _train_step_arrays(params, opt, x, y, cfg, dropout_seed)


def _train_step_arrays(params, opt, x, y, cfg, dropout_seed=None) -> float:
    if dropout_seed is None:
        dropout_seed = mix_seed(cfg.seed, _DROPOUT_TAG, opt.step)
    rng = make_rng(dropout_seed) if cfg.dropout_rate > 0 else None
    preds, cache = forward_batch(
        params, x, train=True, dropout_rate=cfg.dropout_rate, rng=rng, want_cache=True
    )
    err = preds.astype(np.float64) - y
    loss = float(np.mean(err**2))
    if not math.isfinite(loss):
        raise DivergenceError(f"non-finite loss at step {opt.step + 1}", step=opt.step + 1)
    dpreds = (2.0 / len(y)) * err
    grads = backward_batch(params, dpreds, cache)
    adam_step(opt, params, grads)
    return loss


def _val_metrics(params, val_x, val_y):
    from ..evaluation import pearson, rmse  # deferred: evaluation imports nn

    preds = predict_batch(params, val_x)
    val_rmse = rmse(preds, val_y)
    try:
        val_pcc = pearson(preds, val_y)
    except UndefinedCorrelationError:
        val_pcc = None
    return val_rmse, val_pcc


def train_model(train_x, train_y, val_x=None, val_y=None, *,
                cfg: TrainConfig = TrainConfig(), params: ModelParams | None = None,
                arch=None, log_path=None):
    """Train (or continue training) a model on stacked segment tensors.

    train_x: (N, S, 1, mels, width); train_y: (N,). When a validation set
    is given, the epoch with the best val RMSE wins and early stopping
    applies after cfg.patience stale epochs. Returns (params, TrainLog).
    """
    train_x = np.asarray(train_x)
    train_y = np.asarray(train_y, dtype=np.float64)
    n = train_x.shape[0]
    if n == 0:
        raise ValueError("empty training set")
    if params is None:
        from .model import DEFAULT_ARCH

        params = init_params(arch or DEFAULT_ARCH, seed=mix_seed(cfg.seed, 0x1417))
    opt = init_optimizer(params, lr=cfg.lr)
    log = TrainLog()

    best_rmse = math.inf
    best_tensors = None
    stale = 0
    for epoch in range(1, cfg.max_epochs + 1):
        perm = make_rng(mix_seed(cfg.seed, _SHUFFLE_TAG, epoch)).permutation(n)
        total = 0.0
        for i in range(0, n, cfg.batch_size):
            idx = perm[i : i + cfg.batch_size]
            loss = _train_step_arrays(params, opt, train_x[idx], train_y[idx], cfg)
            total += loss * len(idx)
        train_mse = total / n

        val_rmse = val_pcc = None
        if val_x is not None and len(val_x):
            val_rmse, val_pcc = _val_metrics(params, val_x, val_y)
            if val_rmse < best_rmse - 1e-12:
                best_rmse = val_rmse
                best_tensors = {k: t.copy() for k, t in params.tensors.items()}
                stale = 0
            else:
                stale += 1
        log.append(epoch, train_mse, val_rmse, val_pcc)
        if val_x is not None and cfg.patience > 0 and stale >= cfg.patience:
            break

    if best_tensors is not None:
        params = ModelParams(best_tensors, params.arch)
    if log_path is not None:
        log.write_csv(log_path)
    return params, log
