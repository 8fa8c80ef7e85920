"""Experiment harness: ratings-count sweep, training-size sweep, the
files-vs-ratings group matrix, and the cropping study, all reproducible
from a base seed.

Per-run seeds mix (base_seed, grid index, repeat) through splitmix64, so
no two runs share RNG streams and a fixed base seed reproduces every row.
SQM_THREADS caps how many runs execute concurrently (default 1).
"""

from __future__ import annotations

import csv
import json
import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field, replace

import numpy as np

from .audio import AudioClip
from .dataprep import RatingRecord, aggregate_mos, subsample_ratings
from .errors import (
    InsufficientDataError,
    InsufficientRatingsError,
    UndefinedCorrelationError,
)
from .evaluation import TTestResult, paired_ttest, pearson, rmse
from .nn.model import DEFAULT_ARCH
from .nn.train import TrainConfig, train_model
from .nn.model import predict_batch
from .rng import make_rng, mix_seed
from .synth import SweepDataset, SynthSpec, build_dataset

EXPERIMENT_KINDS = ("ratings_sweep", "size_sweep", "group_matrix", "cropping")

_LABEL_TAG = 0x1AB
_SUBSET_TAG = 0x5AB


@dataclass
class ExperimentConfig:
    kind: str
    repeats: int = 6
    ratings_range: tuple | None = None  # (lo, hi), inclusive
    ratings_grid: list | None = None  # explicit grid, overrides the range
    size_grid: list | None = None
    groups: list | None = None  # [{"n_files": int, "n_ratings": int}, ...]
    base_seed: int = 0
    train: TrainConfig = field(default_factory=TrainConfig)
    data: SynthSpec = field(default_factory=SynthSpec)
    cropping: dict | None = None

    def __post_init__(self):
        if self.kind not in EXPERIMENT_KINDS:
            raise ValueError(f"unknown experiment kind {self.kind!r}")
        if self.repeats < 1:
            raise ValueError("repeats must be >= 1")
        if self.kind == "ratings_sweep" and not (self.ratings_grid or self.ratings_range):
            raise ValueError("ratings_sweep needs ratings_grid or ratings_range")
        if self.kind == "size_sweep" and not self.size_grid:
            raise ValueError("size_sweep needs size_grid")
        if self.kind == "group_matrix" and not self.groups:
            raise ValueError("group_matrix needs groups")

    @property
    def ratings_values(self) -> list:
        if self.ratings_grid:
            return [int(k) for k in self.ratings_grid]
        lo, hi = self.ratings_range
        return list(range(int(lo), int(hi) + 1))

    @classmethod
    def from_dict(cls, d: dict) -> "ExperimentConfig":
        d = dict(d)
        if "train" in d:
            d["train"] = TrainConfig(**d["train"])
        if "data" in d:
            d["data"] = SynthSpec(**{k: tuple(v) if k == "noise_kinds" else v
                                     for k, v in d["data"].items()})
        if "ratings_range" in d and d["ratings_range"] is not None:
            d["ratings_range"] = tuple(d["ratings_range"])
        return cls(**d)

    @classmethod
    def from_json(cls, path) -> "ExperimentConfig":
        with open(path, encoding="utf-8") as f:
            return cls.from_dict(json.load(f))


@dataclass
class SweepRow:
    x: object  # grid value or group id
    run: int
    val_pcc: float
    val_rmse: float


@dataclass
class SweepResult:
    rows: list = field(default_factory=list)

    def write_csv(self, path):
        with open(path, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["x", "run", "val_pcc", "val_rmse"])
            for r in self.rows:
                w.writerow([r.x, r.run, repr(float(r.val_pcc)), repr(float(r.val_rmse))])

    def csv_text(self) -> str:
        lines = ["x,run,val_pcc,val_rmse"]
        for r in self.rows:
            lines.append(f"{r.x},{r.run},{float(r.val_pcc)!r},{float(r.val_rmse)!r}")
        return "\n".join(lines) + "\n"

    def mean_pcc_by_x(self) -> dict:
        acc: dict = {}
        for r in self.rows:
            acc.setdefault(r.x, []).append(r.val_pcc)
        return {x: float(np.mean(v)) for x, v in acc.items()}


def _run_training(ds: SweepDataset, labels: np.ndarray, cfg: ExperimentConfig, run_seed: int,
                  train_idx=None):
    sub = ds if train_idx is None else ds.train_subset(train_idx)
    tcfg = replace(cfg.train, seed=run_seed)
    params, _ = train_model(sub.train_x, labels, sub.val_x, sub.val_mos, cfg=tcfg,
                            arch=DEFAULT_ARCH)
    preds = predict_batch(params, sub.val_x)
    try:
        pcc = pearson(preds, sub.val_mos)
    except UndefinedCorrelationError:
        pcc = float("nan")
    return pcc, rmse(preds, sub.val_mos)


def _map_runs(fn, specs):
    workers = int(os.environ.get("SQM_THREADS", "1"))
    if workers <= 1:
        return [fn(s) for s in specs]
    with ThreadPoolExecutor(max_workers=workers) as pool:
        return list(pool.map(fn, specs))


def run_ratings_sweep(cfg: ExperimentConfig, ds: SweepDataset) -> SweepResult:
    """Retrain with MOS labels recomputed from k randomly chosen ratings,
    for each k in the grid, `repeats` times each."""
    grid = cfg.ratings_values
    hi = max(grid)
    for rec in ds.train_ratings:
        if len(rec.ratings) < hi:
            raise InsufficientRatingsError(
                f"{rec.clip_id!r} has {len(rec.ratings)} ratings, sweep needs {hi}"
            )

    def one(spec):
        gi, k, rep = spec
        run_seed = mix_seed(cfg.base_seed, gi, rep)
        labels = np.array(
            [
                subsample_ratings(rec, k, mix_seed(run_seed, _LABEL_TAG, j)).mos
                for j, rec in enumerate(ds.train_ratings)
            ]
        )
        pcc, r = _run_training(ds, labels, cfg, run_seed)
        return SweepRow(x=k, run=rep, val_pcc=pcc, val_rmse=r)

    specs = [(gi, k, rep) for gi, k in enumerate(grid) for rep in range(cfg.repeats)]
    return SweepResult(rows=_map_runs(one, specs))


def run_size_sweep(cfg: ExperimentConfig, ds: SweepDataset) -> SweepResult:
    """Retrain on uniform file subsets of each size in the grid."""
    n = ds.train_x.shape[0]
    if max(cfg.size_grid) > n:
        raise InsufficientDataError(
            f"size grid max {max(cfg.size_grid)} exceeds {n} training files"
        )
    full_labels = ds.train_mos

    def one(spec):
        gi, size, rep = spec
        run_seed = mix_seed(cfg.base_seed, gi, rep)
        idx = np.sort(make_rng(mix_seed(run_seed, _SUBSET_TAG)).choice(n, size=size, replace=False))
        pcc, r = _run_training(ds, full_labels[idx], cfg, run_seed, train_idx=idx)
        return SweepRow(x=int(size), run=rep, val_pcc=pcc, val_rmse=r)

    specs = [(gi, int(s), rep) for gi, s in enumerate(cfg.size_grid) for rep in range(cfg.repeats)]
    return SweepResult(rows=_map_runs(one, specs))


def run_group_matrix(cfg: ExperimentConfig, ds: SweepDataset) -> SweepResult:
    """Files-vs-ratings trade-off: each group fixes (n_files, n_ratings)."""
    n = ds.train_x.shape[0]
    min_ratings = min(len(r.ratings) for r in ds.train_ratings)
    for gi, grp in enumerate(cfg.groups):
        if grp["n_files"] > n or grp["n_ratings"] > min_ratings:
            raise InsufficientDataError(
                f"group {gi + 1} needs {grp['n_files']} files x {grp['n_ratings']} ratings, "
                f"have {n} files with >= {min_ratings} ratings"
            )

    def one(spec):
        gi, grp, rep = spec
        run_seed = mix_seed(cfg.base_seed, gi, rep)
        idx = np.sort(
            make_rng(mix_seed(run_seed, _SUBSET_TAG)).choice(n, size=grp["n_files"], replace=False)
        )
        labels = np.array(
            [
                subsample_ratings(
                    ds.train_ratings[i], grp["n_ratings"], mix_seed(run_seed, _LABEL_TAG, int(i))
                ).mos
                for i in idx
            ]
        )
        pcc, r = _run_training(ds, labels, cfg, run_seed, train_idx=idx)
        return SweepRow(x=gi + 1, run=rep, val_pcc=pcc, val_rmse=r)

    specs = [(gi, grp, rep) for gi, grp in enumerate(cfg.groups) for rep in range(cfg.repeats)]
    return SweepResult(rows=_map_runs(one, specs))


@dataclass
class CroppingPair:
    cropped_ratings: RatingRecord | None = None
    uncropped_ratings: RatingRecord | None = None
    cropped_clip: AudioClip | None = None
    uncropped_clip: AudioClip | None = None


def run_cropping_study(pairs: list[CroppingPair], scorer="labels") -> TTestResult:
    """Paired t-test between cropped and uncropped versions of the same
    material, scored by rating panels or by a model."""
    if len(pairs) < 2:
        raise ValueError("need at least two pairs")
    if scorer == "labels":
        a = [aggregate_mos(p.cropped_ratings).mos for p in pairs]
        b = [aggregate_mos(p.uncropped_ratings).mos for p in pairs]
    else:
        if not callable(scorer):
            from .evaluation import make_model_scorer

            scorer = make_model_scorer(scorer)
        a = [float(scorer(p.cropped_clip)) for p in pairs]
        b = [float(scorer(p.uncropped_clip)) for p in pairs]
    return paired_ttest(a, b)


def _synthetic_cropping_pairs(cfg: ExperimentConfig) -> list[CroppingPair]:
    from .dataprep import simulate_ratings

    opts = cfg.cropping or {}
    n_pairs = int(opts.get("n_pairs", 15))
    mos_delta = float(opts.get("mos_delta", 0.0))
    rater_sd = float(opts.get("rater_sd", 0.8))
    n_ratings = int(opts.get("n_ratings", 20))
    base_mos_rng = make_rng(mix_seed(cfg.base_seed, 0xC0))
    pairs = []
    for i in range(n_pairs):
        base = 1.5 + 2.5 * base_mos_rng.random()
        cropped = simulate_ratings(
            min(max(base + mos_delta, 1.0), 5.0), n_ratings, rater_sd, mix_seed(cfg.base_seed, 0xC1, i)
        )
        uncropped = simulate_ratings(base, n_ratings, rater_sd, mix_seed(cfg.base_seed, 0xC2, i))
        pairs.append(CroppingPair(cropped_ratings=cropped, uncropped_ratings=uncropped))
    return pairs


def run_experiment(cfg: ExperimentConfig):
    """Build the synthetic dataset the config asks for and dispatch.

    Sweep kinds return a SweepResult; the cropping kind returns a
    TTestResult.
    """
    if cfg.kind == "cropping":
        return run_cropping_study(_synthetic_cropping_pairs(cfg))
    ds = build_dataset(cfg.data, base_seed=mix_seed(cfg.base_seed, 0xDA7A))
    if cfg.kind == "ratings_sweep":
        return run_ratings_sweep(cfg, ds)
    if cfg.kind == "size_sweep":
        return run_size_sweep(cfg, ds)
    return run_group_matrix(cfg, ds)
