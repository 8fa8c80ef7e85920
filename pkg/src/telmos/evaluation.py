"""Metrics and report assembly: Pearson correlation, RMSE, the paired
t-test (p-value via a continued-fraction regularized incomplete beta, no
table lookups), bin-uniform resampled evaluation, and end-to-end scoring
of a manifest into an EvalReport.
"""

from __future__ import annotations

import csv
import json
import math
from dataclasses import asdict, dataclass, field

import numpy as np

from .audio import AudioClip, read_wav, resample_to_8k
from .dataprep import Manifest, ManifestEntry, MosLabel, sample_uniform_subset
from .dsp import DEFAULT_FRONTEND, clip_to_segments
from .errors import (
    DegenerateTestError,
    MissingLabelError,
    ShapeError,
    TelmosError,
    UndefinedCorrelationError,
)
from .rng import mix_seed

HISTOGRAM_BINS = 8
HISTOGRAM_RANGE = (1.0, 5.0)


@dataclass
class TTestResult:
    t: float
    df: int
    p_two_tailed: float
    mean_diff: float


@dataclass
class EvalReport:
    dataset_name: str
    n: int
    pcc: float | None
    rmse: float
    mos_histogram: list[int]
    pcc_reason: str | None = None
    uniform_subset: dict | None = None
    skipped: list[str] = field(default_factory=list)

    def to_json(self) -> str:
        return json.dumps(asdict(self), indent=2)


def pearson(x, y) -> float:
    """Pearson correlation coefficient, computed in double precision."""
    x = np.asarray(x, dtype=np.float64)
    y = np.asarray(y, dtype=np.float64)
    if x.shape != y.shape or x.ndim != 1:
        raise ShapeError(f"need equal-length vectors, got {x.shape} and {y.shape}")
    if x.size < 2:
        raise ShapeError("need at least two points")
    xc = x - x.mean()
    yc = y - y.mean()
    sxx = float(xc @ xc)
    syy = float(yc @ yc)
    if sxx == 0.0 or syy == 0.0:
        raise UndefinedCorrelationError("correlation undefined for a constant vector")
    return float(xc @ yc) / math.sqrt(sxx * syy)


def rmse(pred, target) -> float:
    pred = np.asarray(pred, dtype=np.float64)
    target = np.asarray(target, dtype=np.float64)
    if pred.shape != target.shape or pred.ndim != 1:
        raise ShapeError(f"need equal-length vectors, got {pred.shape} and {target.shape}")
    if pred.size == 0:
        raise ShapeError("need at least one point")
    d = pred - target
    return math.sqrt(float(d @ d) / d.size)


def _betacf(a, b, x, tol=1e-14, max_iter=400):
    """Continued fraction for the incomplete beta (modified Lentz)."""
    tiny = 1e-300
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < tiny:
        d = tiny
    d = 1.0 / d
    h = d
    for m in range(1, max_iter + 1):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        if abs(d) < tiny:
            d = tiny
        c = 1.0 + aa / c
        if abs(c) < tiny:
            c = tiny
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < tol:
            return h
    raise ArithmeticError("incomplete beta continued fraction did not converge")


def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x outside [0, 1]")
    if x == 0.0 or x == 1.0:
        return x
    ln_front = (
        math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
        + a * math.log(x) + b * math.log1p(-x)
    )
    front = math.exp(ln_front)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, 1.0 - x) / b


def paired_ttest(a, b) -> TTestResult:
    """Two-tailed paired t-test on equal-length vectors."""
    a = np.asarray(a, dtype=np.float64)
    b = np.asarray(b, dtype=np.float64)
    if a.shape != b.shape or a.ndim != 1:
        raise ShapeError(f"need equal-length vectors, got {a.shape} and {b.shape}")
    n = a.size
    if n < 2:
        raise ShapeError("need at least two pairs")
    d = a - b
    sd = float(d.std(ddof=1))
    if sd == 0.0:
        raise DegenerateTestError("paired differences have zero variance")
    mean_diff = float(d.mean())
    t = mean_diff / (sd / math.sqrt(n))
    df = n - 1
    x = df / (df + t * t)
    p = min(max(reg_inc_beta(df / 2.0, 0.5, x), 0.0), 1.0)
    return TTestResult(t=t, df=df, p_two_tailed=p, mean_diff=mean_diff)


def uniform_subset_eval(preds: dict, labels: list[MosLabel], repeats: int = 1000,
                        rng_seed: int = 0) -> dict:
    """Mean/sd of Pearson correlation over repeated bin-uniform subsets.

    Each repeat draws 13 files per MOS bin with a seed derived from
    (rng_seed, repeat index) and correlates predictions against labels on
    those 39 files.
    """
    by_id = {lab.clip_id: lab.mos for lab in labels}
    missing = [cid for cid in by_id if cid not in preds]
    if missing:
        raise MissingLabelError(f"no prediction for clip {missing[0]!r}")
    pccs = np.empty(repeats, dtype=np.float64)
    for r in range(repeats):
        ids = sample_uniform_subset(labels, mix_seed(rng_seed, r))
        pccs[r] = pearson([by_id[c] for c in ids], [preds[c] for c in ids])
    return {
        "repeats": int(repeats),
        "mean_pcc": float(pccs.mean()),
        "sd_pcc": float(pccs.std()),
    }


def make_model_scorer(params, cfg=DEFAULT_FRONTEND):
    """Clip -> MOS callable running the front-end plus eval-mode forward."""
    from .nn.model import model_forward

    def scorer(clip: AudioClip) -> float:
        return model_forward(params, clip_to_segments(clip, cfg))

    return scorer


def _load_clip(entry: ManifestEntry) -> AudioClip:
    clip = resample_to_8k(read_wav(entry.file_path))
    return clip.with_(
        clip_id=entry.clip_id,
        speaker_id=entry.speaker_id,
        sentence_id=entry.sentence_id,
        condition=entry.condition,
        snr_db=entry.snr_db,
    )


def evaluate(model, manifest, labels, *, dataset_name: str = "", scorer=None,
             frontend=DEFAULT_FRONTEND, skip_bad: bool = False,
             uniform_repeats: int | None = None, rng_seed: int = 0,
             per_clip_csv=None) -> EvalReport:
    """Score every manifest entry and assemble metrics.

    model may be ModelParams (scored through the front-end) or None when a
    scorer callable is injected. Clips are processed in clip_id order.
    Decode/front-end failures raise unless skip_bad, in which case they are
    collected in the report. Setting uniform_repeats adds the bin-uniform
    resampled PCC block.
    """
    entries = manifest.entries if isinstance(manifest, Manifest) else list(manifest)
    label_map = {lab.clip_id: lab for lab in labels}
    if scorer is None:
        scorer = make_model_scorer(model, frontend)

    rows = []  # (clip_id, mos, prediction)
    skipped = []
    for entry in sorted(entries, key=lambda e: e.clip_id):
        if entry.clip_id not in label_map:
            raise MissingLabelError(f"no label for clip {entry.clip_id!r}")
        try:
            clip = _load_clip(entry)
            pred = float(scorer(clip))
        except (TelmosError, OSError) as e:
            if not skip_bad:
                raise
            skipped.append(f"{entry.clip_id}: {e}")
            continue
        rows.append((entry.clip_id, label_map[entry.clip_id].mos, pred))

    mos = np.array([r[1] for r in rows])
    preds = np.array([r[2] for r in rows])
    pcc = None
    reason = None
    try:
        pcc = pearson(mos, preds)
    except (UndefinedCorrelationError, ShapeError) as e:
        reason = str(e)
    hist, _ = np.histogram(mos, bins=HISTOGRAM_BINS, range=HISTOGRAM_RANGE)

    uniform = None
    if uniform_repeats:
        pred_map = {cid: p for cid, _, p in rows}
        present = [label_map[cid] for cid, _, _ in rows]
        uniform = uniform_subset_eval(pred_map, present, uniform_repeats, rng_seed)

    if per_clip_csv is not None:
        with open(per_clip_csv, "w", newline="", encoding="utf-8") as f:
            w = csv.writer(f)
            w.writerow(["clip_id", "mos", "prediction"])
            for cid, m, p in rows:
                w.writerow([cid, repr(float(m)), repr(float(p))])

    return EvalReport(
        dataset_name=dataset_name,
        n=len(rows),
        pcc=pcc,
        rmse=rmse(preds, mos) if len(rows) else 0.0,
        mos_histogram=hist.tolist(),
        pcc_reason=reason,
        uniform_subset=uniform,
        skipped=skipped,
    )
