"""Dataset construction: SNR-controlled noise mixing, active-clip
extraction, speaker-disjoint splitting, rating aggregation/subsampling,
rating simulation, and bin-uniform subset draws.

Also owns the CSV formats: manifests, per-rating rows, and MOS labels.
"""

from __future__ import annotations

import csv
import math
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np

from .audio import CANONICAL_RATE, CONDITIONS, AudioClip
from .dsp import speech_activity
from .errors import (
    BoundsError,
    DegenerateNoiseError,
    EmptyRatingsError,
    InsufficientBinError,
    InvalidKError,
    InvalidSplitError,
    ManifestError,
    NoActiveWindowError,
    NoSpeechError,
    TooShortError,
)
from .rng import make_rng

SPLITS = ("train", "val", "test")
SNR_RANGE_DB = (0.0, 40.0)
UNIFORM_BIN_EDGES = (1.5, 2.5, 3.5, 4.5)  # three bins, last edge inclusive
UNIFORM_PER_BIN = 13


@dataclass
class RatingRecord:
    """Post-screening 1..5 integer ratings for one clip."""

    clip_id: str
    ratings: list[int]

    def __post_init__(self):
        if not self.ratings:
            raise EmptyRatingsError(f"no ratings for {self.clip_id!r}")
        if any(int(r) != r or not 1 <= r <= 5 for r in self.ratings):
            raise ValueError(f"ratings for {self.clip_id!r} must be integers in [1, 5]")
        self.ratings = [int(r) for r in self.ratings]


@dataclass
class MosLabel:
    clip_id: str
    mos: float
    ci95: float
    n_ratings: int


@dataclass
class ManifestEntry:
    clip_id: str
    file_path: str
    speaker_id: str
    sentence_id: str
    condition: str = "clean"
    snr_db: float | None = None
    split: str = "train"

    def __post_init__(self):
        if self.condition not in CONDITIONS:
            raise ManifestError(f"unknown condition {self.condition!r}")
        if self.split not in SPLITS:
            raise ManifestError(f"unknown split {self.split!r}")


@dataclass
class Manifest:
    entries: list[ManifestEntry] = field(default_factory=list)

    def __post_init__(self):
        self.validate()

    def validate(self):
        ids = [e.clip_id for e in self.entries]
        if len(set(ids)) != len(ids):
            raise ManifestError("duplicate clip_ids in manifest")
        train = {e.speaker_id for e in self.entries if e.split == "train"}
        val = {e.speaker_id for e in self.entries if e.split == "val"}
        if train & val:
            raise ManifestError(f"speakers in both train and val: {sorted(train & val)[:5]}")

    def subset(self, split: str) -> list[ManifestEntry]:
        return [e for e in self.entries if e.split == split]

    @property
    def speakers(self) -> set[str]:
        return {e.speaker_id for e in self.entries}


def aggregate_mos(record: RatingRecord) -> MosLabel:
    """Mean rating with a normal-approximation 95 % confidence interval
    (sample sd, n-1 denominator); a single rating gives ci95 = 0."""
    r = np.asarray(record.ratings, dtype=np.float64)
    n = r.size
    mos = float(r.mean())
    if n == 1:
        ci = 0.0
    else:
        sd = float(r.std(ddof=1))
        ci = 1.96 * sd / math.sqrt(n)
    return MosLabel(clip_id=record.clip_id, mos=mos, ci95=ci, n_ratings=int(n))


def subsample_ratings(record: RatingRecord, k: int, rng_seed: int) -> MosLabel:
    """Aggregate over k ratings drawn uniformly without replacement."""
    n = len(record.ratings)
    if not 1 <= k <= n:
        raise InvalidKError(f"k={k} outside [1, {n}] for {record.clip_id!r}")
    rng = make_rng(rng_seed)
    picked = rng.choice(n, size=k, replace=False)
    chosen = [record.ratings[i] for i in picked]
    return aggregate_mos(RatingRecord(clip_id=record.clip_id, ratings=chosen))


def simulate_ratings(true_mos: float, n: int, rater_sd: float, rng_seed: int) -> RatingRecord:
    """Synthetic rater panel: round(true_mos + N(0, sd)) clamped to [1, 5]."""
    if not 1.0 <= true_mos <= 5.0:
        raise BoundsError(f"true_mos {true_mos} outside [1, 5]")
    if n < 1:
        raise ValueError("need at least one rating")
    if rater_sd < 0:
        raise ValueError("rater_sd must be non-negative")
    rng = make_rng(rng_seed)
    raw = true_mos + rng.normal(0.0, rater_sd, size=n) if rater_sd > 0 else np.full(n, true_mos)
    ratings = np.clip(np.rint(raw), 1, 5).astype(int)
    return RatingRecord(clip_id="", ratings=ratings.tolist())


def mix_noise(speech: AudioClip, noise: AudioClip, snr_db: float, rng_seed: int) -> AudioClip:
    """Mix noise into speech at a target SNR.

    SNR is active-speech-level power over mean noise power, so silence in
    the speech does not skew the ratio. The noise is tiled to speech length
    from a random circular offset. If the mixture peaks above 1.0 the whole
    mixture is scaled back to 0.999; the applied gains land in meta.
    """
    if speech.sample_rate_hz != CANONICAL_RATE or noise.sample_rate_hz != CANONICAL_RATE:
        raise ValueError("mix_noise expects canonical 8 kHz clips")
    if not SNR_RANGE_DB[0] <= snr_db <= SNR_RANGE_DB[1]:
        raise BoundsError(f"snr_db {snr_db} outside {SNR_RANGE_DB}")
    if not np.any(noise.samples):
        raise DegenerateNoiseError("noise clip is silent")
    activity = speech_activity(speech)  # NoSpeechError propagates
    speech_power = 10.0 ** (activity.active_speech_level_db / 10.0)

    n = len(speech.samples)
    rng = make_rng(rng_seed)
    offset = int(rng.integers(0, len(noise.samples)))
    idx = (offset + np.arange(n)) % len(noise.samples)
    aligned = noise.samples[idx]
    noise_power = float(np.mean(aligned**2))
    if noise_power == 0.0:
        raise DegenerateNoiseError("noise window is silent")

    gain = math.sqrt(speech_power / (10.0 ** (snr_db / 10.0) * noise_power))
    mix = speech.samples + gain * aligned
    peak = float(np.max(np.abs(mix)))
    peak_scale = 0.999 / peak if peak > 1.0 else 1.0
    mix = mix * peak_scale

    meta = dict(speech.meta)
    meta.update(noise_gain=gain, peak_scale=peak_scale, noise_offset=offset)
    return speech.with_(samples=mix, condition="noisy", snr_db=float(snr_db), meta=meta)


def extract_clip(
    source: AudioClip,
    rng_seed: int,
    *,
    clip_seconds: float = 10.0,
    min_activity: float = 0.5,
    max_attempts: int = 100,
) -> AudioClip:
    """Random fixed-length window with enough speech activity.

    Offsets are redrawn until a window reaches the activity threshold; after
    max_attempts the source is declared unusable.
    """
    fs = source.sample_rate_hz
    n_clip = round(clip_seconds * fs)
    n = len(source.samples)
    if n < n_clip:
        raise TooShortError(f"source is {n / fs:.2f} s, need {clip_seconds} s")
    rng = make_rng(rng_seed)
    for _ in range(max_attempts):
        start = int(rng.integers(0, n - n_clip + 1))
        window = source.samples[start : start + n_clip]
        candidate = source.with_(samples=window.copy())
        try:
            activity = speech_activity(candidate)
        except NoSpeechError:
            continue
        if activity.activity_factor >= min_activity:
            candidate.meta = dict(source.meta, extract_offset=start)
            return candidate
    raise NoActiveWindowError(
        f"no window with activity >= {min_activity} in {max_attempts} attempts"
    )


def split_by_speaker(manifest: Manifest, n_val_speakers: int, rng_seed: int) -> Manifest:
    """Assign whole speakers to the validation split, everyone else trains."""
    speakers = sorted(manifest.speakers)
    if n_val_speakers >= len(speakers):
        raise InvalidSplitError(
            f"n_val_speakers={n_val_speakers} must be < {len(speakers)} speakers"
        )
    rng = make_rng(rng_seed)
    val = set(rng.choice(speakers, size=n_val_speakers, replace=False)) if n_val_speakers else set()
    entries = [
        ManifestEntry(
            clip_id=e.clip_id,
            file_path=e.file_path,
            speaker_id=e.speaker_id,
            sentence_id=e.sentence_id,
            condition=e.condition,
            snr_db=e.snr_db,
            split="val" if e.speaker_id in val else "train",
        )
        for e in manifest.entries
    ]
    return Manifest(entries=entries)


def sample_uniform_subset(labels: list[MosLabel], rng_seed: int) -> list[str]:
    """Draw 13 clip ids per MOS bin [1.5,2.5), [2.5,3.5), [3.5,4.5].

    Labels outside [1.5, 4.5] are ignored; an under-populated bin is an
    error naming the bin.
    """
    e = UNIFORM_BIN_EDGES
    bins = [[], [], []]
    for lab in labels:
        if e[0] <= lab.mos < e[1]:
            bins[0].append(lab.clip_id)
        elif e[1] <= lab.mos < e[2]:
            bins[1].append(lab.clip_id)
        elif e[2] <= lab.mos <= e[3]:
            bins[2].append(lab.clip_id)
    rng = make_rng(rng_seed)
    chosen: list[str] = []
    for i, members in enumerate(bins):
        if len(members) < UNIFORM_PER_BIN:
            hi = "]" if i == 2 else ")"
            raise InsufficientBinError(
                f"bin [{e[i]}, {e[i + 1]}{hi} holds {len(members)} labels, need {UNIFORM_PER_BIN}",
                bin_index=i,
            )
        chosen.extend(rng.choice(sorted(members), size=UNIFORM_PER_BIN, replace=False))
    return chosen


# --- CSV formats ----------------------------------------------------------

_MANIFEST_HEADER = ["clip_id", "file_path", "speaker_id", "sentence_id", "condition", "snr_db", "split"]


def write_manifest(manifest: Manifest, path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(_MANIFEST_HEADER)
        for e in manifest.entries:
            snr = "" if e.snr_db is None else repr(float(e.snr_db))
            w.writerow([e.clip_id, e.file_path, e.speaker_id, e.sentence_id, e.condition, snr, e.split])


def read_manifest(path) -> Manifest:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != _MANIFEST_HEADER:
        raise ManifestError(f"bad manifest header in {path}")
    entries = []
    for row in rows[1:]:
        if len(row) != len(_MANIFEST_HEADER):
            raise ManifestError(f"bad manifest row: {row}")
        cid, fp, spk, sent, cond, snr, split = row
        entries.append(
            ManifestEntry(
                clip_id=cid,
                file_path=fp,
                speaker_id=spk,
                sentence_id=sent,
                condition=cond,
                snr_db=None if snr == "" else float(snr),
                split=split,
            )
        )
    return Manifest(entries=entries)


def write_ratings(records: list[RatingRecord], path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["clip_id", "rating"])
        for rec in records:
            for r in rec.ratings:
                w.writerow([rec.clip_id, r])


def read_ratings(path) -> list[RatingRecord]:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != ["clip_id", "rating"]:
        raise ManifestError(f"bad ratings header in {path}")
    grouped: dict[str, list[int]] = {}
    for cid, rating in rows[1:]:
        grouped.setdefault(cid, []).append(int(rating))
    return [RatingRecord(clip_id=cid, ratings=r) for cid, r in grouped.items()]


def write_labels(labels: list[MosLabel], path):
    with open(path, "w", newline="", encoding="utf-8") as f:
        w = csv.writer(f)
        w.writerow(["clip_id", "mos", "ci95", "n_ratings"])
        for lab in labels:
            w.writerow([lab.clip_id, repr(float(lab.mos)), repr(float(lab.ci95)), lab.n_ratings])


def read_labels(path) -> list[MosLabel]:
    with open(path, newline="", encoding="utf-8") as f:
        rows = list(csv.reader(f))
    if not rows or rows[0] != ["clip_id", "mos", "ci95", "n_ratings"]:
        raise ManifestError(f"bad labels header in {path}")
    return [
        MosLabel(clip_id=cid, mos=float(m), ci95=float(ci), n_ratings=int(n))
        for cid, m, ci, n in rows[1:]
    ]
