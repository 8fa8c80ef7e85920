"""Synthetic desk-scale data: harmonic "speech" tones, shaped noise, and
fully labeled regression datasets.

Each synthetic speaker owns a fundamental, spectral tilt and syllable
rate; clips add per-clip phases. Quality ground truth is a fixed monotone
map from mixing SNR to MOS, and rating panels come from the discretized
Gaussian rater model, so experiments have a known answer at any scale.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from scipy.signal import lfilter

from .audio import CANONICAL_RATE, AudioClip
from .dataprep import (
    Manifest,
    ManifestEntry,
    RatingRecord,
    aggregate_mos,
    mix_noise,
    simulate_ratings,
    split_by_speaker,
)
from .dsp import DEFAULT_FRONTEND, clip_to_segments
from .rng import make_rng, mix_seed

NOISE_KINDS = ("white", "pink", "brown")

# Paul Kellet's 1/f filter approximation.
_PINK_B = (0.049922035, -0.095993537, 0.050612699, -0.004408786)
_PINK_A = (1.0, -2.494956002, 2.017265875, -0.522189400)


def true_mos_from_snr(snr_db: float) -> float:
    """Fixed monotone SNR -> MOS map used for synthetic ground truth."""
    return 1.0 + 4.0 * float(snr_db) / 40.0


def synth_speech(seconds: float, speaker_seed: int, clip_seed: int,
                 fs: int = CANONICAL_RATE) -> AudioClip:
    """Harmonic stack with speaker-specific fundamental/tilt/syllable rate,
    amplitude modulated so activity stays high but quiet dips exist."""
    sp = make_rng(speaker_seed)
    f0 = 90.0 + 140.0 * sp.random()
    tilt = 0.6 + 0.8 * sp.random()
    am_rate = 2.5 + 1.5 * sp.random()

    cl = make_rng(clip_seed)
    n = round(seconds * fs)
    t = np.arange(n) / fs
    n_harm = max(int(3400.0 / f0), 3)
    k = np.arange(1, n_harm + 1)
    amps = k ** (-tilt)
    phases = cl.uniform(0.0, 2.0 * np.pi, size=n_harm)
    x = (amps[:, None] * np.sin(2.0 * np.pi * np.outer(k * f0, t) + phases[:, None])).sum(axis=0)

    am_phase = cl.uniform(0.0, 2.0 * np.pi)
    am = 0.15 + 0.85 * (0.5 + 0.5 * np.sin(2.0 * np.pi * am_rate * t + am_phase)) ** 2
    x *= am
    x *= 0.35 / np.max(np.abs(x))
    return AudioClip(samples=x, sample_rate_hz=fs)


def synth_noise(kind: str, seconds: float, seed: int,
                fs: int = CANONICAL_RATE, rms: float = 0.1) -> AudioClip:
    if kind not in NOISE_KINDS:
        raise ValueError(f"unknown noise kind {kind!r}")
    rng = make_rng(seed)
    warmup = 2000
    n = round(seconds * fs)
    w = rng.standard_normal(n + warmup)
    if kind == "pink":
        w = lfilter(_PINK_B, _PINK_A, w)
    elif kind == "brown":
        w = lfilter([1.0], [1.0, -0.995], w)
    x = w[warmup:]
    x = x - x.mean()
    x *= rms / np.sqrt(np.mean(x**2))
    peak = np.max(np.abs(x))
    if peak > 0.95:
        x *= 0.95 / peak
    return AudioClip(samples=x, sample_rate_hz=fs)


@dataclass(frozen=True)
class SynthSpec:
    """Knobs of a synthetic labeled dataset."""

    n_clips: int = 600
    n_speakers: int = 60
    n_val_speakers: int = 10
    clip_seconds: float = 2.0
    n_ratings: int = 5
    rater_sd: float = 0.5
    snr_lo: float = 0.0
    snr_hi: float = 40.0
    noise_kinds: tuple = NOISE_KINDS


@dataclass
class SweepDataset:
    """In-memory regression dataset: stacked segment tensors plus labels.

    Validation MOS comes from the full rating panels; training labels are
    re-derived per experiment (aggregate or subsampled ratings).
    """

    train_x: np.ndarray
    train_ids: list[str]
    train_ratings: list[RatingRecord]
    train_true_mos: np.ndarray
    val_x: np.ndarray
    val_ids: list[str]
    val_mos: np.ndarray
    val_true_mos: np.ndarray
    manifest: Manifest = None

    @property
    def train_mos(self) -> np.ndarray:
        return np.array([aggregate_mos(r).mos for r in self.train_ratings])

    def train_subset(self, indices) -> "SweepDataset":
        idx = list(indices)
        return SweepDataset(
            train_x=self.train_x[idx],
            train_ids=[self.train_ids[i] for i in idx],
            train_ratings=[self.train_ratings[i] for i in idx],
            train_true_mos=self.train_true_mos[idx],
            val_x=self.val_x,
            val_ids=self.val_ids,
            val_mos=self.val_mos,
            val_true_mos=self.val_true_mos,
            manifest=self.manifest,
        )


def make_labeled_clip(spec: SynthSpec, speaker_idx: int, clip_idx: int, base_seed: int):
    """One mixed clip with its SNR, true MOS and simulated rating panel."""
    seed = mix_seed(base_seed, 0x511, clip_idx)
    rng = make_rng(seed)
    snr = spec.snr_lo + (spec.snr_hi - spec.snr_lo) * rng.random()
    kind = spec.noise_kinds[clip_idx % len(spec.noise_kinds)]
    speech = synth_speech(spec.clip_seconds, mix_seed(base_seed, 0x59E, speaker_idx), mix_seed(seed, 1))
    noise = synth_noise(kind, spec.clip_seconds, mix_seed(seed, 2))
    mixed = mix_noise(speech, noise, snr, mix_seed(seed, 3))
    clip_id = f"clip{clip_idx:05d}"
    mixed = mixed.with_(
        clip_id=clip_id,
        speaker_id=f"spk{speaker_idx:04d}",
        sentence_id=f"sent{clip_idx:05d}",
    )
    mos = true_mos_from_snr(snr)
    ratings = simulate_ratings(mos, spec.n_ratings, spec.rater_sd, mix_seed(seed, 4))
    ratings.clip_id = clip_id
    return mixed, mos, ratings


def build_dataset(spec: SynthSpec = SynthSpec(), base_seed: int = 0,
                  frontend=DEFAULT_FRONTEND) -> SweepDataset:
    """Generate, mix, label and featurize spec.n_clips clips, then split
    them speaker-disjoint into train and validation."""
    clips, true_mos, ratings = [], [], []
    for i in range(spec.n_clips):
        clip, mos, rec = make_labeled_clip(spec, i % spec.n_speakers, i, base_seed)
        clips.append(clip)
        true_mos.append(mos)
        ratings.append(rec)

    manifest = Manifest(
        entries=[
            ManifestEntry(
                clip_id=c.clip_id,
                file_path="",
                speaker_id=c.speaker_id,
                sentence_id=c.sentence_id,
                condition=c.condition,
                snr_db=c.snr_db,
            )
            for c in clips
        ]
    )
    manifest = split_by_speaker(manifest, spec.n_val_speakers, mix_seed(base_seed, 0x5B))
    split_of = {e.clip_id: e.split for e in manifest.entries}

    feats = [clip_to_segments(c, frontend).data for c in clips]
    train_idx = [i for i, c in enumerate(clips) if split_of[c.clip_id] == "train"]
    val_idx = [i for i, c in enumerate(clips) if split_of[c.clip_id] == "val"]
    return SweepDataset(
        train_x=np.stack([feats[i] for i in train_idx]),
        train_ids=[clips[i].clip_id for i in train_idx],
        train_ratings=[ratings[i] for i in train_idx],
        train_true_mos=np.array([true_mos[i] for i in train_idx]),
        val_x=np.stack([feats[i] for i in val_idx]),
        val_ids=[clips[i].clip_id for i in val_idx],
        val_mos=np.array([aggregate_mos(ratings[i]).mos for i in val_idx]),
        val_true_mos=np.array([true_mos[i] for i in val_idx]),
        manifest=manifest,
    )
