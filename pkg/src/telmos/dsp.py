"""Front-end DSP: log-mel spectrograms, fixed-width segment tensors, and an
active-speech-level / activity-factor measurement.

The front-end is narrowband: 8 kHz input, 20 ms Hann windows with 10 ms
hop, 256-point FFT, 32 triangular mel filters up to 4 kHz. Spectrogram
frames are cut into 32x33 patches (330 ms) with a hop of 24 frames; each
patch is standardized before it reaches the model.
"""

from __future__ import annotations

from dataclasses import dataclass
from functools import lru_cache
from math import exp, log10

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view
from scipy.signal import lfilter

from .audio import CANONICAL_RATE, AudioClip
from .errors import NoSpeechError, TooShortError, UnsupportedRateError

# Activity measurement constants: envelope smoothing time constant,
# hangover window bridging short dips, dB grid for the threshold scan and
# the margin between active level and the chosen threshold.
_SMOOTHING_S = 0.030
_HANGOVER_S = 0.200
_SCAN_STEP_DB = 0.1
_MARGIN_DB = 15.9
_SCAN_FLOOR_DB = 120.0
_SCAN_STOP_SLACK_DB = 10.0
_ENV_DECIMATION = 16


@dataclass(frozen=True)
class FrontendConfig:
    fft_window_ms: float = 20.0
    hop_ms: float = 10.0
    fft_size: int = 256
    n_mels: int = 32
    f_max_hz: float = 4000.0
    segment_width: int = 33
    segment_hop: int = 24
    log_floor: float = 1e-7

    def __post_init__(self):
        if not self.segment_width > self.segment_hop > 0:
            raise ValueError("need segment_width > segment_hop > 0")
        if self.log_floor <= 0:
            raise ValueError("log_floor must be positive")

    def window_samples(self, fs: int) -> int:
        return round(self.fft_window_ms * fs / 1000.0)

    def hop_samples(self, fs: int) -> int:
        return round(self.hop_ms * fs / 1000.0)


DEFAULT_FRONTEND = FrontendConfig()


@dataclass
class MelSegments:
    """Stack of standardized 1x32x33 log-mel patches for one clip."""

    data: np.ndarray  # (n_seg, 1, n_mels, segment_width) float32
    n_seg: int

    def __post_init__(self):
        if self.data.ndim != 4 or self.data.shape[0] != self.n_seg:
            raise ValueError("segment tensor must be (n_seg, 1, mels, width)")
        if not np.isfinite(self.data).all():
            raise ValueError("segment tensor must be finite")


@dataclass
class ActivityResult:
    active_speech_level_db: float  # dBov
    activity_factor: float  # in [0, 1]


def hz_to_mel(f):
    return 2595.0 * np.log10(1.0 + np.asarray(f, dtype=np.float64) / 700.0)


def mel_to_hz(m):
    return 700.0 * (10.0 ** (np.asarray(m, dtype=np.float64) / 2595.0) - 1.0)


@lru_cache(maxsize=8)
def _mel_filterbank(n_mels, fft_size, fs, f_max):
    """Triangular unit-peak filters on the HTK mel scale, (n_mels, bins)."""
    n_bins = fft_size // 2 + 1
    freqs = np.arange(n_bins) * (fs / fft_size)
    edges = mel_to_hz(np.linspace(0.0, float(hz_to_mel(f_max)), n_mels + 2))
    fb = np.zeros((n_mels, n_bins))
    for j in range(n_mels):
        lo, center, hi = edges[j], edges[j + 1], edges[j + 2]
        rising = (freqs - lo) / (center - lo)
        falling = (hi - freqs) / (hi - center)
        fb[j] = np.clip(np.minimum(rising, falling), 0.0, 1.0)
    return fb


def mel_filter_centers_hz(cfg: FrontendConfig = DEFAULT_FRONTEND) -> np.ndarray:
    edges = mel_to_hz(np.linspace(0.0, float(hz_to_mel(cfg.f_max_hz)), cfg.n_mels + 2))
    return edges[1:-1]


def mel_spectrogram(clip: AudioClip, cfg: FrontendConfig = DEFAULT_FRONTEND) -> np.ndarray:
    """Log10 mel power spectrogram, shape (n_frames, n_mels).

    Frames of window_samples with hop_samples advance, Hann windowed, zero
    padded to fft_size; powers below log_floor are floored before the log.
    """
    fs = clip.sample_rate_hz
    if fs != CANONICAL_RATE:
        raise UnsupportedRateError(f"front-end expects {CANONICAL_RATE} Hz, got {fs}")
    if cfg.f_max_hz > fs / 2:
        raise ValueError("f_max_hz exceeds Nyquist")
    win = cfg.window_samples(fs)
    hop = cfg.hop_samples(fs)
    x = clip.samples
    if len(x) < win:
        raise TooShortError(f"need at least {win} samples, got {len(x)}")
    frames = sliding_window_view(x, win)[::hop]
    window = 0.5 - 0.5 * np.cos(2.0 * np.pi * np.arange(win) / win)
    spec = np.fft.rfft(frames * window, n=cfg.fft_size, axis=1)
    power = spec.real**2 + spec.imag**2
    fb = _mel_filterbank(cfg.n_mels, cfg.fft_size, fs, cfg.f_max_hz)
    mel = power @ fb.T
    return np.log10(np.maximum(mel, cfg.log_floor))


def segment(mel: np.ndarray, cfg: FrontendConfig = DEFAULT_FRONTEND) -> MelSegments:
    """Cut mel frames into standardized patches.

    Patch k covers frame rows [hop*k, hop*k + width); trailing frames that
    do not fill a whole patch are dropped. Each patch is standardized to
    zero mean / unit variance with a variance floor of 1e-6.
    """
    n_frames = mel.shape[0]
    width, hop = cfg.segment_width, cfg.segment_hop
    if n_frames < width:
        raise TooShortError(
            f"need at least {width} mel frames (>= {width * cfg.hop_ms:.0f} ms), got {n_frames}"
        )
    n_seg = (n_frames - width) // hop + 1
    starts = np.arange(n_seg) * hop
    # windows[s, band, j] == mel[s + j, band]
    windows = sliding_window_view(mel, width, axis=0)
    data = windows[starts][:, None, :, :].astype(np.float64)
    mean = data.mean(axis=(1, 2, 3), keepdims=True)
    var = data.var(axis=(1, 2, 3), keepdims=True)
    data = (data - mean) / np.sqrt(np.maximum(var, 1e-6))
    return MelSegments(data=data.astype(np.float32), n_seg=n_seg)


def clip_to_segments(clip: AudioClip, cfg: FrontendConfig = DEFAULT_FRONTEND) -> MelSegments:
    return segment(mel_spectrogram(clip, cfg), cfg)


def dump_mel_csv(mel: np.ndarray, path):
    """Debug dump of a mel tensor as CSV, one row per frame."""
    np.savetxt(path, mel, delimiter=",", fmt="%.8g")


def _active_blocks(env_blocks: np.ndarray, threshold: float, hangover_blocks: int) -> int:
    """Blocks with envelope above threshold, plus short bridged dips.

    A below-threshold run between two active blocks counts as active when
    it is no longer than the hangover.
    """
    idx = np.flatnonzero(env_blocks > threshold)
    if idx.size == 0:
        return 0
    gaps = np.diff(idx) - 1
    bridged = int(gaps[(gaps > 0) & (gaps <= hangover_blocks)].sum())
    return int(idx.size) + bridged


def speech_activity(clip: AudioClip) -> ActivityResult:
    """Active speech level (dBov) and activity factor of a clip.

    The |x| envelope is smoothed with a 30 ms time constant; candidate
    thresholds are scanned downward from the envelope peak in 0.1 dB steps.
    At each threshold the active sample count includes dips shorter than a
    200 ms hangover, and the active level is total energy over active
    count. The chosen threshold is the one (past the low-threshold turn of
    the curve) where level minus threshold is closest to the 15.9 dB
    margin.
    """
    x = clip.samples
    if x.size == 0 or not np.any(x):
        raise NoSpeechError("clip holds no signal, active level undefined")
    fs = clip.sample_rate_hz
    q = exp(-1.0 / (fs * _SMOOTHING_S))
    env = lfilter([1.0 - q], [1.0, -q], np.abs(x))

    # The envelope moves on ~30 ms scales, so threshold counting works on
    # max-pooled blocks; counts are converted back to samples.
    dec = _ENV_DECIMATION
    n = x.size
    n_pad = (-n) % dec
    if n_pad:
        env = np.pad(env, (0, n_pad))
    env_blocks = env.reshape(-1, dec).max(axis=1)
    hangover_blocks = int(round(_HANGOVER_S * fs)) // dec

    total_energy = float(np.dot(x, x))
    peak_db = 20.0 * log10(float(env.max()))
    n_steps = int(_SCAN_FLOOR_DB / _SCAN_STEP_DB) + 1

    candidates = []  # (threshold_db, level_db, margin_delta)
    min_delta = np.inf
    for k in range(n_steps):
        thr_db = peak_db - _SCAN_STEP_DB * k
        blocks = _active_blocks(env_blocks, 10.0 ** (thr_db / 20.0), hangover_blocks)
        if blocks == 0:
            continue
        active = min(blocks * dec, n)
        level_db = 10.0 * log10(total_energy / active)
        delta = level_db - thr_db
        candidates.append((thr_db, level_db, active, delta))
        min_delta = min(min_delta, delta)
        # Past the curve's minimum the margin surplus only grows; once it
        # clears the target comfortably the fixed point cannot move.
        if delta > _MARGIN_DB + _SCAN_STOP_SLACK_DB and delta > min_delta:
            break

    # Restrict to the rising (low-threshold) branch of the margin curve:
    # at very high thresholds tiny active counts also inflate the level.
    turn = int(np.argmin([c[3] for c in candidates]))
    best = min(candidates[turn:], key=lambda c: abs(c[3] - _MARGIN_DB))
    _, level_db, active, _ = best
    return ActivityResult(
        active_speech_level_db=level_db,
        activity_factor=min(active / n, 1.0),
    )
