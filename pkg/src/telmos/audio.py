"""WAV decode/encode, resampling to the canonical 8 kHz mono form, cropping.

Everything downstream assumes clips produced here: mono float64 samples in
[-1, 1] at 8000 Hz. Only RIFF/WAVE PCM16 (1 or 2 channels) is read or
written.
"""

from __future__ import annotations

import struct
from dataclasses import dataclass, field, replace
from math import gcd

import numpy as np
from scipy.signal import resample_poly

from .errors import (
    AudioFormatError,
    BoundsError,
    EmptyAudioError,
    UnsupportedFormatError,
    UnsupportedRateError,
)

CANONICAL_RATE = 8000
SUPPORTED_RATES = (8000, 16000, 32000, 44100, 48000)
CONDITIONS = ("clean", "noisy", "real_call")

# Anti-alias filter for rational resampling: Kaiser-windowed sinc,
# 64 taps per polyphase branch, passband edge at 3.9 kHz.
_RESAMPLE_TAPS_PER_PHASE = 64
_RESAMPLE_KAISER_BETA = 8.6
_RESAMPLE_CUTOFF_HZ = 3900.0


@dataclass
class AudioClip:
    """Mono PCM clip plus the identity/condition metadata carried through
    the data pipeline. snr_db is only meaningful for condition='noisy'."""

    samples: np.ndarray
    sample_rate_hz: int = CANONICAL_RATE
    clip_id: str = ""
    speaker_id: str = ""
    sentence_id: str = ""
    condition: str = "clean"
    snr_db: float | None = None
    meta: dict = field(default_factory=dict)

    def __post_init__(self):
        x = np.asarray(self.samples, dtype=np.float64)
        if x.ndim != 1:
            raise ValueError("samples must be one-dimensional")
        if x.size and not np.isfinite(x).all():
            raise ValueError("samples must be finite")
        self.samples = x
        if self.condition not in CONDITIONS:
            raise ValueError(f"unknown condition {self.condition!r}")

    @property
    def duration_s(self) -> float:
        return len(self.samples) / self.sample_rate_hz

    def with_(self, **changes) -> "AudioClip":
        return replace(self, **changes)


def _u16(b, off):
    return struct.unpack_from("<H", b, off)[0]


def _u32(b, off):
    return struct.unpack_from("<I", b, off)[0]


def decode_wav(data: bytes) -> AudioClip:
    """Decode a RIFF/WAVE PCM16 byte stream into an AudioClip.

    Stereo is averaged to mono; 16-bit integers scale by 1/32768. Metadata
    fields are left for the caller to fill in.
    """
    if len(data) < 12 or data[:4] != b"RIFF" or data[8:12] != b"WAVE":
        raise AudioFormatError("not a RIFF/WAVE stream")
    fmt = None
    pcm = None
    pos = 12
    while pos + 8 <= len(data):
        chunk_id = data[pos : pos + 4]
        size = _u32(data, pos + 4)
        body = data[pos + 8 : pos + 8 + size]
        if len(body) < size:
            raise AudioFormatError(
                f"truncated {chunk_id.decode('ascii', 'replace')!r} chunk: "
                f"declared {size} bytes, {len(body)} available"
            )
        if chunk_id == b"fmt ":
            if size < 16:
                raise AudioFormatError("fmt chunk too small")
            fmt = (_u16(body, 0), _u16(body, 2), _u32(body, 4), _u16(body, 14))
        elif chunk_id == b"data":
            pcm = body
        pos += 8 + size + (size & 1)  # chunks are word aligned
    if fmt is None:
        raise AudioFormatError("missing fmt chunk")
    if pcm is None:
        raise AudioFormatError("missing data chunk")
    audio_format, channels, rate, bits = fmt
    if audio_format != 1 or bits != 16:
        raise UnsupportedFormatError(
            f"only PCM16 is supported (format tag {audio_format}, {bits} bits)"
        )
    if channels not in (1, 2):
        raise UnsupportedFormatError(f"unsupported channel count {channels}")
    if len(pcm) == 0:
        raise EmptyAudioError("data chunk holds no samples")
    if len(pcm) % (2 * channels):
        raise AudioFormatError("data chunk is not frame aligned")
    ints = np.frombuffer(pcm, dtype="<i2")
    x = ints.astype(np.float64) / 32768.0
    if channels == 2:
        x = x.reshape(-1, 2).mean(axis=1)
    return AudioClip(samples=x, sample_rate_hz=rate)


def encode_wav(clip: AudioClip) -> bytes:
    """Serialize a clip as mono RIFF/WAVE PCM16, little-endian."""
    ints = np.clip(np.rint(clip.samples * 32768.0), -32768, 32767).astype("<i2")
    pcm = ints.tobytes()
    rate = int(clip.sample_rate_hz)
    header = b"".join(
        [
            b"RIFF",
            struct.pack("<I", 36 + len(pcm)),
            b"WAVE",
            b"fmt ",
            struct.pack("<IHHIIHH", 16, 1, 1, rate, rate * 2, 2, 16),
            b"data",
            struct.pack("<I", len(pcm)),
        ]
    )
    return header + pcm


def read_wav(path) -> AudioClip:
    with open(path, "rb") as f:
        return decode_wav(f.read())


def write_wav(path, clip: AudioClip):
    with open(path, "wb") as f:
        f.write(encode_wav(clip))


def _resample_filter(up: int, in_rate: int) -> np.ndarray:
    """Kaiser-windowed sinc lowpass for the polyphase resampler (unit DC
    gain before the interpolation gain that resample_poly applies)."""
    taps = _RESAMPLE_TAPS_PER_PHASE * up
    hi_rate = in_rate * up
    n = np.arange(taps) - (taps - 1) / 2.0
    fc = _RESAMPLE_CUTOFF_HZ / hi_rate  # cycles per sample at the high rate
    h = 2.0 * fc * np.sinc(2.0 * fc * n)
    h *= np.kaiser(taps, _RESAMPLE_KAISER_BETA)
    h /= h.sum()
    return h


def resample_to_8k(clip: AudioClip) -> AudioClip:
    """Rational resampling to 8000 Hz, identity pass-through when already
    there. Output length is round(len * 8000 / input_rate)."""
    rate = clip.sample_rate_hz
    if rate not in SUPPORTED_RATES:
        raise UnsupportedRateError(f"cannot resample from {rate} Hz")
    if rate == CANONICAL_RATE:
        return clip
    g = gcd(CANONICAL_RATE, rate)
    up, down = CANONICAL_RATE // g, rate // g
    n_in = len(clip.samples)
    n_out = (2 * n_in * up + down) // (2 * down)  # round(n_in * up / down)
    h = _resample_filter(up, rate)
    y = resample_poly(clip.samples, up, down, window=h)
    if len(y) < n_out:
        y = np.pad(y, (0, n_out - len(y)))
    y = np.clip(y[:n_out], -1.0, 1.0)
    return clip.with_(samples=y, sample_rate_hz=CANONICAL_RATE)


def crop_clip(clip: AudioClip, start_s: float, dur_s: float) -> AudioClip:
    """Sample-accurate slice [start_s, start_s + dur_s); metadata preserved.

    Indices are rounded at the window *ends*, so two adjacent crops
    reassemble the source exactly.
    """
    if start_s < 0 or dur_s < 0:
        raise BoundsError("start and duration must be non-negative")
    fs = clip.sample_rate_hz
    i0 = round(start_s * fs)
    i1 = round((start_s + dur_s) * fs)
    if i1 > len(clip.samples):
        raise BoundsError(
            f"window [{start_s}, {start_s + dur_s}) s exceeds clip of "
            f"{clip.duration_s:.3f} s"
        )
    return clip.with_(samples=clip.samples[i0:i1].copy())
