import struct

import numpy as np
import pytest
from hypothesis import HealthCheck, settings

settings.register_profile(
    "suite",
    max_examples=25,
    deadline=None,
    suppress_health_check=[HealthCheck.too_slow],
)
settings.load_profile("suite")

FS = 8000


def make_wav_bytes(ints, rate=FS, channels=1, audio_format=1, bits=16, truncate=0):
    """Hand-rolled RIFF/WAVE PCM16 bytes, independent of the package encoder."""
    ints = np.asarray(ints, dtype="<i2")
    pcm = ints.tobytes()
    if truncate:
        pcm_declared = len(pcm)
        pcm = pcm[:-truncate]
    else:
        pcm_declared = len(pcm)
    block = channels * bits // 8
    header = b"".join(
        [
            b"RIFF",
            struct.pack("<I", 36 + pcm_declared),
            b"WAVE",
            b"fmt ",
            struct.pack("<IHHIIHH", 16, audio_format, channels, rate, rate * block, block, bits),
            b"data",
            struct.pack("<I", pcm_declared),
        ]
    )
    return header + pcm


def sine(freq, seconds, fs=FS, amplitude=0.9):
    t = np.arange(round(seconds * fs)) / fs
    return amplitude * np.sin(2 * np.pi * freq * t)


@pytest.fixture
def rng():
    return np.random.default_rng(0xBEEF)
