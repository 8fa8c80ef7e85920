"""Seed handling: one RNG constructor and a splitmix-style seed mixer.

Every stochastic operation takes an explicit integer seed and builds its
generator through make_rng, so identical seeds give identical streams.
Derived seeds (per sweep run, per repeat, per step) come from mix_seed,
which folds indices into the base seed through the splitmix64 finalizer;
distinct index tuples land on distinct streams.
"""

import numpy as np

_MASK64 = (1 << 64) - 1
_GOLDEN = 0x9E3779B97F4A7C15


def make_rng(seed):
    """PCG64 generator for a non-negative integer seed."""
    return np.random.Generator(np.random.PCG64(int(seed)))


def _splitmix_finalize(z):
    z &= _MASK64
    z = ((z ^ (z >> 30)) * 0xBF58476D1CE4E5B9) & _MASK64
    z = ((z ^ (z >> 27)) * 0x94D049BB133111EB) & _MASK64
    return (z ^ (z >> 31)) & _MASK64


def mix_seed(base_seed, *indices):
    """Mix integer indices into a base seed, splitmix64 style."""
    x = int(base_seed) & _MASK64
    for idx in indices:
        x = _splitmix_finalize(x + _GOLDEN + (int(idx) & _MASK64))
    return x
