"""Counter-based random streams.

Every draw is addressed by ``(seed, trial, step, purpose)`` plus a
particle index. The stream for a key is a Philox sequence, so word
``i`` can be produced without generating words ``0..i-1``; splitting a
step across workers never changes the values.
"""
from __future__ import annotations

import numpy as np

# purpose tags, the last component of a stream path
INIT = 0
PROPAGATE = 1
SCENARIO = 2
ASSOCIATION = 3
INNER = 4

_TWO53 = 1.0 / 9007199254740992.0


def stream_key(seed: int, *path: int) -> np.ndarray:
    """128-bit Philox key for a stream path."""
    if seed < 0 or any(p < 0 for p in path):
        raise ValueError("seed and stream path components must be non-negative")
    ss = np.random.SeedSequence(int(seed), spawn_key=tuple(int(p) for p in path))
    return ss.generate_state(2, np.uint64)


def raw_words(key: np.ndarray, start: int, stop: int) -> np.ndarray:
    """Words ``start..stop-1`` of the stream (one 64-bit word per particle)."""
    if stop < start:
        raise ValueError("stop < start")
    bg = np.random.Philox(key=key)
    if start:
        bg.advance(start // 4)
        if start % 4:
            bg.random_raw(start % 4)
    return bg.random_raw(stop - start)


def uniforms(key: np.ndarray, start: int, stop: int) -> np.ndarray:
    """Uniforms on [0, 1) with 53 random bits, aligned with :func:`raw_words`."""
    return (raw_words(key, start, stop) >> np.uint64(11)).astype(np.float64) * _TWO53


def generator(key: np.ndarray) -> np.random.Generator:
    """A numpy Generator on the stream, for Gaussian and Poisson draws."""
    return np.random.Generator(np.random.Philox(key=key))
