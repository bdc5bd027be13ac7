"""Deterministic random number generation.

The generator is a SplitMix64-style 64-bit mixer run in counter mode: raw
word i of stream ``seed`` is ``mix64(seed + (i + 1) * GOLDEN)``.  State is
just (seed, words consumed), so identical call sequences reproduce identical
output on any platform.  Gaussian variates come from the Box-Muller
transform, consuming two raw words per pair of normals.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_MIX1 = np.uint64(0xBF58476D1CE4E5B9)
_MIX2 = np.uint64(0x94D049BB133111EB)
_MASK64 = (1 << 64) - 1
_INV53 = 2.0 ** -53
_TWO_PI = 2.0 * np.pi


def _mix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _MIX1
    z = (z ^ (z >> np.uint64(27))) * _MIX2
    return z ^ (z >> np.uint64(31))


class CounterRng:
    """Seeded counter-based generator with uniform and normal draws.

    The counter advances by the number of 64-bit words consumed, never by
    the number of values returned; ``normals`` rounds its consumption up to
    whole Box-Muller pairs, so the split of one large request into several
    smaller ones changes the stream.  Reproducibility is guaranteed for an
    identical sequence of calls on an identical seed.
    """

    def __init__(self, seed: int = 42):
        self._seed = np.uint64(int(seed) & _MASK64)
        self._counter = 0

    @property
    def seed(self) -> int:
        return int(self._seed)

    def _raw(self, count: int) -> np.ndarray:
        start = self._counter
        self._counter += count
        idx = np.arange(start + 1, start + count + 1, dtype=np.uint64)
        with np.errstate(over="ignore"):
            return _mix64(self._seed + idx * _GOLDEN)

    def uniforms(self, shape) -> np.ndarray:
        """Uniform float64 draws in [0, 1), one word each (top 53 bits)."""
        shape = _as_shape(shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        u = (self._raw(n) >> np.uint64(11)).astype(np.float64) * _INV53
        return u.reshape(shape)

    def normals(self, shape) -> np.ndarray:
        """Standard normal float64 draws via Box-Muller."""
        shape = _as_shape(shape)
        n = int(np.prod(shape, dtype=np.int64)) if shape else 1
        pairs = (n + 1) // 2
        raw = self._raw(2 * pairs)
        # u1 in (0, 1] so the log is finite; u2 in [0, 1).
        u1 = ((raw[:pairs] >> np.uint64(11)) + np.uint64(1)).astype(np.float64) * _INV53
        u2 = (raw[pairs:] >> np.uint64(11)).astype(np.float64) * _INV53
        radius = np.sqrt(-2.0 * np.log(u1))
        angle = _TWO_PI * u2
        z = np.concatenate([radius * np.cos(angle), radius * np.sin(angle)])
        return z[:n].reshape(shape)


def _as_shape(shape) -> tuple:
    if isinstance(shape, (int, np.integer)):
        shape = (int(shape),)
    shape = tuple(int(s) for s in shape)
    if any(s < 0 for s in shape):
        raise ValueError(f"negative dimension in shape {shape}")
    return shape
