"""Portable counter-based random number generator.

Every draw is a pure function of (seed, counter): the i-th 64-bit word is
splitmix64(seed_mix + (counter + i) * GOLDEN). This gives bitwise
reproducibility across platforms and lets parallel consumers derive
independent streams by offsetting the seed. Gaussians use Box-Muller.
"""

from __future__ import annotations

import numpy as np

_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)
_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)


def _splitmix64(z: np.ndarray) -> np.ndarray:
    z = (z ^ (z >> np.uint64(30))) * _M1
    z = (z ^ (z >> np.uint64(27))) * _M2
    return z ^ (z >> np.uint64(31))


def derive_seed(seed: int, index: int) -> int:
    """Stable per-item sub-seed (e.g. one stream per image)."""
    z = (seed + index * 0x9E3779B97F4A7C15) & 0xFFFFFFFFFFFFFFFF
    return int(_splitmix64(np.asarray([z], dtype=np.uint64))[0])


class CounterRng:
    """Deterministic stream of uniforms/normals keyed by (seed, counter)."""

    def __init__(self, seed: int, counter: int = 0):
        self._seed = np.uint64(seed & 0xFFFFFFFFFFFFFFFF)
        self.counter = int(counter)

    def _words(self, n: int) -> np.ndarray:
        idx = np.arange(self.counter, self.counter + n, dtype=np.uint64)
        self.counter += n
        z = (self._seed + idx * _GOLDEN) & _MASK
        return _splitmix64(z)

    def uniform(self, n: int) -> np.ndarray:
        """n uniforms in [0, 1) as float64 (53 random bits each)."""
        return (self._words(n) >> np.uint64(11)).astype(np.float64) * (2.0 ** -53)

    def uniform_open(self, n: int) -> np.ndarray:
        """n uniforms in (0, 1]; safe as a log() argument."""
        return ((self._words(n) >> np.uint64(11)).astype(np.float64) + 1.0) * (2.0 ** -53)

    def normal(self, n: int) -> np.ndarray:
        """n standard normals via Box-Muller."""
        m = (n + 1) // 2
        u1 = self.uniform_open(m)
        u2 = self.uniform(m)
        r = np.sqrt(-2.0 * np.log(u1))
        ang = 2.0 * np.pi * u2
        z = np.concatenate([r * np.cos(ang), r * np.sin(ang)])
        return z[:n]

    def integers(self, n: int, bound: int) -> np.ndarray:
        """n integers uniform in [0, bound) (floor of scaled uniforms)."""
        return np.minimum((self.uniform(n) * bound).astype(np.int64), bound - 1)

    def shuffled(self, n: int) -> np.ndarray:
        """Deterministic permutation of range(n) (sort of random keys)."""
        keys = self._words(n)
        return np.argsort(keys, kind="stable")


def trunc_normal(rng: CounterRng, n: int, std: float) -> np.ndarray:
    """Normal(0, std) truncated to +-2 std via inverse-CDF sampling."""
    from scipy.special import erfinv

    lo, hi = -0.95449973610364158, 0.95449973610364158  # erf(+-2/sqrt(2))
    u = rng.uniform(n)
    e = lo + u * (hi - lo)
    return np.sqrt(2.0) * erfinv(e) * std
