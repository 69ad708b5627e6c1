"""Seeded random streams.

Two flavours are used:

* ``generator(seed, *key)`` gives an ordinary numpy ``Generator`` for a named
  sub-stream (per-bin sampling, drift walks). Built on ``SeedSequence`` so
  streams for different keys are independent.
* ``CounterStream`` gives random access by pulse index: the value for pulse
  ``i`` depends only on ``(seed, stream, i, lane)``, so pulses can be
  evaluated in any order or in parallel with identical results.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# stream ids
DRIFT = 1
BIN = 2
PHASE = 3
HAAR = 4
SMF = 5

_MASK = np.uint64(0xFFFFFFFFFFFFFFFF)
_GOLDEN = np.uint64(0x9E3779B97F4A7C15)
_M1 = np.uint64(0xBF58476D1CE4E5B9)
_M2 = np.uint64(0x94D049BB133111EB)


def generator(seed: int, *key: int) -> np.random.Generator:
    ss = np.random.SeedSequence(entropy=int(seed), spawn_key=tuple(int(k) for k in key))
    return np.random.Generator(np.random.Philox(ss))


def _mix64(x: np.ndarray) -> np.ndarray:
    # splitmix64 finalizer
    x = x ^ (x >> np.uint64(30))
    x = x * _M1
    x = x ^ (x >> np.uint64(27))
    x = x * _M2
    return x ^ (x >> np.uint64(31))


@dataclass(frozen=True)
class CounterStream:
    seed: int
    stream: int = PHASE

    def _key(self) -> np.uint64:
        k = np.array([self.seed & 0xFFFFFFFFFFFFFFFF], dtype=np.uint64)
        with np.errstate(over="ignore"):
            k = _mix64(k ^ np.uint64(self.stream) * _GOLDEN)
        return k[0]

    def uint64(self, index, lane: int = 0) -> np.ndarray:
        idx = np.asarray(index, dtype=np.uint64)
        with np.errstate(over="ignore"):
            x = self._key() + idx * _GOLDEN
            x = _mix64(x ^ (np.uint64(lane + 1) * _M2))
            return _mix64(x + _GOLDEN)

    def uniform(self, index, lane: int = 0) -> np.ndarray:
        """Uniform doubles in (0, 1)."""
        u = (self.uint64(index, lane) >> np.uint64(11)).astype(np.float64)
        return (u + 0.5) * 2.0**-53

    def normal(self, index, lane: int = 0) -> np.ndarray:
        """Standard normal draws via Box-Muller on lanes ``2*lane`` and ``2*lane+1``."""
        u1 = self.uniform(index, 2 * lane)
        u2 = self.uniform(index, 2 * lane + 1)
        return np.sqrt(-2.0 * np.log(u1)) * np.cos(2.0 * np.pi * u2)
