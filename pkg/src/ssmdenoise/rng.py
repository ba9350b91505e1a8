"""Seeded random source shared by every stochastic component.

All randomness in the package flows through :class:`Rng`, a thin wrapper
around numpy's Philox counter-based bit generator.  Philox is fully
specified (Salmon et al., "Parallel random numbers: as easy as 1, 2, 3")
and produces the same stream for the same 64-bit key on every platform,
which is what makes noise synthesis and training bit-reproducible.
"""

from __future__ import annotations

import numpy as np


class Rng:
    """Deterministic random generator keyed by a 64-bit seed."""

    def __init__(self, seed: int):
        if not 0 <= int(seed) < 2**64:
            raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
        self.seed = int(seed)
        self._gen = np.random.Generator(np.random.Philox(key=self.seed))

    def spawn(self, stream: int) -> "Rng":
        """Derive an independent generator for a named sub-stream.

        Mixing is a fixed splitmix64 step so that (seed, stream) pairs map
        to well-separated Philox keys.
        """
        z = (self.seed + 0x9E3779B97F4A7C15 * (int(stream) + 1)) % 2**64
        z = (z ^ (z >> 30)) * 0xBF58476D1CE4E5B9 % 2**64
        z = (z ^ (z >> 27)) * 0x94D049BB133111EB % 2**64
        return Rng(z ^ (z >> 31))

    def uniform(self, low=0.0, high=1.0, size=None, dtype=np.float64):
        out = self._gen.uniform(low, high, size=size)
        return out if size is None else out.astype(dtype, copy=False)

    def normal(self, size=None, dtype=np.float64):
        out = self._gen.standard_normal(size=size)
        return out if size is None else out.astype(dtype, copy=False)

    def integers(self, low, high=None, size=None):
        return self._gen.integers(low, high, size=size)

    def choice(self, n, size, replace=False):
        return self._gen.choice(n, size=size, replace=replace)

    def shuffle(self, x):
        self._gen.shuffle(x)
