"""Counter-based randomness.

All randomness in a run flows from one 64-bit seed through Philox counters
keyed by (replica, species, step, purpose), so any draw can be reproduced in
isolation and results never depend on evaluation order or thread scheduling.
Gaussian increments are produced by inverse-CDF from raw counter words, which
makes the increment of particle ``i`` a pure function of its key.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_KEY_SALT = 0x9E3779B97F4A7C15
_PURPOSE_INIT = 1
_PURPOSE_STEP = 2
_PURPOSE_MISC = 3

_MAX_SPECIES = 1 << 20


class NoiseStream:
    """Deterministic noise source rooted at (seed, replica)."""

    def __init__(self, seed: int, replica: int = 0):
        if not 0 <= seed < 2 ** 64:
            raise ValueError("seed must fit in 64 bits")
        if replica < 0:
            raise ValueError("replica must be nonnegative")
        self.seed = int(seed)
        self.replica = int(replica)

    def for_replica(self, replica: int) -> "NoiseStream":
        return NoiseStream(self.seed, replica)

    def _bitgen(self, purpose: int, species: int, step: int) -> np.random.Philox:
        if not 0 <= species < _MAX_SPECIES:
            raise ValueError("species index out of range")
        ctx = (self.replica * _MAX_SPECIES + species) * 8 + purpose
        return np.random.Philox(counter=[0, int(step), ctx, 0],
                                key=[self.seed, _KEY_SALT])

    def _uniform_words(self, purpose: int, species: int, step: int,
                       n: int) -> np.ndarray:
        raw = self._bitgen(purpose, species, step).random_raw(n)
        # 53-bit mantissa, shifted into the open interval (0, 1)
        return (raw >> np.uint64(11)) * 2.0 ** -53 + 2.0 ** -54

    def increment_normals(self, species: int, step: int, count: int,
                          cols: int) -> np.ndarray:
        """Standard-normal block (count, cols); row i belongs to particle i."""
        u = self._uniform_words(_PURPOSE_STEP, species, step, count * cols)
        return ndtri(u).reshape(count, cols)

    def init_generator(self, species: int) -> np.random.Generator:
        """Generator for drawing the initial positions of one species."""
        return np.random.Generator(self._bitgen(_PURPOSE_INIT, species, 0))

    def misc_generator(self, tag: int = 0) -> np.random.Generator:
        """Generator for auxiliary randomness (projections, resampling)."""
        return np.random.Generator(self._bitgen(_PURPOSE_MISC, 0, tag))
