"""Reproducible random streams.

Every run derives independent Philox streams from one integer seed through
``numpy.random.SeedSequence`` spawn keys ``(chain, role)``.  Roles separate
the uses of randomness inside one chain (node selection, categorical draws,
acceptance tests, initialization) so that two samplers sharing a role
sequence see identical uniforms.  This is what makes Gibbs and
Metropolis-Hastings with the blanket proposal trajectory-identical.
"""

from __future__ import annotations

import numpy as np

SELECT = 0
DRAW = 1
ACCEPT = 2
INIT = 3
SAMPLE = 4

_BLOCK = 4096


def generator(seed: int, chain: int = 0, role: int = DRAW) -> np.random.Generator:
    ss = np.random.SeedSequence(int(seed) & (2**64 - 1), spawn_key=(int(chain), int(role)))
    return np.random.Generator(np.random.Philox(ss))


class UniformStream:
    """Buffered stream of doubles in ``[0, 1)``."""

    def __init__(self, gen: np.random.Generator, block: int = _BLOCK):
        self._gen = gen
        self._block = block
        self._buf = np.empty(0)
        self._pos = 0

    @classmethod
    def from_seed(cls, seed: int, chain: int = 0, role: int = DRAW) -> "UniformStream":
        return cls(generator(seed, chain, role))

    def next(self) -> float:
        if self._pos >= self._buf.size:
            self._buf = self._gen.random(self._block)
            self._pos = 0
        u = float(self._buf[self._pos])
        self._pos += 1
        return u

    def integer(self, n: int) -> int:
        """Uniform integer in ``range(n)`` consuming one uniform."""
        return min(int(self.next() * n), n - 1)
