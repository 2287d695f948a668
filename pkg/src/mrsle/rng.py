"""Counter-based normal variates keyed by ``(seed, stream_id)``.

Draws are addressed by position, so a trajectory's noise does not depend on
how many other trajectories were generated before it or on which worker runs
it. Normals come from Box-Muller applied to raw Philox output, which avoids
depending on numpy's sampler internals.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_MASK64 = (1 << 64) - 1


@dataclass(frozen=True)
class SeededRng:
    seed: int
    stream_id: int = 0

    def _bitgen(self, block: int, sub: int = 0) -> np.random.Philox:
        key = np.array([self.seed & _MASK64, self.stream_id & _MASK64], dtype=np.uint64)
        counter = np.array([0, 0, block & _MASK64, sub & _MASK64], dtype=np.uint64)
        return np.random.Philox(key=key, counter=counter)

    def uniforms(self, size: int, block: int = 0, sub: int = 0) -> np.ndarray:
        """``size`` doubles in ``(0, 1]`` from counter block ``(block, sub)``."""
        raw = self._bitgen(block, sub).random_raw(size)
        return ((raw >> np.uint64(11)).astype(np.float64) + 1.0) * (1.0 / 9007199254740992.0)

    def normals(self, size: int, block: int = 0, sub: int = 0) -> np.ndarray:
        m = (size + 1) // 2
        u = self.uniforms(2 * m, block, sub)
        r = np.sqrt(-2.0 * np.log(u[0::2]))
        phi = 2.0 * np.pi * u[1::2]
        out = np.empty(2 * m)
        out[0::2] = r * np.cos(phi)
        out[1::2] = r * np.sin(phi)
        return out[:size]

    def spawn(self, stream_id: int) -> "SeededRng":
        return SeededRng(self.seed, stream_id)


def as_rng(rng) -> SeededRng:
    if isinstance(rng, SeededRng):
        return rng
    if isinstance(rng, tuple):
        return SeededRng(*rng)
    return SeededRng(int(rng), 0)
