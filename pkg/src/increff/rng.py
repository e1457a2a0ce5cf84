"""Counter-based random streams.

Every draw is a pure function of ``(seed, variable, row, block)``: the Philox
key is ``(seed, variable)`` and the counter is ``(row, block, 0, 0)``. Any
row range can therefore be generated independently, in any order or in
parallel, and reproduce the same values.
"""

from __future__ import annotations

import numpy as np
from scipy.special import ndtri

_U64 = np.uint64
_TWO53 = 2.0 ** -53


def derive_seed(seed: int, *path: int) -> int:
    """Deterministic 64-bit child seed for e.g. a replication index."""
    ss = np.random.SeedSequence([int(seed) & 0xFFFFFFFFFFFFFFFF, *map(int, path)])
    return int(ss.generate_state(1, dtype=np.uint64)[0])


class CounterRng:
    """Stateless draws addressed by variable id and row index."""

    def __init__(self, seed: int):
        self.seed = int(seed) & 0xFFFFFFFFFFFFFFFF

    def raw(self, var: int, start: int, stop: int, block: int = 0) -> np.ndarray:
        """Four 64-bit words per row, shape ``(stop - start, 4)``."""
        n = stop - start
        if n <= 0:
            return np.empty((0, 4), dtype=_U64)
        bg = np.random.Philox(key=np.array([self.seed, var], dtype=_U64),
                              counter=np.array([start, block, 0, 0], dtype=_U64))
        return bg.random_raw(4 * n).reshape(n, 4)

    def uniform01(self, var: int, start: int, stop: int, k: int = 1) -> np.ndarray:
        """``k`` open-interval uniforms per row, shape ``(rows, k)``."""
        blocks = -(-k // 4)
        words = np.concatenate([self.raw(var, start, stop, b) for b in range(blocks)], axis=1)
        return ((words[:, :k] >> _U64(11)).astype(float) + 0.5) * _TWO53

    def uniform(self, var, start, stop, low=0.0, high=1.0) -> np.ndarray:
        return low + (high - low) * self.uniform01(var, start, stop)[:, 0]

    def normal(self, var, start, stop, k: int = 1) -> np.ndarray:
        z = ndtri(self.uniform01(var, start, stop, k))
        return z[:, 0] if k == 1 else z

    def student_t(self, var, start, stop, df: int) -> np.ndarray:
        """Ratio construction Z / sqrt(chi2_df / df) with chi2 a sum of ``df`` squared normals."""
        if df < 1 or int(df) != df:
            raise ValueError("df must be a positive integer")
        z = self.normal(var, start, stop, int(df) + 1).reshape(stop - start, -1)
        chi2 = np.sum(z[:, 1:] ** 2, axis=1)
        return z[:, 0] / np.sqrt(chi2 / df)

    def exponential(self, var, start, stop, rate: float = 1.0) -> np.ndarray:
        return -np.log(self.uniform01(var, start, stop)[:, 0]) / rate
