"""Counter-based random streams.

Every unit cell of the plane owns an independent Philox stream keyed by
``(seed, cell)``; the Philox counter plays the role of the draw index.  A
cell therefore always produces the same points regardless of which box it
is sampled in, and resampling one cell never perturbs another.
"""

from __future__ import annotations

import numpy as np

_MASK64 = (1 << 64) - 1
_OFFSET = 1 << 31


def cell_code(n1: int, n2: int) -> int:
    """Pack a cell index into one unsigned 64-bit word."""
    if not (-_OFFSET <= n1 < _OFFSET and -_OFFSET <= n2 < _OFFSET):
        raise ValueError(f"cell index ({n1}, {n2}) out of range")
    return ((int(n1) + _OFFSET) << 32) | (int(n2) + _OFFSET)


def cell_stream(seed: int, cell) -> np.random.Generator:
    n1, n2 = (int(c) for c in cell)
    bitgen = np.random.Philox(key=[int(seed) & _MASK64, cell_code(n1, n2)])
    return np.random.Generator(bitgen)


def sample_seed(seed: int, index: int) -> int:
    """Seed of the ``index``-th Monte Carlo sample of a run keyed by ``seed``."""
    ss = np.random.SeedSequence([int(seed) & _MASK64, int(index)])
    return int(ss.generate_state(1, np.uint64)[0])


def wilson_interval(successes: int, trials: int, z: float = 1.959963984540054):
    """Wilson score interval for a binomial proportion."""
    if trials < 1:
        raise ValueError("trials must be >= 1")
    p = successes / trials
    denom = 1.0 + z * z / trials
    centre = (p + z * z / (2 * trials)) / denom
    half = z * np.sqrt(p * (1 - p) / trials + z * z / (4 * trials * trials)) / denom
    lo = 0.0 if successes == 0 else max(0.0, centre - half)
    hi = 1.0 if successes == trials else min(1.0, centre + half)
    return lo, hi
