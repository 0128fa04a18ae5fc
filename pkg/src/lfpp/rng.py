"""Counter-based random streams.

Every random draw in the package goes through :func:`stream`, which keys a
Philox generator by ``(seed, *keys)``.  A field layer or a Monte Carlo block
therefore has its own stream, and the numbers it sees do not depend on the
order in which blocks are evaluated or on how many workers evaluate them.
"""

from __future__ import annotations

import numpy as np

# Rows of the leading grid axis per noise block.
BLOCK_ROWS = 16


def _key(value) -> int:
    value = int(value)
    if value < 0:
        raise ValueError(f"stream keys must be nonnegative, got {value}")
    return value


def stream(seed: int, *keys: int) -> np.random.Generator:
    """Independent Philox generator for ``(seed, *keys)``."""
    ss = np.random.SeedSequence(_key(seed), spawn_key=tuple(_key(k) for k in keys))
    return np.random.Generator(np.random.Philox(ss))


def gaussian_grid(seed: int, shape: tuple[int, ...], *keys: int) -> np.ndarray:
    """Standard normal array filled block by block along axis 0.

    Block ``b`` covers rows ``[b*BLOCK_ROWS, (b+1)*BLOCK_ROWS)`` and is drawn from
    ``stream(seed, *keys, b)``.
    """
    out = np.empty(shape, dtype=np.float64)
    n0 = shape[0]
    for b, start in enumerate(range(0, n0, BLOCK_ROWS)):
        stop = min(start + BLOCK_ROWS, n0)
        out[start:stop] = stream(seed, *keys, b).standard_normal((stop - start,) + tuple(shape[1:]))
    return out
