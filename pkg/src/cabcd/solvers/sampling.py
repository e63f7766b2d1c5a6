"""Shared-seed block sampling.

Every rank derives the block for iteration h from ``(seed, h)`` alone, so
selectors never need to be communicated and the sequence does not depend
on the rank count or on how iterations are grouped into outer loops.
"""

from __future__ import annotations

import numpy as np

from ..sparse import BlockSelector

_MASK64 = (1 << 64) - 1


def iteration_rng(seed: int, iteration: int) -> np.random.Generator:
    # Philox is counter based: the key alone fixes the stream
    return np.random.Generator(np.random.Philox(key=[seed & _MASK64, iteration & _MASK64]))


def sample_block(seed: int, iteration: int, universe: int, b: int) -> BlockSelector:
    """b distinct indices from range(universe), uniformly without replacement.

    Partial Fisher-Yates over a virtual identity permutation; only swapped
    slots are materialised, so cost is O(b) regardless of ``universe``.
    """
    if b > universe:
        raise ValueError(f"block size {b} exceeds universe {universe}")
    if b < 1:
        raise ValueError("block size must be >= 1")
    if b == universe:
        return BlockSelector(np.arange(universe, dtype=np.int64), universe)
    offsets = iteration_rng(seed, iteration).integers(0, universe - np.arange(b))
    swapped: dict[int, int] = {}
    picked = np.empty(b, dtype=np.int64)
    for i, off in enumerate(offsets.tolist()):
        j = i + off
        picked[i] = swapped.get(j, j)
        swapped[j] = swapped.get(i, i)
    picked.sort()
    return BlockSelector(picked, universe)
