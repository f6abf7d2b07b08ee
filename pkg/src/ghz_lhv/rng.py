"""Counter-based random streams.

Trial ``i`` of a stream keyed by ``seed`` always reads Philox block ``i``,
so any chunking of the index range reproduces the same numbers.
"""

from __future__ import annotations

import numpy as np

MASK64 = (1 << 64) - 1
_INV_2_53 = 1.0 / (1 << 53)

#: high key word separating independent streams sharing one 64-bit seed
HIDDEN_STREAM = 0
SETTING_STREAM = 1


def _check_seed(seed: int) -> int:
    seed = int(seed)
    if not 0 <= seed <= MASK64:
        raise ValueError(f"seed must be a 64-bit unsigned integer, got {seed}")
    return seed


def block_words(seed: int, start: int, count: int, stream: int = HIDDEN_STREAM) -> np.ndarray:
    """Raw Philox output for trial indices ``start .. start+count-1``.

    Shape ``(count, 4)`` uint64; row ``k`` depends only on
    ``(seed, stream, start + k)``.
    """
    seed = _check_seed(seed)
    if start < 0 or count < 0:
        raise ValueError("start and count must be non-negative")
    bg = np.random.Philox(key=seed | (stream << 64))
    if start:
        bg.advance(start)
    return bg.random_raw(4 * count).reshape(count, 4)


def to_unit(words: np.ndarray) -> np.ndarray:
    """Top 53 bits of each word as a double in [0, 1)."""
    return (words >> np.uint64(11)).astype(np.float64) * _INV_2_53


def uniform_pairs(seed: int, start: int, count: int, stream: int = HIDDEN_STREAM):
    """Two independent uniforms per trial index: ``(u, v)``."""
    w = block_words(seed, start, count, stream)
    return to_unit(w[:, 0]), to_unit(w[:, 1])
