"""Counter-based Gaussian streams.

Every draw is a pure function of ``(seed, stream index, counter)``, so a path's
noise does not depend on how many other paths are simulated alongside it, on
chunking, or on worker count.  The block cipher is Philox4x32 with 10 rounds.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

_M0 = np.uint64(0xD2511F53)
_M1 = np.uint64(0xCD9E8D57)
_W0 = np.uint32(0x9E3779B9)
_W1 = np.uint32(0xBB67AE85)
_LO = np.uint64(0xFFFFFFFF)
_SHIFT = np.uint64(32)

# purpose tag placed in the third counter word
INCREMENTS = 0


@dataclass(frozen=True)
class Stream:
    """Identity of one random stream: the pair (seed, index)."""

    seed: int
    index: int = 0

    def __post_init__(self):
        if not 0 <= self.seed < 2**32 or not 0 <= self.index < 2**32:
            raise ValueError("seed and index must fit in 32 unsigned bits")


def philox4x32(counter, key, rounds: int = 10):
    """Vectorised Philox4x32 block function.

    Parameters
    ----------
    counter : sequence of four uint32 arrays (broadcastable)
    key : sequence of two uint32 arrays (broadcastable)

    Returns
    -------
    tuple of four uint32 arrays
    """
    c0, c1, c2, c3 = (np.asarray(c, dtype=np.uint32) for c in counter)
    k0, k1 = (np.asarray(k, dtype=np.uint32) for k in key)
    c0, c1, c2, c3, k0, k1 = np.broadcast_arrays(c0, c1, c2, c3, k0, k1)
    k0 = k0.copy()
    k1 = k1.copy()
    with np.errstate(over="ignore"):
        for r in range(rounds):
            if r:
                k0 += _W0
                k1 += _W1
            p0 = _M0 * c0.astype(np.uint64)
            p1 = _M1 * c2.astype(np.uint64)
            hi0 = (p0 >> _SHIFT).astype(np.uint32)
            lo0 = (p0 & _LO).astype(np.uint32)
            hi1 = (p1 >> _SHIFT).astype(np.uint32)
            lo1 = (p1 & _LO).astype(np.uint32)
            c0, c1, c2, c3 = hi1 ^ c1 ^ k0, lo1, hi0 ^ c3 ^ k1, lo0
    return c0, c1, c2, c3


def _uniform(words):
    # strictly inside (0, 1)
    return (words.astype(np.float64) + 0.5) * 2.0**-32


def normals(seed: int, indices, step, dim: int, purpose: int = INCREMENTS):
    """Standard normal draws for a set of streams at one counter value.

    Parameters
    ----------
    seed : int
        Experiment seed (32 bits).
    indices : array_like of int
        Stream indices, one row of output per index.
    step : int or array_like of int
        Counter value (the time-step number), scalar or one per index.
    dim : int
        Number of normals per stream.

    Returns
    -------
    ndarray of shape (len(indices), dim)
    """
    idx = np.asarray(indices, dtype=np.uint32).reshape(-1)
    step = np.broadcast_to(np.asarray(step, dtype=np.uint32), idx.shape)
    seed_word = np.uint32(seed)
    out = np.empty((idx.size, dim))
    for block in range((dim + 1) // 2):
        w0, w1, _, _ = philox4x32(
            (step, np.uint32(block), np.uint32(purpose), np.uint32(0)),
            (idx, seed_word),
        )
        # Box-Muller on one pair of words
        radius = np.sqrt(-2.0 * np.log(_uniform(w0)))
        angle = 2.0 * np.pi * _uniform(w1)
        out[:, 2 * block] = radius * np.cos(angle)
        if 2 * block + 1 < dim:
            out[:, 2 * block + 1] = radius * np.sin(angle)
    return out

