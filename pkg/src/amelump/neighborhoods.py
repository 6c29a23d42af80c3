"""Enumeration and indexing of neighborhood count vectors.

A neighborhood vector m assigns to every node state the number of neighbors
currently in that state; its degree is the sum of its entries.  The set of
all such vectors with degree <= kmax grows combinatorially, so the index
below stores them densely in a canonical order (degree-major, then
lexicographic on the counts) and supports vectorized lookup.
"""

import math

import numpy as np

from .errors import CapExceededError

# Above this many vectors the set is not materialized; only the approximate
# equation-generation path (which never iterates over single vectors) is
# available.
DEFAULT_CAP = 5_000_000


def size_of_Mk(k: int, num_states: int) -> int:
    """Number of neighborhood vectors with degree exactly k."""
    return math.comb(k + num_states - 1, num_states - 1)


def total_size(num_states: int, kmax: int) -> int:
    """Number of neighborhood vectors with degree at most kmax."""
    return math.comb(kmax + num_states, num_states)


def ame_equation_count(kmax: int, num_states: int) -> int:
    """Number of scalar equations of the full master-equation system."""
    return math.comb(kmax + num_states, num_states - 1) * (kmax + 1)


def compositions(total: int, parts: int) -> np.ndarray:
    """All vectors of `parts` nonnegative ints summing to `total`, lex order."""
    if parts == 1:
        return np.array([[total]], dtype=np.int64)
    blocks = []
    for first in range(total + 1):
        rest = compositions(total - first, parts - 1)
        blocks.append(
            np.column_stack([np.full(len(rest), first, dtype=np.int64), rest])
        )
    return np.vstack(blocks)


class NeighborhoodIndex:
    """Bijection between neighborhood vectors and ordinals 0..|M|-1.

    Vectors are ordered degree-major, then lexicographically on the counts,
    so every degree slice M_k occupies a contiguous index range.
    """

    def __init__(self, num_states: int, kmax: int, cap: int = DEFAULT_CAP):
        if num_states < 1:
            raise ValueError("num_states must be >= 1")
        if kmax < 0:
            raise ValueError("kmax must be >= 0")
        n = total_size(num_states, kmax)
        if n > cap:
            raise CapExceededError(
                f"neighborhood set has {n} vectors, exceeding the cap of {cap}; "
                "use the approximate generation mode"
            )
        self.num_states = num_states
        self.kmax = kmax
        slices = [compositions(k, num_states) for k in range(kmax + 1)]
        self.vectors = np.vstack(slices)
        self.degrees = self.vectors.sum(axis=1)
        self.k_offsets = np.concatenate(
            [[0], np.cumsum([len(s) for s in slices])]
        )
        self._keys = self._encode(self.vectors)

    def __len__(self) -> int:
        return len(self.vectors)

    def _encode(self, vecs: np.ndarray) -> np.ndarray:
        # Monotone in (degree, lex) order, so encoded keys are sorted and
        # searchsorted implements index_of.
        base = self.kmax + 2
        code = np.zeros(len(vecs), dtype=np.int64)
        for s in range(self.num_states):
            code = code * base + vecs[:, s]
        return vecs.sum(axis=1) * base**self.num_states + code

    def index_of(self, vecs: np.ndarray) -> np.ndarray:
        """Ordinals of the given vectors (rows); vectors must be members."""
        vecs = np.atleast_2d(np.asarray(vecs, dtype=np.int64))
        idx = np.searchsorted(self._keys, self._encode(vecs))
        return idx

    def vector_of(self, idx):
        return self.vectors[idx]

    def slice_of_degree(self, k: int) -> slice:
        """Index range of the degree-k slice M_k."""
        return slice(int(self.k_offsets[k]), int(self.k_offsets[k + 1]))

    def shift_indices(self, s1: int, s2: int):
        """Vectorized shift m -> m with m[s1]+1, m[s2]-1.

        Returns (targets, valid): ordinal of the shifted vector per member,
        and a mask of members for which the shift exists (m[s2] >= 1; the
        degree is preserved so the result always stays within kmax).
        """
        if s1 == s2:
            raise ValueError("shift requires two distinct states")
        valid = self.vectors[:, s2] >= 1
        shifted = self.vectors[valid].copy()
        shifted[:, s1] += 1
        shifted[:, s2] -= 1
        targets = np.full(len(self.vectors), -1, dtype=np.int64)
        targets[valid] = self.index_of(shifted)
        return targets, valid


def shift(m, s1: int, s2: int):
    """Single-vector shift; returns the new tuple or None if undefined."""
    if s1 == s2:
        raise ValueError("shift requires two distinct states")
    if m[s2] < 1:
        return None
    out = list(m)
    out[s1] += 1
    out[s2] -= 1
    return tuple(out)
