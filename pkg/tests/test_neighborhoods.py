import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from amelump.errors import CapExceededError
from amelump.neighborhoods import (
    NeighborhoodIndex,
    ame_equation_count,
    compositions,
    shift,
    size_of_Mk,
    total_size,
)


def brute_force_vectors(num_states, kmax):
    out = []

    def rec(prefix, remaining):
        if len(prefix) == num_states - 1:
            for last in range(remaining + 1):
                out.append((*prefix, last))
            return
        for v in range(remaining + 1):
            rec((*prefix, v), remaining - v)

    rec((), kmax)
    return set(out)


def test_total_size_matches_enumeration():
    for num_states in (1, 2, 3, 4):
        for kmax in (0, 1, 3, 7):
            assert total_size(num_states, kmax) == len(
                brute_force_vectors(num_states, kmax)
            )


def test_headline_set_sizes():
    assert total_size(3, 60) == 39711
    assert total_size(3, 55) == 30856
    assert total_size(3, 500) == 21_084_251


def test_degree_slice_sizes_match_enumeration():
    for num_states in (2, 3, 4):
        for k in (0, 2, 5):
            assert size_of_Mk(k, num_states) == len(compositions(k, num_states))
    assert size_of_Mk(0, 3) == 1
    assert size_of_Mk(2, 3) == 6
    assert size_of_Mk(50, 3) == 1326


def test_degree_slices_partition_the_set():
    for num_states in (2, 3):
        for kmax in (0, 5, 60):
            assert sum(
                size_of_Mk(k, num_states) for k in range(kmax + 1)
            ) == total_size(num_states, kmax)


def test_equation_count_closed_form():
    assert ame_equation_count(60, 3) == 119133 == 3 * 39711
    assert ame_equation_count(55, 3) == 92568 == 3 * 30856
    assert ame_equation_count(0, 2) == 2


@given(st.integers(2, 5), st.integers(0, 40))
def test_equation_count_equals_states_times_set_size(num_states, kmax):
    assert ame_equation_count(kmax, num_states) == num_states * total_size(
        num_states, kmax
    )


def test_equation_count_vs_enumeration_small():
    for num_states in (2, 3):
        for kmax in (0, 1, 4, 8):
            assert ame_equation_count(kmax, num_states) == num_states * len(
                brute_force_vectors(num_states, kmax)
            )


def test_index_is_a_bijection():
    idx = NeighborhoodIndex(3, 9)
    assert len(idx) == total_size(3, 9)
    assert set(map(tuple, idx.vectors)) == brute_force_vectors(3, 9)
    roundtrip = idx.index_of(idx.vectors)
    assert np.array_equal(roundtrip, np.arange(len(idx)))


def test_index_order_is_degree_major():
    idx = NeighborhoodIndex(3, 6)
    assert np.all(np.diff(idx.degrees) >= 0)
    for k in range(7):
        sl = idx.slice_of_degree(k)
        assert np.all(idx.degrees[sl] == k)
        assert sl.stop - sl.start == size_of_Mk(k, 3)


def test_materialization_cap():
    with pytest.raises(CapExceededError):
        NeighborhoodIndex(3, 500)
    NeighborhoodIndex(3, 500, cap=22_000_000)  # explicit larger cap works


def test_shift_examples():
    assert shift((2, 2), 0, 1) == (3, 1)
    assert shift((2, 0), 0, 1) is None
    assert shift(shift((2, 2), 0, 1), 1, 0) == (2, 2)


def test_shift_preserves_degree():
    idx = NeighborhoodIndex(3, 8)
    for m in map(tuple, idx.vectors):
        for s1 in range(3):
            for s2 in range(3):
                if s1 == s2:
                    continue
                out = shift(m, s1, s2)
                if out is not None:
                    assert sum(out) == sum(m)


def test_vectorized_shift_matches_scalar():
    idx = NeighborhoodIndex(3, 7)
    for s1, s2 in [(0, 1), (2, 0), (1, 2)]:
        targets, valid = idx.shift_indices(s1, s2)
        for i, m in enumerate(map(tuple, idx.vectors)):
            out = shift(m, s1, s2)
            if out is None:
                assert not valid[i]
            else:
                assert valid[i]
                assert tuple(idx.vector_of(targets[i])) == out
