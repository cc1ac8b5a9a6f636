import operator
from concurrent.futures import ThreadPoolExecutor

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from bsfkit.list_ops import (
    MapElementError,
    map_list,
    par_map,
    par_map_reduce,
    partition,
    reduce_list,
)


@pytest.fixture(scope="module")
def pool():
    with ThreadPoolExecutor(max_workers=8) as ex:
        yield ex


def inc(x):
    return x + 1


def test_map_list_basic():
    assert map_list(inc, [1, 2, 3]) == [2, 3, 4]
    assert map_list(inc, []) == []


def test_map_list_reports_index():
    with pytest.raises(MapElementError) as info:
        map_list(lambda x: 1 // x, [3, 2, 0, 1])
    assert info.value.index == 2
    assert isinstance(info.value.__cause__, ZeroDivisionError)


def test_reduce_list_basic():
    assert reduce_list(operator.add, 0, [1, 2, 3]) == 6
    assert reduce_list(operator.add, 0, []) == 0
    # left fold
    assert reduce_list(lambda a, b: f"({a}{b})", "", list("abc")) == "((ab)c)"


@pytest.mark.parametrize("total,parts,lengths", [
    (6, 3, [2, 2, 2]),
    (7, 3, [3, 2, 2]),
    (0, 3, [0, 0, 0]),
    (2, 5, [1, 1, 0, 0, 0]),
])
def test_partition_examples(total, parts, lengths):
    assert partition(total, parts).lengths == lengths


def test_partition_rejects_zero_parts():
    with pytest.raises(ValueError):
        partition(5, 0)


@given(st.integers(0, 5000), st.integers(1, 64))
def test_partition_invariants(total, parts):
    p = partition(total, parts)
    assert sum(p.lengths) == total
    pos = 0
    for start, length in p.boundaries:
        assert start == pos
        pos += length
    assert pos == total
    if total % parts == 0:
        assert set(p.lengths) <= {total // parts}
    else:
        extra = total % parts
        assert p.lengths[:extra] == [total // parts + 1] * extra
        assert p.lengths[extra:] == [total // parts] * (parts - extra)


def test_par_map_examples(pool):
    xs = list(range(1, 9))
    assert par_map(inc, xs, 4, pool) == list(range(2, 10))
    assert par_map(inc, xs, 1) == map_list(inc, xs)


def test_par_map_failure(pool):
    def f(x):
        if x == 5:
            raise ValueError("bad")
        return x

    with pytest.raises(MapElementError) as info:
        par_map(f, list(range(10)), 3, pool)
    assert info.value.index == 5


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.integers(-10, 10), min_size=1, max_size=20),
    st.lists(st.integers(0, 19), max_size=300),
    st.integers(1, 8),
)
def test_par_map_equals_map_list(table, idx, parts):
    F = lambda i: table[i % len(table)] * 3 - i  # noqa: E731
    with ThreadPoolExecutor(max_workers=parts) as ex:
        assert par_map(F, idx, parts, ex) == map_list(F, idx)


@settings(max_examples=100, deadline=None)
@given(st.lists(st.integers(-10**6, 10**6), max_size=500), st.integers(1, 8))
def test_par_map_reduce_exact_ints(xs, parts):
    F = lambda x: x * x - 3 * x  # noqa: E731
    expected = reduce_list(operator.add, 0, map_list(F, xs))
    assert par_map_reduce(F, operator.add, 0, xs, parts) == expected


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 64), st.integers(0, 200), st.integers(2, 8), st.integers(0, 2**31))
def test_par_map_reduce_float_vectors(dim, length, parts, seed):
    rng = np.random.default_rng(seed)
    vecs = rng.uniform(0.5, 2.0, size=(length, dim))
    F = lambda i: vecs[i] * 1.5  # noqa: E731
    xs = list(range(length))
    expected = reduce_list(np.add, np.zeros(dim), map_list(F, xs))
    got = par_map_reduce(F, np.add, np.zeros(dim), xs, parts)
    np.testing.assert_allclose(got, expected, rtol=1e-12, atol=0)


def test_par_map_reduce_one_part_bit_exact(pool):
    rng = np.random.default_rng(1)
    vecs = rng.normal(size=(100, 16))
    xs = list(range(100))
    F = lambda i: vecs[i]  # noqa: E731
    seq = reduce_list(np.add, np.zeros(16), map_list(F, xs))
    assert np.array_equal(par_map_reduce(F, np.add, np.zeros(16), xs, 1, pool), seq)


def test_par_map_reduce_deterministic(pool):
    rng = np.random.default_rng(2)
    vecs = rng.normal(size=(333, 8))
    xs = list(range(333))
    F = lambda i: vecs[i]  # noqa: E731
    a = par_map_reduce(F, np.add, np.zeros(8), xs, 5, pool)
    b = par_map_reduce(F, np.add, np.zeros(8), xs, 5, pool)
    assert a.tobytes() == b.tobytes()


def test_concatenation_law():
    xs = list(range(24))
    for k in (1, 2, 3, 4, 6, 8, 12, 24):
        m = len(xs) // k
        pieces = []
        for j in range(k):
            pieces += map_list(inc, xs[j * m:(j + 1) * m])
        assert pieces == map_list(inc, xs)


def test_empty_inputs(pool):
    assert par_map(inc, [], 3, pool) == []
    assert par_map_reduce(inc, operator.add, 0, [], 3, pool) == 0
