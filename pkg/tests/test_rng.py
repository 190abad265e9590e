import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from isonorm.rng import RngStream, block_sizes, map_blocks, parallel_map, worker_count


def test_same_key_same_sequence():
    a = RngStream(5, 9).generator().random(10)
    b = RngStream(5, 9).generator().random(10)
    np.testing.assert_array_equal(a, b)


def test_distinct_keys_differ():
    a = RngStream(5, 9).generator().random(10)
    assert not np.array_equal(a, RngStream(5, 10).generator().random(10))
    assert not np.array_equal(a, RngStream(6, 9).generator().random(10))


def test_children_deterministic_and_distinct():
    s = RngStream(1, 2)
    assert s.child(3) == s.child(3)
    ids = {s.child(i).stream_id for i in range(1000)}
    assert len(ids) == 1000
    assert s.child(1, 2) != s.child(2, 1)


def test_stream_independence():
    x = RngStream(3, 0).child(0).generator().standard_normal(200_000)
    y = RngStream(3, 0).child(1).generator().standard_normal(200_000)
    r = np.corrcoef(x, y)[0, 1]
    assert abs(r) < 3 / np.sqrt(len(x))


@settings(max_examples=20, deadline=None)
@given(st.integers(0, 100_000), st.integers(1, 5000))
def test_block_sizes_cover_count(count, block):
    sizes = block_sizes(count, block)
    assert sum(sizes) == count
    assert all(0 < s <= block for s in sizes)


@pytest.mark.parametrize("workers", ["1", "4", "16"])
def test_map_blocks_worker_invariant(monkeypatch, workers):
    monkeypatch.setenv("ISONORM_THREADS", workers)
    assert worker_count() == int(workers)
    out = map_blocks(lambda g, m: g.standard_normal(m), 10_000, RngStream(4), block_size=999)
    monkeypatch.setenv("ISONORM_THREADS", "1")
    ref = map_blocks(lambda g, m: g.standard_normal(m), 10_000, RngStream(4), block_size=999)
    np.testing.assert_array_equal(out, ref)


def test_parallel_map_preserves_order():
    assert parallel_map(lambda v: v * v, list(range(50)), workers=8) == [v * v for v in range(50)]


def test_worker_count_bad_value(monkeypatch):
    monkeypatch.setenv("ISONORM_THREADS", "lots")
    assert worker_count() == 1
