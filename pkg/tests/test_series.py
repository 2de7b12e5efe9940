import io

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from _support import tcp
from trafficlrd.errors import BlockTooLarge, EmptyInput, TooShort
from trafficlrd.series import (
    BinnedSeries,
    aggregate_level,
    bin_series,
    geometric_grid,
    parse_interval,
    read_series_csv,
    sample_mean_var,
    series_to_csv,
)

THREE = [tcp(0.05, 40000, 80, 100), tcp(0.30, 40000, 80, 200), tcp(0.45, 40000, 80, 300)]


def test_bin_bytes():
    s = bin_series(THREE, 100, "bytes", t0=0.0)
    assert s.values.tolist() == [100, 0, 0, 200, 300]
    assert s.interval_ms == 100 and s.t0 == 0.0 and s.measure == "bytes"


def test_bin_packets():
    assert bin_series(THREE, 100, "packets", t0=0.0).values.tolist() == [1, 0, 0, 1, 1]


def test_bin_empty():
    with pytest.raises(EmptyInput):
        bin_series([], 100, "bytes", t0=0.0)


def test_bin_default_t0_is_first_packet():
    s = bin_series(THREE, 100, "packets")
    assert s.t0 == 0.05
    assert s.values.tolist() == [1, 0, 1, 0, 1]


def test_bin_pads_through_t_end_and_drops_later_packets():
    s = bin_series(THREE, 100, "bytes", t0=0.0, t_end=1.0)
    assert s.values.tolist() == [100, 0, 0, 200, 300, 0, 0, 0, 0, 0]
    s = bin_series(THREE, 100, "bytes", t0=0.0, t_end=0.35)
    assert s.values.tolist() == [100, 0, 0, 200]


def test_bin_rejects_t0_after_first_packet():
    with pytest.raises(ValueError):
        bin_series(THREE, 100, "bytes", t0=0.1)


def test_bin_boundaries_are_exact_in_microseconds():
    recs = [tcp(1.1, 1, 80, 50), tcp(1.2, 1, 80, 60), tcp(1.3, 1, 80, 70)]
    assert bin_series(recs, 100, "bytes", t0=1.0).values.tolist() == [0, 50, 60, 70]


@pytest.mark.parametrize(
    "values,m,expected",
    [([1, 2, 3, 4], 2, [1.5, 3.5]), ([5] * 6, 3, [5, 5]), ([1, 2, 3, 4, 5], 2, [1.5, 3.5])],
)
def test_aggregate_examples(values, m, expected):
    agg = aggregate_level(np.array(values, float), m)
    assert agg.values.tolist() == expected
    assert agg.m == m and len(agg) == len(values) // m


def test_aggregate_too_large():
    with pytest.raises(BlockTooLarge):
        aggregate_level(np.ones(3), 4)


def test_aggregate_accepts_series():
    s = BinnedSeries(100, 0.0, np.arange(8.0), "packets")
    agg = aggregate_level(s, 4)
    assert agg.base is s and agg.values.tolist() == [1.5, 5.5]


@pytest.mark.parametrize(
    "values,expected",
    [([1, 3], (2, 1)), ([7.5] * 9, (7.5, 0)), (list(range(10)), (4.5, 8.25))],
)
def test_sample_mean_var(values, expected):
    assert sample_mean_var(np.array(values, float)) == pytest.approx(expected, abs=1e-15)


def test_sample_mean_var_too_short():
    with pytest.raises(TooShort):
        sample_mean_var(np.array([1.0]))


@pytest.mark.parametrize("bad", [dict(interval_ms=0), dict(values=[]), dict(values=[-1.0]), dict(measure="bits")])
def test_binned_series_invariants(bad):
    kwargs = dict(interval_ms=100, t0=0.0, values=[1.0], measure="bytes")
    kwargs.update(bad)
    with pytest.raises(ValueError):
        BinnedSeries(**kwargs)


@pytest.mark.parametrize("text,ms", [("100ms", 100), ("500ms", 500), ("1s", 1000), ("10s", 10000),
                                     ("0.5s", 500), ("2m", 120000), ("250", 250)])
def test_parse_interval(text, ms):
    assert parse_interval(text) == ms


@pytest.mark.parametrize("text", ["0ms", "-1s", "0.5ms", "abc"])
def test_parse_interval_rejects(text):
    with pytest.raises(ValueError):
        parse_interval(text)


def test_geometric_grid():
    grid = geometric_grid(1, 6553, 20)
    assert grid[0] == 1 and grid[-1] == 6553
    assert grid == sorted(set(grid))
    assert 15 <= len(grid) <= 20
    assert geometric_grid(5, 4, 10) == []


def test_csv_round_trip():
    s = BinnedSeries(500, 1700000000.25, np.array([0, 3, 1.5, 1e6]), "bytes", class_id=3)
    text = series_to_csv(s, {"synthetic": "fgn", "seed": 4})
    lines = text.splitlines()
    assert lines[0] == "# synthetic=fgn seed=4"
    assert lines[1] == "# interval_ms=500,measure=bytes,class=3,t0=1700000000.25"
    assert lines[2] == "bin_index,value"
    back, meta = read_series_csv(io.StringIO(text))
    assert back.values.tolist() == s.values.tolist()
    assert (back.interval_ms, back.t0, back.measure, back.class_id) == (500, s.t0, "bytes", 3)
    assert meta["seed"] == "4"


series_values = arrays(np.float64, st.integers(1, 300), elements=st.floats(0, 1e6, allow_nan=False))


@settings(max_examples=200, deadline=None)
@given(series_values, st.integers(1, 40))
def test_mean_preservation(values, m):
    if m > values.size:
        m = values.size
    agg = aggregate_level(values, m)
    used = values[: m * (values.size // m)]
    assert agg.values.mean() == pytest.approx(used.mean(), rel=1e-12, abs=1e-9)


@settings(max_examples=200, deadline=None)
@given(st.integers(1, 8), st.integers(1, 8), st.integers(1, 6), st.integers(0, 2**32))
def test_composition(a, b, blocks, seed):
    x = np.random.default_rng(seed).random(a * b * blocks) * 1000
    twice = aggregate_level(aggregate_level(x, a).values, b).values
    once = aggregate_level(x, a * b).values
    np.testing.assert_allclose(twice, once, rtol=1e-12, atol=1e-9)


@settings(max_examples=100, deadline=None)
@given(
    st.lists(st.tuples(st.integers(0, 10_000_000), st.integers(20, 65535)), min_size=1, max_size=80),
    st.sampled_from([100, 500, 1000, 10000]),
)
def test_byte_and_packet_conservation(pairs, interval):
    recs = [tcp(t / 1e6, 1, 80, length) for t, length in pairs]
    by_bytes = bin_series(recs, interval, "bytes", t0=0.0)
    by_packets = bin_series(recs, interval, "packets", t0=0.0)
    assert int(by_bytes.values.sum()) == sum(length for _, length in pairs)
    assert int(by_packets.values.sum()) == len(pairs)
    assert np.all(by_bytes.values == np.round(by_bytes.values))
    assert len(by_bytes) == max(t for t, _ in pairs) // (interval * 1000) + 1


def test_iid_aggregation_variance_law():
    x = np.random.default_rng(11).standard_normal(2**16)
    for m in (4, 16, 64):
        ratio = sample_mean_var(aggregate_level(x, m))[1] / sample_mean_var(x)[1]
        assert ratio == pytest.approx(1 / m, rel=0.2)
