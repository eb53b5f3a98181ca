import json

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

import oracles
from fuzconv.errors import DegenerateSeries, EmptyWindow, OutOfUniverse
from fuzconv.fuzzify import (
    ExpandedElement,
    Fuzzifier,
    UniverseOfDiscourse,
    build_universe,
    expand_element,
    interval_count,
    next_spacing,
    pcp_align,
    tendency_accumulation,
    window_tendencies,
)
from fuzconv.series import DiffSeries, RawSeries, difference
from fuzconv.windowing import split


def _universe(lower, upper, count):
    return UniverseOfDiscourse(lower, upper, count, (upper - lower) / count, 1.0)


def _elem(left, right, center=0.0, lower=0.0, upper=10.0):
    return ExpandedElement(np.array(left, float), center, np.array(right, float), 0.0, 0, lower, upper)


# -- universe -----------------------------------------------------------------


def test_universe_alternating():
    u = build_universe(np.array([1.0, -1.0, 1.0, -1.0]))
    assert (u.lower, u.upper, u.interval_count, u.interval_width) == (-2.0, 2.0, 2, 2.0)
    assert u.sigma == 1.0


def test_universe_degenerate():
    with pytest.raises(DegenerateSeries):
        build_universe(np.zeros(3))


@pytest.mark.parametrize("n, count", [(2, 1), (3, 2), (4, 2), (5, 3), (64, 6), (65, 7), (1000, 10)])
def test_interval_count(n, count):
    assert interval_count(n) == count


def test_universe_64_samples():
    rng = np.random.default_rng(1)
    assert build_universe(rng.normal(size=64)).interval_count == 6


@settings(max_examples=200, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3, allow_nan=False), min_size=2, max_size=300))
def test_universe_matches_oracle(values):
    if len(set(values)) == 1:
        with pytest.raises(DegenerateSeries):
            build_universe(np.array(values))
        return
    u = build_universe(np.array(values))
    lo, hi, count, width = oracles.universe(values)
    assert u.interval_count == count
    assert u.lower == pytest.approx(lo, rel=1e-9, abs=1e-9)
    assert u.upper == pytest.approx(hi, rel=1e-9, abs=1e-9)
    assert u.interval_width == pytest.approx(width, rel=1e-9, abs=1e-9)
    assert u.lower <= min(values) and u.upper >= max(values)
    assert all(u.contains(v) for v in values)


def test_universe_dict_round_trip():
    u = build_universe(np.array([0.5, -1.5, 2.0, 0.0]))
    assert UniverseOfDiscourse.from_dict(json.loads(json.dumps(u.to_dict()))) == u


# -- tendency -----------------------------------------------------------------


def test_tendency_constant_window():
    t = np.array([1.0, 2.0, 3.0])
    assert [tendency_accumulation([4, 4, 4], t, j, 1.0) for j in range(3)] == [0, 0, 0]


def test_tendency_hand_value():
    assert tendency_accumulation([1, 2, 3], [1.0, 2.0, 3.0], 2, 1.0) == 1.0


def test_tendency_first_element_zero():
    assert tendency_accumulation([9, 2, 3], [1.0, 2.0, 3.0], 0, 1.0) == 0.0


def test_tendency_scale_cancellation():
    rng = np.random.default_rng(2)
    v = rng.normal(size=6)
    t = np.cumsum(rng.uniform(0.5, 2.0, size=6))
    sp = next_spacing(np.append(t, t[-1] + 1.3))[:6]
    a = window_tendencies(v, t, sp)
    b = window_tendencies(v, 2 * t, 2 * sp)
    np.testing.assert_allclose(a, b, rtol=1e-12, atol=1e-15)


def test_next_spacing_reuses_last_gap():
    assert next_spacing(np.array([0.0, 1.0, 3.0])).tolist() == [1.0, 2.0, 2.0]


@settings(max_examples=200, deadline=None)
@given(st.integers(2, 16), st.integers(0, 10**6))
def test_tendency_matches_oracle(size, seed):
    rng = np.random.default_rng(seed)
    v = rng.normal(size=size)
    t = np.cumsum(rng.uniform(0.1, 3.0, size=size))
    sp = rng.uniform(0.1, 3.0, size=size)
    for j in range(size):
        expected = oracles.tendency(v.tolist(), t.tolist(), j, sp[j])
        assert tendency_accumulation(v, t, j, sp[j]) == pytest.approx(expected, rel=1e-12, abs=1e-12)


# -- expansion ----------------------------------------------------------------


def test_expand_grid_example():
    e = expand_element(_universe(0.0, 4.0, 2), 3.0, 0.0)
    assert e.left.tolist() == [0, 2]
    assert e.center == 3
    assert e.right.tolist() == [4]


def test_expand_lower_boundary():
    u = _universe(-1.0, 3.0, 4)
    e = expand_element(u, -1.0, 0.25)
    assert e.interval == 0
    assert e.left.tolist() == [-1.0]
    assert e.right.tolist() == [0.0, 1.0, 2.0, 3.0]
    assert e.center == -0.75


def test_expand_upper_boundary_clamps():
    u = _universe(-1.0, 3.0, 4)
    e = expand_element(u, 3.0, 0.0)
    assert e.interval == 3
    assert e.right.tolist() == [3.0]


def test_expand_out_of_universe():
    with pytest.raises(OutOfUniverse):
        expand_element(_universe(0.0, 4.0, 2), 4.5, 0.0)


def test_interval_boundary_is_half_open():
    u = _universe(0.0, 4.0, 2)
    assert u.interval_index(2.0) == 1
    assert u.interval_index(1.999) == 0


@settings(max_examples=300, deadline=None)
@given(st.floats(-50, 50), st.floats(0.01, 50), st.integers(1, 12), st.floats(0, 1), st.floats(-5, 5))
def test_expand_matches_oracle(lower, span, count, frac, rho):
    u = _universe(lower, lower + span, count)
    value = lower + frac * span
    e = expand_element(u, value, rho)
    left, center, right = oracles.expand(u.lower, u.upper, count, u.interval_width, value, rho)
    assert e.left.tolist() == left
    assert e.right.tolist() == right
    assert e.center == center
    assert np.all(np.diff(e.left) >= 0) and np.all(np.diff(e.right) >= 0)
    lo_b = u.grid[e.interval]
    hi_b = u.grid[e.interval + 1]
    assert e.left.max() <= lo_b and e.right.min() >= hi_b


# -- padding-crop -------------------------------------------------------------


def test_pcp_hand_simulation():
    a = _elem([0, 2], [4], center=1.0, lower=0.0, upper=4.0)
    b = _elem([0], [2, 4], center=1.5, lower=0.0, upper=4.0)
    t = pcp_align([a, b])
    assert t.side_length == 2
    assert t.cols == 5
    assert t.data.tolist() == [[0, 2, 1.0, 4, 4], [0, 0, 1.5, 2, 4]]


def test_pcp_same_interval_no_padding():
    a = _elem([0, 1, 2], [3, 4, 5], center=2.5)
    b = _elem([0, 1, 2], [3, 4, 5], center=2.1)
    t = pcp_align([a, b])
    assert t.side_length == 3
    assert t.data[:, 3].tolist() == [2.5, 2.1]


def test_pcp_singleton():
    t = pcp_align([_elem([0, 1], [2, 3, 4, 5], center=1.5, lower=0.0, upper=5.0)])
    assert t.side_length == 4
    assert t.data.shape == (1, 9)
    assert t.data[0].tolist() == [0, 0, 0, 1, 1.5, 2, 3, 4, 5]


def test_pcp_crop_keeps_innermost():
    a = _elem([0, 1, 2, 3], [4], center=3.5, lower=0.0, upper=4.0)
    b = _elem([0], [1, 2], center=0.5, lower=0.0, upper=4.0)
    t = pcp_align([a, b])
    assert t.side_length == 2
    assert t.data[0].tolist() == [2, 3, 3.5, 4, 4]
    assert t.data[1].tolist() == [0, 0, 0.5, 1, 2]


def test_pcp_empty():
    with pytest.raises(EmptyWindow):
        pcp_align([])


def test_pcp_fixed_side_length_pads_further():
    e = _elem([0, 1], [2, 3], center=1.5, lower=0.0, upper=3.0)
    t = pcp_align([e], side_length=3)
    assert t.data[0].tolist() == [0, 0, 1, 1.5, 2, 3, 3]


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 10**6), st.integers(1, 10), st.integers(1, 8))
def test_pcp_matches_oracle(seed, count, size):
    rng = np.random.default_rng(seed)
    u = _universe(-3.0, 5.0, count)
    values = rng.uniform(u.lower, u.upper, size=size)
    rhos = rng.normal(size=size)
    elems = [expand_element(u, v, r) for v, r in zip(values, rhos)]
    t = pcp_align(elems)
    rows, sl = oracles.pcp(
        [(e.left.tolist(), e.center, e.right.tolist()) for e in elems], u.lower, u.upper
    )
    assert t.side_length == sl
    assert t.data.tolist() == rows
    # center preservation
    assert t.data[:, t.center_col].tolist() == [v + r for v, r in zip(values, rhos)]


# -- series-level fuzzifier --------------------------------------------------


def _random_diff(rng, n):
    y = rng.normal(size=n + 1).cumsum()
    t = np.cumsum(rng.uniform(0.5, 1.5, size=n + 1))
    return difference(RawSeries("r", t, y))


@settings(max_examples=60, deadline=None)
@given(st.integers(0, 10**6), st.integers(8, 120), st.integers(2, 8))
def test_vectorised_transform_matches_reference_path(seed, n, size):
    rng = np.random.default_rng(seed)
    diff = _random_diff(rng, n)
    size = min(size, n)
    fz = Fuzzifier.fit(diff, size)
    fast = fz.transform_series(diff)
    ws = split(diff, size)
    spacing = next_spacing(diff.timestamps)
    for i in range(len(ws.windows)):
        ref = fz.window_tensor(ws.windows[i], ws.times[i], spacing[i : i + size])
        np.testing.assert_allclose(fast[i], ref.data, rtol=1e-12, atol=1e-12)


def test_fit_side_length_is_global_minimum():
    rng = np.random.default_rng(7)
    diff = _random_diff(rng, 60)
    fz = Fuzzifier.fit(diff, 5)
    elems = [expand_element(fz.universe, v, 0.0) for v in diff.values]
    assert fz.side_length == pcp_align(elems).side_length


def test_transform_is_deterministic():
    rng = np.random.default_rng(8)
    diff = _random_diff(rng, 50)
    fz = Fuzzifier.fit(diff, 6)
    assert np.array_equal(fz.transform_series(diff), fz.transform_series(diff))


def test_transform_rejects_out_of_universe():
    diff = DiffSeries(0.0, np.arange(2.0, 8.0), np.array([1.0, -1.0, 1.0, -1.0, 1.0, -1.0]))
    fz = Fuzzifier.fit(diff, 3)
    with pytest.raises(OutOfUniverse):
        fz.transform(np.array([[0.0, 0.0, 99.0]]), np.array([[1.0, 2.0, 3.0]]), np.ones((1, 3)))


def test_fuzzifier_dict_round_trip():
    rng = np.random.default_rng(9)
    diff = _random_diff(rng, 30)
    fz = Fuzzifier.fit(diff, 4)
    back = Fuzzifier.from_dict(json.loads(json.dumps(fz.to_dict())))
    assert np.array_equal(back.transform_series(diff), fz.transform_series(diff))
