import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from stochseir import postprocess as pp
from stochseir.ingest import WindowError


def test_threshold_case():
    g2 = np.array([0.3, 0.4, 0.5])
    band = pp.reproduction_number(np.tile(g2[:, None] / 2, (1, 7)), g2)
    np.testing.assert_allclose(band.median, 1.0)
    for lo, hi in band.bands.values():
        np.testing.assert_allclose(lo, 1.0)
        np.testing.assert_allclose(hi, 1.0)


def test_arithmetic():
    assert pp.reproduction_number(np.full((1, 3), 1.2), [0.4]).median == pytest.approx([6.0] * 3)


def test_median_of_three():
    band = pp.quantile_band(np.array([[1.0], [3.0], [2.0]]))
    assert band.median[0] == 2.0


def test_time_varying_gamma2():
    beta = np.full((2, 4), 1.0)
    g2 = np.array([[0.4, 0.4, 0.5, 0.5]] * 2)
    np.testing.assert_allclose(pp.reproduction_number(beta, g2).median, [5, 5, 4, 4])


@given(arrays(float, (30, 12), elements=st.floats(0, 5)))
def test_band_ordering(beta):
    band = pp.reproduction_number(beta, np.full(30, 0.4))
    for lo, hi in band.bands.values():
        assert np.all(lo <= band.median + 1e-12) and np.all(band.median <= hi + 1e-12)
    inner, outer = band.bands[(0.25, 0.75)], band.bands[(0.025, 0.975)]
    assert np.all(outer[0] <= inner[0] + 1e-12) and np.all(inner[1] <= outer[1] + 1e-12)


def test_band_frame_round_trip():
    rng = np.random.default_rng(0)
    band = pp.quantile_band(rng.standard_normal((50, 6)))
    back = pp.QuantileBand.from_frame(band.to_frame())
    np.testing.assert_array_equal(back.median, band.median)
    for key, (lo, hi) in band.bands.items():
        np.testing.assert_array_equal(back.bands[key][0], lo)
        np.testing.assert_array_equal(back.bands[key][1], hi)


def test_cumulative_prefix_sum():
    out = pp.cumulative_infections([[1.0, 2.0, 3.0]], population=100)
    np.testing.assert_array_equal(out.cumulative.median, [1, 3, 6])
    np.testing.assert_allclose(out.attack_rate.median, [0.01, 0.03, 0.06])


def test_attack_rate_bounded_on_model_output(small_data):
    syn, _ = small_data
    out = pp.cumulative_infections(syn.truth.infections[None, :], syn.scenario.population)
    assert np.all(out.attack_rate.median <= 1.0)


def test_reporting_ratio_examples():
    c = np.full(20, 100.0)
    full = pp.reporting_ratio(c, np.full(20, 100.0), lag=6, smooth=False)
    np.testing.assert_array_equal(full.raw[6:], 1.0)
    assert np.isnan(full.raw[:6]).all()
    none = pp.reporting_ratio(c, np.zeros(20), lag=6, smooth=False)
    np.testing.assert_array_equal(none.raw[6:], 0.0)
    some = pp.reporting_ratio(c, np.full(20, 23.0), lag=6, smooth=False)
    np.testing.assert_allclose(some.raw[6:], 0.23)


def test_reporting_ratio_clamps_and_marks_missing():
    c = np.array([0, 10, 10, 10, 10], dtype=float)
    rep = np.array([0, 3, 20, 5, 2], dtype=float)
    r = pp.reporting_ratio(c, rep, lag=1, smooth=False)
    assert np.isnan(r.raw[1])  # c_0 = 0
    np.testing.assert_allclose(r.raw[2:], [1.0, 0.5, 0.2])
    assert r.n_clamped == 1 and r.n_missing == 1


def test_reporting_ratio_no_overlap():
    with pytest.raises(WindowError):
        pp.reporting_ratio(np.ones(5), np.ones(5), lag=6)


@given(st.floats(1e-3, 1e3))
def test_reporting_ratio_scale_consistent(k):
    rng = np.random.default_rng(2)
    c = rng.uniform(10, 1000, 40)
    rep = rng.uniform(0, 10, 40)
    a = pp.reporting_ratio(c, rep, smooth=False).raw
    b = pp.reporting_ratio(k * c, k * rep, smooth=False).raw
    np.testing.assert_allclose(a, b, rtol=1e-12)


def test_smoothed_ratio_in_unit_interval():
    rng = np.random.default_rng(3)
    c = rng.uniform(100, 1000, 80)
    rep = c * np.clip(rng.normal(0.3, 0.1, 80), 0, None)
    r = pp.reporting_ratio(np.roll(c, -6), rep, lag=6)
    ok = np.isfinite(r.smoothed)
    assert ok.sum() == 74
    assert np.all((r.smoothed[ok] >= 0) & (r.smoothed[ok] <= 1))
