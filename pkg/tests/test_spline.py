import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special

from stochseir.spline import LAMBDA_GRID, SmoothingError, pspline, smooth_ratio

from oracles import pspline_gcv


def test_constant_preserved():
    out, _ = smooth_ratio(np.full(60, 0.4))
    np.testing.assert_allclose(out, 0.4, atol=1e-6)


def test_linear_logit_recovered():
    t = np.arange(80)
    truth = special.expit(-2 + 0.03 * t)
    out, _ = smooth_ratio(truth)
    np.testing.assert_allclose(out, truth, atol=1e-4)


def test_noise_is_reduced():
    rng = np.random.default_rng(4)
    noisy = 0.5 + rng.normal(0, 0.1, 100)
    out, fit = smooth_ratio(noisy)
    assert np.std(out) < np.std(noisy)
    assert fit.edf < 20


def test_gaps_and_span():
    v = np.full(50, np.nan)
    v[5:45] = 0.3
    v[20:25] = np.nan
    out, _ = smooth_ratio(v)
    assert np.isnan(out[:5]).all() and np.isnan(out[45:]).all()
    np.testing.assert_allclose(out[5:45], 0.3, atol=1e-6)


def test_too_few_points():
    v = np.full(30, np.nan)
    v[:9] = 0.2
    with pytest.raises(SmoothingError, match="10"):
        smooth_ratio(v)


def test_matches_dense_oracle():
    rng = np.random.default_rng(0)
    x = np.sort(rng.uniform(0, 30, 45))
    y = np.sin(x / 5) + rng.normal(0, 0.2, 45)
    fit = pspline(x, y)
    fitted, gcv = pspline_gcv(x, y, fit.knots, fit.lam)
    np.testing.assert_allclose(fit(x), fitted, atol=1e-9)
    assert fit.gcv == pytest.approx(gcv, rel=1e-8)
    # the chosen stiffness minimises the oracle GCV over the grid
    others = [pspline_gcv(x, y, fit.knots, lam)[1] for lam in LAMBDA_GRID]
    assert gcv == pytest.approx(min(others), rel=1e-8)


@settings(max_examples=25, deadline=None)
@given(st.integers(0, 40))
def test_shift_equivariance(k):
    rng = np.random.default_rng(1)
    v = special.expit(rng.normal(-1, 0.5, 40))
    base, _ = smooth_ratio(v)
    shifted, _ = smooth_ratio(np.concatenate([np.full(k, np.nan), v]))
    np.testing.assert_allclose(shifted[k:], base, atol=1e-9)


@settings(max_examples=25, deadline=None)
@given(st.lists(st.floats(0, 1), min_size=10, max_size=60))
def test_output_in_unit_interval(vals):
    out, _ = smooth_ratio(np.array(vals))
    assert np.all((out >= 0) & (out <= 1))
