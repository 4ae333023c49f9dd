import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from stochseir import observation as ob
from stochseir.epimodel import discretize_gamma
from stochseir.observation import IfrSchedule

from oracles import convolve_loop

KERNEL = discretize_gamma(6.29, 0.26)


def test_impulse_response():
    c = np.zeros(80)
    c[0] = 100.0
    d = ob.expected_deaths(c, KERNEL, IfrSchedule((), (0.01,)))
    assert d[0] == 0.0
    np.testing.assert_allclose(d[1:1 + KERNEL.s_max], KERNEL.weights, rtol=1e-12)


def test_zero_ifr_annihilates():
    d = ob.expected_deaths(np.full(50, 1e4), KERNEL, IfrSchedule((), (0.0,)))
    np.testing.assert_array_equal(d, 0.0)


def test_steady_state():
    c = np.full(300, 5000.0)
    d = ob.expected_deaths(c, KERNEL, IfrSchedule((), (0.01,)))
    brute = 0.01 * convolve_loop(c, KERNEL.weights)
    np.testing.assert_allclose(d, brute, rtol=1e-12)
    assert d[-1] == pytest.approx(0.01 * 5000 * KERNEL.mass, rel=1e-12)
    assert d[-1] == pytest.approx(50.0, rel=1e-3)


def test_piecewise_ifr_schedule():
    s = IfrSchedule((3, 6), (0.01, 0.02, 0.005))
    np.testing.assert_array_equal(s.daily(8), [0.01] * 3 + [0.02] * 3 + [0.005] * 2)
    with pytest.raises(ValueError):
        IfrSchedule((3,), (0.01,))
    with pytest.raises(ValueError):
        IfrSchedule((), (1.2,))


@pytest.mark.parametrize("ifrs, counts, expected", [
    ([0.02, 0.3], [0, 12], 0.3),
    ([0.001, 0.01], [5, 5], 0.0055),
    ([0.0001, 0.005, 0.05], [70, 20, 10], 0.00607),
])
def test_ifr_prior_means(ifrs, counts, expected):
    assert ob.ifr_prior_means(ifrs, counts) == pytest.approx(expected, rel=1e-12)


def test_ifr_prior_means_zero_counts():
    with pytest.raises(ValueError, match="all zero"):
        ob.ifr_prior_means([0.01, 0.02], [0, 0])


def test_poisson_limit():
    assert ob.negbin_log_pmf(3, 2.5, 1e8) == pytest.approx(stats.poisson.logpmf(3, 2.5), abs=1e-4)


@pytest.mark.parametrize("d, phi", [(0.5, 1.0), (12.0, 3.5), (300.0, 40.0)])
def test_zero_class(d, phi):
    assert ob.negbin_log_pmf(0, d, phi) == pytest.approx(phi * np.log(phi / (phi + d)), rel=1e-12)


def test_normalization():
    total = np.exp(ob.negbin_log_pmf(np.arange(5001), 10.0, 2.0)).sum()
    assert abs(total - 1.0) < 1e-8


def test_matches_scipy_parameterization():
    D = np.arange(40)
    d, phi = 7.3, 2.2
    ref = stats.nbinom.logpmf(D, phi, phi / (phi + d))
    np.testing.assert_allclose(ob.negbin_log_pmf(D, d, phi), ref, rtol=1e-10)


def test_mean_floor():
    assert np.isfinite(ob.negbin_log_pmf(0, 0.0, 5.0))
    assert ob.negbin_log_pmf(0, 0.0, 5.0) == pytest.approx(ob.negbin_log_pmf(0, ob.MEAN_FLOOR, 5.0))


def test_loglik_gradient():
    rng = np.random.default_rng(2)
    D = rng.integers(0, 30, 20).astype(float)
    mu = rng.uniform(1, 30, 20)
    phi = 4.0
    ll, mu_bar, phi_bar = ob.negbin_loglik_grad(D, mu, phi)
    assert ll == pytest.approx(ob.negbin_log_pmf(D, mu, phi).sum())
    h = 1e-6
    fd = [(ob.negbin_log_pmf(D[i], mu[i] + h, phi) - ob.negbin_log_pmf(D[i], mu[i] - h, phi)) / (2 * h)
          for i in range(20)]
    np.testing.assert_allclose(mu_bar, fd, rtol=1e-6, atol=1e-9)
    fd_phi = (ob.negbin_log_pmf(D, mu, phi + h).sum() - ob.negbin_log_pmf(D, mu, phi - h).sum()) / (2 * h)
    assert phi_bar == pytest.approx(fd_phi, rel=1e-6)


def test_convolution_adjoint():
    rng = np.random.default_rng(0)
    x, y = rng.standard_normal(70), rng.standard_normal(70)
    lhs = y @ ob.convolve_delay(x, KERNEL.weights)
    rhs = x @ ob.convolve_delay_adjoint(y, KERNEL.weights)
    assert lhs == pytest.approx(rhs, rel=1e-12)


@settings(max_examples=40)
@given(st.floats(0, 1e4), st.floats(0, 1e4), st.floats(0.001, 0.05), st.floats(0.1, 10))
def test_linear_and_homogeneous(a, b, ifr, k):
    rng = np.random.default_rng(1)
    c1, c2 = rng.uniform(0, 1000, 60), rng.uniform(0, 1000, 60)
    sched = IfrSchedule((20,), (ifr, ifr / 2))
    lhs = ob.expected_deaths(a * c1 + b * c2, KERNEL, sched)
    rhs = a * ob.expected_deaths(c1, KERNEL, sched) + b * ob.expected_deaths(c2, KERNEL, sched)
    np.testing.assert_allclose(lhs, rhs, rtol=1e-9, atol=1e-9)
    scaled = IfrSchedule((20,), (min(k * ifr, 0.99), min(k * ifr, 0.99) / 2))
    ratio = scaled.levels[0] / ifr
    np.testing.assert_allclose(ob.expected_deaths(c1, KERNEL, scaled),
                               ratio * ob.expected_deaths(c1, KERNEL, sched), rtol=1e-9, atol=1e-12)


@given(st.integers(0, 30))
def test_shift_equivariance(k):
    c = np.zeros(120)
    c[3] = 1000.0
    shifted = np.roll(c, k)
    sched = IfrSchedule((), (0.01,))
    d0 = ob.expected_deaths(c, KERNEL, sched)
    dk = ob.expected_deaths(shifted, KERNEL, sched)
    np.testing.assert_allclose(dk[k:], d0[:120 - k], rtol=1e-12, atol=1e-15)
    np.testing.assert_array_equal(dk[:k + 4], 0.0)


@given(st.floats(0.5, 200), st.floats(0.2, 50))
def test_unimodal(d, phi):
    D = np.arange(0, int(d * 6 + 60))
    lp = ob.negbin_log_pmf(D, d, phi)
    mode = int(np.argmax(lp))
    assert np.all(np.diff(lp[:mode + 1]) > -1e-12)
    assert np.all(np.diff(lp[mode:]) < 1e-12)
