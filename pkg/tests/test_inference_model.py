import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import stats

from stochseir import epimodel as em
from stochseir.inference.model import ModelData, Priors, SeirPosterior, half_cauchy_median

from gradcheck import fd_relative_errors, random_point


def test_latent_period_prior():
    a, b = Priors().gamma1
    assert 2 / (a / b) == pytest.approx(2.0)
    assert np.sqrt(a) / b == pytest.approx(0.05)
    # mean of the period itself, 2 b / (a - 1), is within a quarter percent
    assert 2 * b / (a - 1) == pytest.approx(2.0, rel=3e-3)


@pytest.mark.parametrize("k, days", [(0, 5.0), (1, 4.0)])
def test_infectious_period_prior(k, days):
    a, b = Priors().gamma2(k)
    assert 2 / (a / b) == pytest.approx(days)
    assert np.sqrt(a) / b == pytest.approx(0.05)


def test_half_cauchy_median():
    assert half_cauchy_median(5.0) == pytest.approx(5.0)
    assert stats.halfcauchy(scale=5).median() == pytest.approx(5.0)


def test_eta0_prior_centre():
    assert np.exp(Priors().eta0_location(0.4)) == pytest.approx(0.6)


def test_gradient_matches_finite_differences(small_data):
    _, data = small_data
    model = SeirPosterior(data)
    rng = np.random.default_rng(5)
    worst = max(fd_relative_errors(model, random_point(model, rng)).max() for _ in range(5))
    assert worst < 1e-5


def test_gradient_with_all_switches(small_data):
    syn, data = small_data
    data = ModelData(data.deaths, data.population, data.kernel, vax_inflow=np.linspace(0, 500, data.T),
                     wave_boundaries=(25,), ifr_change_points=(30,), ifr_prior_means=(0.01, 0.006),
                     gamma2_switch=40)
    for sir in (False, True):
        model = SeirPosterior(data, sir=sir)
        theta = random_point(model, np.random.default_rng(1)) if not sir else None
        if sir:
            full = SeirPosterior(data)
            theta = np.delete(random_point(full, np.random.default_rng(1)), full.layout["log_gamma1"])
        assert fd_relative_errors(model, theta).max() < 1e-5


def test_prior_only_path_mode_is_zero(small_data):
    _, data = small_data
    model = SeirPosterior(data, likelihood_weight=0.0)
    theta = model.jittered_init(np.random.default_rng(0))
    lp0, g = model.log_prob_grad(theta)
    np.testing.assert_allclose(g[model.layout["z"]], 0.0, atol=1e-12)
    rng = np.random.default_rng(1)
    for _ in range(5):
        moved = theta.copy()
        moved[model.layout["z"]] = rng.normal(0, 0.1, data.T - 1)
        assert model.log_prob(moved) < lp0


def test_doubling_underpredicted_deaths_lowers_density():
    deaths = np.array([3, 5, 8, 6, 9, 12, 10, 15, 14, 18], dtype=float)
    kernel = em.discretize_gamma(6.29, 0.26)
    make = lambda D: SeirPosterior(ModelData(D, 1e6, kernel))
    model = make(deaths)
    theta = model.pack(dict(z=np.zeros(9), eta0=np.log(0.6), gamma1=1.0, gamma2=0.4, sigma=0.1,
                            inv_phi=0.1, ifr=0.01, seed_size=20.0))
    assert np.all(model.derived(theta)["expected_deaths"] < deaths)
    assert make(2 * deaths).log_prob(theta) < model.log_prob(theta)


def test_divergent_integration_gives_minus_infinity(small_data):
    _, data = small_data
    model = SeirPosterior(data)
    theta = model.jittered_init(np.random.default_rng(0))
    theta[model.layout["eta0"]] = 8.0  # beta ~ 3000 per day
    lp, g = model.log_prob_grad(theta)
    assert lp == -np.inf
    np.testing.assert_array_equal(g, 0.0)
    theta[0] = np.nan
    assert model.log_prob(theta) == -np.inf


@settings(max_examples=40, deadline=None)
@given(st.floats(-3, 3), st.floats(0.2, 3), st.floats(0.1, 1), st.floats(1e-3, 2), st.floats(1e-3, 10),
       st.floats(1e-4, 0.5), st.floats(1, 1e5))
def test_pack_unpack_bijection(eta0, g1, g2, sigma, inv_phi, ifr, seed):
    data = ModelData(np.zeros(8), 1e6, em.discretize_gamma(2.6, 0.4), wave_boundaries=(4,))
    model = SeirPosterior(data)
    p = dict(z=np.linspace(-1, 1, 7), eta0=eta0, gamma1=g1, gamma2=g2, sigma=[sigma, 2 * sigma],
             inv_phi=inv_phi, ifr=ifr, seed_size=seed)
    theta = model.pack(p)
    back = model.unpack(theta)
    for key in ("eta0", "gamma1", "inv_phi", "seed_size"):
        assert back[key] == pytest.approx(p[key], rel=1e-12)
    np.testing.assert_allclose(back["sigma"], p["sigma"], rtol=1e-12)
    np.testing.assert_allclose(model.unconstrain(model.constrain(theta)), theta, rtol=1e-12, atol=1e-12)
    assert len(model.constrained_names()) == model.dim


def test_derived_r_t_definition(small_data):
    _, data = small_data
    model = SeirPosterior(data)
    theta = model.jittered_init(np.random.default_rng(2))
    der = model.derived(theta)
    g2 = model.unpack(theta)["gamma2"][0]
    np.testing.assert_allclose(der["R_t"], 2 * der["beta"] / g2)
    np.testing.assert_allclose(der["states"].sum(axis=1), data.population, rtol=1e-10)
