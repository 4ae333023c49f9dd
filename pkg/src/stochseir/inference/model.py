"""Joint log posterior of the stochastic-transmission SEIR model and its gradient.

Unconstrained parameter vector, in order:

    z[1..T-1]          standard-normal increments of log beta
    eta0               log beta on day 0
    log_gamma1         latent-stage exit rate (absent in the SIR reduction)
    log_gamma2[k]      infectious-stage exit rate, one per period
    log_sigma[w]       random-walk volatility, one per wave
    log_inv_phi        NegBin overdispersion 1/phi
    logit_ifr[j]       IFR level per IFR period
    log_seed           initial seed (persons)

The gradient is assembled by hand: NegBin -> delay convolution -> integrator
adjoint -> random-walk reconstruction, plus prior and Jacobian terms.
"""
from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np
from scipy import special

from .. import epimodel as em
from ..diffusion import WaveSchedule, path_gradients, reconstruct_path
from ..observation import IfrSchedule, convolve_delay, convolve_delay_adjoint, negbin_loglik_grad

LOG_2PI = np.log(2.0 * np.pi)


def gamma_shape_rate(mean, sd):
    """Shape and rate of the Gamma with the given mean and standard deviation."""
    shape = (mean / sd) ** 2
    return shape, mean / sd ** 2


@dataclass(frozen=True)
class Priors:
    """Fixed prior hyperparameters.

    gamma1 and gamma2 get Gamma priors given by mean and sd on the rate
    scale; ``gamma2_means`` holds one mean per infectious-period regime
    (5 days, then 4 days after the configured switch).
    """

    gamma1_mean: float = 1.0
    gamma2_means: tuple = (0.4, 0.5)
    rate_sd: float = 0.05
    sigma_scale: float = 5.0
    inv_phi_scale: float = 5.0
    ifr_kappa: float = 2000.0
    seed_median: float = 20.0
    seed_log_sd: float = 1.0
    r0_guess: float = 3.0
    eta0_scale: float = 0.5

    @property
    def gamma1(self):
        return gamma_shape_rate(self.gamma1_mean, self.rate_sd)

    def gamma2(self, k):
        return gamma_shape_rate(self.gamma2_means[k], self.rate_sd)

    def eta0_location(self, gamma2):
        return np.log(self.r0_guess * gamma2 / 2.0)


def priors() -> Priors:
    return Priors()


def half_cauchy_median(scale):
    return scale * np.tan(np.pi / 4.0)


@dataclass(frozen=True)
class ModelData:
    """Everything fixed during sampling."""

    deaths: np.ndarray
    population: float
    kernel: em.DelayKernel
    vax_inflow: np.ndarray = None  # efficacy-weighted, lagged, persons/day
    wave_boundaries: tuple = ()
    ifr_change_points: tuple = ()
    ifr_prior_means: tuple = (0.01,)
    gamma2_switch: int | None = None
    substeps: int = 4

    def __post_init__(self):
        object.__setattr__(self, "deaths", np.asarray(self.deaths, dtype=float))
        if self.vax_inflow is None:
            object.__setattr__(self, "vax_inflow", np.zeros(len(self.deaths)))
        object.__setattr__(self, "vax_inflow", np.asarray(self.vax_inflow, dtype=float))
        if len(self.vax_inflow) != len(self.deaths):
            raise ValueError("vaccination inflow must match the deaths window")

    @property
    def T(self):
        return len(self.deaths)

    @property
    def n_waves(self):
        return len(self.wave_boundaries) + 1

    @property
    def n_gamma2(self):
        return 1 if self.gamma2_switch is None else 2

    @property
    def n_ifr(self):
        return len(self.ifr_change_points) + 1


@dataclass(frozen=True)
class Layout:
    blocks: tuple  # (name, size) pairs

    def __post_init__(self):
        offsets = {}
        start = 0
        for name, size in self.blocks:
            offsets[name] = slice(start, start + size)
            start += size
        object.__setattr__(self, "_slices", offsets)
        object.__setattr__(self, "dim", start)

    def __getitem__(self, name):
        return self._slices[name]

    def __contains__(self, name):
        return name in self._slices

    def unconstrained_names(self):
        names = []
        for name, size in self.blocks:
            names += [name] if size == 1 and name != "z" else [f"{name}[{i}]" for i in range(size)]
        return names


class SeirPosterior:
    """Log posterior over the unconstrained parameter vector.

    Set ``sir=True`` for the reduced S -> I1 -> I2 -> R model used by the
    warm start (no latent stages, hence no gamma1).  ``likelihood_weight``
    scales the NegBin term; 0 switches the data off.
    """

    def __init__(self, data: ModelData, prior: Priors = Priors(), sir=False, likelihood_weight=1.0):
        self.data = data
        self.prior = prior
        self.sir = sir
        self.likelihood_weight = likelihood_weight
        T = data.T
        blocks = [("z", T - 1), ("eta0", 1)]
        if not sir:
            blocks.append(("log_gamma1", 1))
        blocks += [("log_gamma2", data.n_gamma2), ("log_sigma", data.n_waves),
                   ("log_inv_phi", 1), ("logit_ifr", data.n_ifr), ("log_seed", 1)]
        self.layout = Layout(tuple(blocks))
        self.schedule = WaveSchedule(data.wave_boundaries, (1.0,) * data.n_waves)
        self.ifr = IfrSchedule(data.ifr_change_points, data.ifr_prior_means,
                               data.ifr_prior_means, prior.ifr_kappa)
        self._ifr_seg = self.ifr.segment_index(T)
        self._g2_seg = np.zeros(T, dtype=int)
        if data.gamma2_switch is not None:
            self._g2_seg[data.gamma2_switch:] = 1
        self._tol = em.fixed_point_tolerance(data.population)
        self._slack = em.NEGATIVE_SLACK / data.population

    @property
    def dim(self):
        return self.layout.dim

    # -- packing -------------------------------------------------------------

    def unpack(self, theta):
        L = self.layout
        theta = np.asarray(theta, dtype=float)
        out = {
            "z": theta[L["z"]],
            "eta0": float(theta[L["eta0"]][0]),
            "gamma2": np.exp(theta[L["log_gamma2"]]),
            "sigma": np.exp(theta[L["log_sigma"]]),
            "inv_phi": float(np.exp(theta[L["log_inv_phi"]][0])),
            "ifr": special.expit(theta[L["logit_ifr"]]),
            "seed_size": float(np.exp(theta[L["log_seed"]][0])),
        }
        out["gamma1"] = float(np.exp(theta[L["log_gamma1"]][0])) if "log_gamma1" in L else np.nan
        out["phi"] = 1.0 / out["inv_phi"]
        return out

    def pack(self, params):
        L = self.layout
        theta = np.zeros(L.dim)
        theta[L["z"]] = params["z"]
        theta[L["eta0"]] = params["eta0"]
        if "log_gamma1" in L:
            theta[L["log_gamma1"]] = np.log(params["gamma1"])
        theta[L["log_gamma2"]] = np.log(np.broadcast_to(params["gamma2"], (self.data.n_gamma2,)))
        theta[L["log_sigma"]] = np.log(np.broadcast_to(params["sigma"], (self.data.n_waves,)))
        theta[L["log_inv_phi"]] = np.log(params["inv_phi"])
        theta[L["logit_ifr"]] = special.logit(np.broadcast_to(params["ifr"], (self.data.n_ifr,)))
        theta[L["log_seed"]] = np.log(params["seed_size"])
        return theta

    def constrained_names(self):
        d = self.data
        names = [f"z[{i + 1}]" for i in range(d.T - 1)] + ["eta0"]
        if not self.sir:
            names.append("gamma1")
        names += [f"gamma2[{k}]" for k in range(d.n_gamma2)]
        names += [f"sigma[{w}]" for w in range(d.n_waves)]
        names += ["inv_phi"]
        names += [f"ifr[{j}]" for j in range(d.n_ifr)]
        names += ["seed_size"]
        return names

    def constrain(self, theta):
        """Constrained values in the order of :meth:`constrained_names`."""
        p = self.unpack(theta)
        parts = [p["z"], [p["eta0"]]]
        if not self.sir:
            parts.append([p["gamma1"]])
        parts += [p["gamma2"], p["sigma"], [p["inv_phi"]], p["ifr"], [p["seed_size"]]]
        return np.concatenate([np.asarray(x, dtype=float) for x in parts])

    def unconstrain(self, values):
        """Inverse of :meth:`constrain`."""
        values = np.asarray(values, dtype=float)
        theta = values.copy()
        L = self.layout
        for name in ("log_gamma1", "log_gamma2", "log_sigma", "log_inv_phi", "log_seed"):
            if name in L:
                theta[L[name]] = np.log(values[L[name]])
        theta[L["logit_ifr"]] = special.logit(values[L["logit_ifr"]])
        return theta

    # -- forward model ---------------------------------------------------------

    def initial_fractions(self, seed_size):
        N = self.data.population
        y0 = np.zeros(6)
        y0[em.S] = 1.0 - seed_size / N
        if self.sir:
            y0[em.I1] = y0[em.I2] = 0.5 * seed_size / N
        else:
            y0[em.E1] = y0[em.E2] = 0.5 * seed_size / N
        return y0

    def _simulate(self, p):
        d = self.data
        path = reconstruct_path(p["eta0"], p["z"], self.schedule.with_sigmas(p["sigma"]))
        beta = np.exp(path.eta)
        g2 = p["gamma2"][self._g2_seg]
        g1 = p["gamma1"] if not self.sir else 0.0
        y0 = self.initial_fractions(p["seed_size"])
        inc, sub, status, day = em._forward(
            y0, beta, g1, g2, d.vax_inflow / d.population, d.substeps, self.sir, self._tol, self._slack)
        return path, beta, g1, g2, inc, sub, status, day

    def derived(self, theta):
        """Daily beta, infections c, expected deaths d and R_t at ``theta``."""
        p = self.unpack(theta)
        path, beta, g1, g2, inc, sub, status, day = self._simulate(p)
        em._raise_on_status(status, day)
        c = inc * self.data.population
        conv = convolve_delay(c, self.data.kernel.weights)
        ifr_daily = p["ifr"][self._ifr_seg]
        return {
            "beta": beta,
            "eta": path.eta,
            "infections": c,
            "expected_deaths": ifr_daily * conv,
            "R_t": 2.0 * beta / g2,
            "states": sub[::self.data.substeps] * self.data.population,
        }

    # -- density ---------------------------------------------------------------

    def log_prob(self, theta):
        return self.log_prob_grad(theta)[0]

    def log_prob_grad(self, theta):
        theta = np.asarray(theta, dtype=float)
        if not np.all(np.isfinite(theta)):
            return -np.inf, np.zeros_like(theta)
        with np.errstate(all="ignore"):
            try:
                return self._log_prob_grad(theta)
            except (OverflowError, FloatingPointError, ZeroDivisionError):
                return -np.inf, np.zeros_like(theta)

    def _log_prob_grad(self, theta):
        d, pr, L = self.data, self.prior, self.layout
        p = self.unpack(theta)
        if not (0.0 < p["seed_size"] < d.population):
            return -np.inf, np.zeros_like(theta)
        path, beta, g1, g2, inc, sub, status, _ = self._simulate(p)
        if status != em.STATUS_OK:
            return -np.inf, np.zeros_like(theta)

        grad = np.zeros_like(theta)
        N = d.population
        c = inc * N
        w = d.kernel.weights
        conv = convolve_delay(c, w)
        ifr = p["ifr"]
        ifr_daily = ifr[self._ifr_seg]
        mu = ifr_daily * conv
        phi = p["phi"]

        lp = 0.0
        if self.likelihood_weight != 0.0:
            ll, mu_bar, phi_bar = negbin_loglik_grad(d.deaths, mu, phi)
            lw = self.likelihood_weight
            lp += lw * ll
            mu_bar = lw * mu_bar
            phi_bar = lw * phi_bar
        else:
            mu_bar = np.zeros(d.T)
            phi_bar = 0.0
        ifr_bar = np.bincount(self._ifr_seg, weights=mu_bar * conv, minlength=d.n_ifr)
        c_bar = convolve_delay_adjoint(mu_bar * ifr_daily, w)

        beta_bar, g1_bar, g2_bar_daily, y0_bar = em._backward(
            sub, beta, g1, g2, c_bar * N, d.substeps, self.sir)
        g2_bar = np.bincount(self._g2_seg, weights=g2_bar_daily, minlength=d.n_gamma2)
        if self.sir:
            seed_bar = (0.5 * (y0_bar[em.I1] + y0_bar[em.I2]) - y0_bar[em.S]) / N
        else:
            seed_bar = (0.5 * (y0_bar[em.E1] + y0_bar[em.E2]) - y0_bar[em.S]) / N
        eta0_bar, z_bar, sigma_bar = path_gradients(beta_bar * beta, p["z"],
                                                     self.schedule.with_sigmas(p["sigma"]))

        # path prior (non-centred)
        z = p["z"]
        lp += -0.5 * float(z @ z) - 0.5 * LOG_2PI * z.size
        z_bar = z_bar - z

        # eta0 ~ N(log(R0 * gamma2[0] / 2), scale)
        loc = pr.eta0_location(p["gamma2"][0])
        r = (p["eta0"] - loc) / pr.eta0_scale
        lp += -0.5 * r * r - np.log(pr.eta0_scale) - 0.5 * LOG_2PI
        eta0_bar -= r / pr.eta0_scale
        g2_bar = g2_bar.copy()
        g2_bar[0] += r / pr.eta0_scale / p["gamma2"][0]

        grad[L["z"]] = z_bar
        grad[L["eta0"]] = eta0_bar

        # rates: Gamma priors on the rate scale, sampled on the log scale
        if not self.sir:
            a, b = pr.gamma1
            lp += _gamma_logpdf_log(p["gamma1"], a, b)
            grad[L["log_gamma1"]] = p["gamma1"] * g1_bar + a - b * p["gamma1"]
        g2_grad = np.empty(d.n_gamma2)
        for k in range(d.n_gamma2):
            a, b = pr.gamma2(k)
            gk = p["gamma2"][k]
            lp += _gamma_logpdf_log(gk, a, b)
            g2_grad[k] = gk * g2_bar[k] + a - b * gk
        grad[L["log_gamma2"]] = g2_grad

        # sigma_w ~ half-Cauchy(0, 5), log scale
        sig = p["sigma"]
        lp += float(np.sum(_half_cauchy_logpdf_log(sig, pr.sigma_scale)))
        grad[L["log_sigma"]] = sig * sigma_bar + _half_cauchy_dlog(sig, pr.sigma_scale)

        # 1/phi ~ half-Cauchy(0, 5), log scale
        ip = p["inv_phi"]
        lp += float(_half_cauchy_logpdf_log(ip, pr.inv_phi_scale))
        grad[L["log_inv_phi"]] = -phi * phi_bar + _half_cauchy_dlog(ip, pr.inv_phi_scale)

        # IFR levels ~ Beta(mean * kappa, (1 - mean) * kappa), logit scale
        m = np.asarray(d.ifr_prior_means)
        a = m * pr.ifr_kappa
        b = (1.0 - m) * pr.ifr_kappa
        lp += float(np.sum(a * np.log(ifr) + b * np.log1p(-ifr) - special.betaln(a, b)))
        grad[L["logit_ifr"]] = ifr * (1.0 - ifr) * ifr_bar + a * (1.0 - ifr) - b * ifr

        # log seed ~ N(log median, sd)
        u = np.log(p["seed_size"])
        rs = (u - np.log(pr.seed_median)) / pr.seed_log_sd
        lp += -0.5 * rs * rs - np.log(pr.seed_log_sd) - 0.5 * LOG_2PI
        grad[L["log_seed"]] = p["seed_size"] * seed_bar - rs / pr.seed_log_sd

        if not (np.isfinite(lp) and np.all(np.isfinite(grad))):
            return -np.inf, np.zeros_like(theta)
        return float(lp), grad

    # -- initial values ----------------------------------------------------------

    def prior_median_point(self):
        pr = self.prior
        d = self.data
        g2 = np.array([special.gammaincinv(pr.gamma2(k)[0], 0.5) / pr.gamma2(k)[1]
                       for k in range(d.n_gamma2)])
        params = {
            "z": np.zeros(d.T - 1),
            "eta0": float(pr.eta0_location(g2[0])),
            "gamma1": special.gammaincinv(pr.gamma1[0], 0.5) / pr.gamma1[1],
            "gamma2": g2,
            "sigma": np.full(d.n_waves, half_cauchy_median(pr.sigma_scale)),
            "inv_phi": half_cauchy_median(pr.inv_phi_scale),
            "ifr": np.asarray(d.ifr_prior_means, dtype=float),
            "seed_size": pr.seed_median,
        }
        return params

    def jittered_init(self, rng, scale=0.1):
        """Prior medians jittered multiplicatively by up to +-10 percent; z = 0."""
        p = self.prior_median_point()
        jit = lambda v: np.asarray(v) * rng.uniform(1 - scale, 1 + scale, np.shape(v))
        p["eta0"] = p["eta0"] + np.log(rng.uniform(1 - scale, 1 + scale))
        for key in ("gamma1", "gamma2", "sigma", "inv_phi", "ifr", "seed_size"):
            p[key] = jit(p[key])
        return self.pack(p)


def _gamma_logpdf_log(x, a, b):
    """Gamma(shape a, rate b) log density of x plus the log-scale Jacobian."""
    return a * np.log(b) - special.gammaln(a) + a * np.log(x) - b * x


def _half_cauchy_logpdf_log(x, s):
    return np.log(2.0 / (np.pi * s)) - np.log1p(np.square(np.asarray(x, dtype=np.float64) / s)) + np.log(x)


def _half_cauchy_dlog(x, s):
    return 1.0 - 2.0 * x * x / (s * s + x * x)
