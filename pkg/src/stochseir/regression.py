"""Multivariate regression of the epidemic summaries on mobility and testing.

Three responses (infections, log transmission rate, logit reporting ratio)
share one error covariance Sigma = D_sigma Omega D_sigma.  Omega gets an LKJ
prior through its Cholesky factor, the scales half-normal priors and each
equation's coefficients a Zellner g-prior with g = n.  The posterior is
sampled with the package's NUTS implementation; the gradient comes from JAX.
"""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

import jax

jax.config.update("jax_enable_x64", True)
import jax.numpy as jnp  # noqa: E402

from .epimodel import DelayKernel, discretize_gamma  # noqa: E402
from .ingest import DailySeries  # noqa: E402
from .inference import diagnostics as diag  # noqa: E402
from .inference.sampling import chain_rngs, run_chains  # noqa: E402
from .observation import convolve_delay  # noqa: E402
from .spline import LOGIT_CLIP  # noqa: E402

log = logging.getLogger(__name__)

RESPONSES = ("infections", "log_beta", "logit_ratio")
LKJ_SHAPE = 0.5
SIGMA_PRIOR_SD = 10.0


class DegeneratePCAError(ValueError):
    pass


class CollinearityError(ValueError):
    pass


# -- covariates ---------------------------------------------------------------


def mobility_pc1(components):
    """First principal component score of the standardised mobility columns.

    ``components`` is a list of aligned DailySeries or a (T, k) array.  The
    sign is fixed so the loading on the first column is non-negative.
    Returns the score series (DailySeries when given series) and the share
    of variance explained.
    """
    series = None
    if isinstance(components, (list, tuple)) and components and isinstance(components[0], DailySeries):
        series = components[0]
        M = np.column_stack([c.values for c in components])
    else:
        M = np.asarray(components, dtype=float)
    if M.ndim != 2 or M.shape[1] < 2:
        raise DegeneratePCAError("need at least two mobility components")
    sd = M.std(axis=0, ddof=1)
    if np.any(~(sd > 0)):
        bad = np.flatnonzero(~(sd > 0)).tolist()
        raise DegeneratePCAError(f"constant mobility column(s) {bad}")
    Z = (M - M.mean(axis=0)) / sd
    evals, evecs = np.linalg.eigh(Z.T @ Z / (len(Z) - 1))
    v = evecs[:, -1]
    if v[0] < 0:
        v = -v
    scores = Z @ v
    share = float(evals[-1] / evals.sum())
    if series is not None:
        scores = DailySeries(series.start_date, scores, series.kind, name="mobility_pc1")
    return scores, share


def serial_interval(shape=2.6, rate=0.4) -> DelayKernel:
    return discretize_gamma(shape, rate)


def mobility_proxy(pc1, kernel: DelayKernel):
    """m_t = sum_{tau < t} mob_tau * pi_{t - tau}."""
    values = pc1.values if isinstance(pc1, DailySeries) else np.asarray(pc1, dtype=float)
    m = convolve_delay(values, kernel.weights)
    if isinstance(pc1, DailySeries):
        return DailySeries(pc1.start_date, m, pc1.kind, name="mobility_proxy")
    return m


# -- design -------------------------------------------------------------------


@dataclass
class RegressionDesign:
    Y: np.ndarray  # (n, 3) standardised
    X: np.ndarray  # (n, p) standardised
    y_mean: np.ndarray
    y_sd: np.ndarray
    x_mean: np.ndarray
    x_sd: np.ndarray
    response_names: tuple = RESPONSES
    covariate_names: tuple = ()
    rows: np.ndarray = None  # source-row index of each retained row
    n_dropped: int = 0

    @property
    def n(self):
        return self.Y.shape[0]


def standardized_design(Y, X, response_names=RESPONSES, covariate_names=None) -> RegressionDesign:
    """Listwise deletion of incomplete rows, then column standardisation."""
    Y = np.asarray(Y, dtype=float)
    X = np.asarray(X, dtype=float)
    if covariate_names is None:
        covariate_names = tuple(f"x{i}" for i in range(X.shape[1]))
    keep = np.all(np.isfinite(Y), axis=1) & np.all(np.isfinite(X), axis=1)
    Yk, Xk = Y[keep], X[keep]
    x_sd = Xk.std(axis=0, ddof=1) if len(Xk) > 1 else np.zeros(X.shape[1])
    flat = [covariate_names[i] for i in np.flatnonzero(~(x_sd > 0))]
    if flat:
        raise CollinearityError(f"constant covariate column(s): {', '.join(flat)}")
    y_sd = Yk.std(axis=0, ddof=1)
    if np.any(~(y_sd > 0)):
        raise ValueError("a response column is constant")
    x_mean, y_mean = Xk.mean(axis=0), Yk.mean(axis=0)
    return RegressionDesign(
        Y=(Yk - y_mean) / y_sd, X=(Xk - x_mean) / x_sd, y_mean=y_mean, y_sd=y_sd,
        x_mean=x_mean, x_sd=x_sd, response_names=tuple(response_names),
        covariate_names=tuple(covariate_names), rows=np.flatnonzero(keep),
        n_dropped=int((~keep).sum()),
    )


def lagged_columns(series, lags, offset, n):
    """Columns ``series[offset + t - k]`` for t in [0, n); NaN before the series starts."""
    out = np.full((n, len(lags)), np.nan)
    for j, k in enumerate(lags):
        idx = offset + np.arange(n) - k
        ok = (idx >= 0) & (idx < len(series))
        out[ok, j] = series[idx[ok]]
    return out


def build_design(infections, log_beta, ratio, mobility_proxy_values, tests, lags=(3, 4, 5, 6),
                 offset=0, n_rows=None) -> RegressionDesign:
    """Assemble (c_t, log beta_t, logit r_t) on (m_t, tests_{t-k}).

    The responses are window series of length ``n_rows``; the covariates live
    on a longer grid whose day ``offset`` is the first window day, so lags can
    reach before the window.
    """
    n = len(infections) if n_rows is None else n_rows
    ratio = np.asarray(ratio, dtype=float)
    logit_r = np.log(np.clip(ratio, *LOGIT_CLIP) / (1 - np.clip(ratio, *LOGIT_CLIP)))
    logit_r[~np.isfinite(ratio)] = np.nan
    Y = np.column_stack([np.asarray(infections, dtype=float)[:n], np.asarray(log_beta, dtype=float)[:n],
                         logit_r[:n]])
    m = np.asarray(mobility_proxy_values, dtype=float)[offset:offset + n]
    X = np.column_stack([m, lagged_columns(np.asarray(tests, dtype=float), lags, offset, n)])
    names = ("mobility",) + tuple(f"tests_lag{k}" for k in lags)
    return standardized_design(Y, X, RESPONSES, names)


def check_collinearity(design: RegressionDesign, tol=1e-10):
    X = design.X
    s = np.linalg.svd(X, compute_uv=False)
    if s[-1] <= tol * s[0] * max(X.shape):
        _, _, vt = np.linalg.svd(X)
        v = vt[-1]
        cols = [design.covariate_names[i] for i in np.flatnonzero(np.abs(v) > 0.1)]
        raise CollinearityError(f"X'X is singular; collinear columns: {', '.join(cols)}")


# -- LKJ utilities --------------------------------------------------------------


def lkj_onion(K, eta, rng, size=None):
    """Correlation matrices from LKJ(eta) by the onion construction."""
    if size is not None:
        return np.stack([lkj_onion(K, eta, rng) for _ in range(size)])
    b = eta + (K - 2) / 2.0
    r = 2.0 * rng.beta(b, b) - 1.0
    C = np.array([[1.0, r], [r, 1.0]])
    for k in range(2, K):
        b -= 0.5
        y = rng.beta(k / 2.0, b)
        u = rng.standard_normal(k)
        u /= np.linalg.norm(u)
        z = np.linalg.cholesky(C) @ (np.sqrt(y) * u)
        C = np.block([[C, z[:, None]], [z[None, :], np.ones((1, 1))]])
    return C


def cholesky_corr(y, K):
    """Cholesky factor of a correlation matrix from K(K-1)/2 reals, with log |J|.

    Canonical partial correlations tanh(y) fill the rows in order; the
    Jacobian covers both the tanh map and the row normalisation.
    """
    z = jnp.tanh(y)
    log_j = jnp.sum(jnp.log1p(-z * z))
    rows = [jnp.zeros(K).at[0].set(1.0)]
    k = 0
    for i in range(1, K):
        row = jnp.zeros(K)
        ss = 0.0
        for j in range(i):
            if j == 0:
                val = z[k]
            else:
                log_j = log_j + 0.5 * jnp.log1p(-ss)
                val = z[k] * jnp.sqrt(1.0 - ss)
            row = row.at[j].set(val)
            ss = ss + val * val
            k += 1
        row = row.at[i].set(jnp.sqrt(1.0 - ss))
        rows.append(row)
    return jnp.stack(rows), log_j


def lkj_cholesky_logpdf(L, eta):
    """Unnormalised LKJ density of L L^T expressed on the Cholesky factor."""
    K = L.shape[0]
    powers = jnp.array([K - k + 2.0 * eta - 2.0 for k in range(2, K + 1)])
    return jnp.sum(powers * jnp.log(jnp.diagonal(L)[1:]))


# -- posterior -------------------------------------------------------------------


class MvRegressionPosterior:
    """Log posterior over (delta, log sigma, partial correlations).

    ``fixed_omega`` / ``fixed_sigma`` pin the correlation matrix or scales
    (used to compare against closed forms); pinned blocks are dropped from
    the parameter vector.
    """

    def __init__(self, design: RegressionDesign, g=None, fixed_omega=None, fixed_sigma=None,
                 lkj_shape=LKJ_SHAPE, sigma_prior_sd=SIGMA_PRIOR_SD):
        self.design = design
        X, Y = design.X, design.Y
        self.n, self.p = X.shape
        self.K = Y.shape[1]
        self.g = float(self.n if g is None else g)
        XtX = X.T @ X
        resid = Y - X @ np.linalg.solve(XtX, X.T @ Y)
        # empirical-Bayes g-prior scale: OLS residual variance per equation
        self.sigma_delta2 = np.sum(resid ** 2, axis=0) / max(self.n - self.p, 1)
        self.XtX = XtX
        self.fixed_omega = None if fixed_omega is None else np.asarray(fixed_omega, dtype=float)
        self.fixed_sigma = None if fixed_sigma is None else np.asarray(fixed_sigma, dtype=float)
        self.lkj_shape = lkj_shape
        self.sigma_prior_sd = sigma_prior_sd
        self.n_delta = self.p * self.K
        self.n_sigma = 0 if fixed_sigma is not None else self.K
        self.n_corr = 0 if fixed_omega is not None else self.K * (self.K - 1) // 2
        self.dim = self.n_delta + self.n_sigma + self.n_corr
        self._fn = None
        self._constrain = None

    def __getstate__(self):
        state = self.__dict__.copy()
        state["_fn"] = state["_constrain"] = None
        return state

    def _split(self, theta):
        a, b = self.n_delta, self.n_delta + self.n_sigma
        return theta[:a].reshape(self.p, self.K), theta[a:b], theta[b:]

    def _components(self, theta):
        delta, log_sigma, y = self._split(theta)
        lp = 0.0
        if self.fixed_sigma is None:
            sigma = jnp.exp(log_sigma)
            lp += jnp.sum(-0.5 * (sigma / self.sigma_prior_sd) ** 2 + log_sigma)
        else:
            sigma = jnp.asarray(self.fixed_sigma)
        if self.fixed_omega is None:
            L, log_j = cholesky_corr(y, self.K)
            lp += lkj_cholesky_logpdf(L, self.lkj_shape) + log_j
        else:
            L = jnp.asarray(np.linalg.cholesky(self.fixed_omega))
        return delta, sigma, L, lp

    def _log_prob(self, theta):
        delta, sigma, L, lp = self._components(theta)
        X, Y = jnp.asarray(self.design.X), jnp.asarray(self.design.Y)
        R = (Y - X @ delta) / sigma
        W = jax.scipy.linalg.solve_triangular(L, R.T, lower=True)
        log_det = jnp.sum(jnp.log(jnp.diagonal(L))) + jnp.sum(jnp.log(sigma))
        lp += -0.5 * jnp.sum(W * W) - self.n * log_det
        quad = jnp.einsum("ij,ik,kj->j", delta, jnp.asarray(self.XtX), delta)
        lp += jnp.sum(-0.5 * quad / (self.g * jnp.asarray(self.sigma_delta2)))
        return lp

    def log_prob_grad(self, theta):
        if self._fn is None:
            self._fn = jax.jit(jax.value_and_grad(self._log_prob))
        v, g = self._fn(np.asarray(theta, dtype=float))
        v = float(np.asarray(v))
        g = np.asarray(g)
        if not (np.isfinite(v) and np.all(np.isfinite(g))):
            return -np.inf, np.zeros_like(g)
        return v, g

    def log_prob(self, theta):
        return self.log_prob_grad(theta)[0]

    def _constrained(self, theta):
        delta, sigma, L, _ = self._components(theta)
        return delta, sigma, L @ L.T

    def constrain(self, theta):
        """(delta, sigma, Omega) for one or a stack of unconstrained vectors."""
        if self._constrain is None:
            self._constrain = jax.jit(jax.vmap(self._constrained))
        theta = np.atleast_2d(np.asarray(theta, dtype=float))
        return tuple(np.asarray(a) for a in self._constrain(jnp.asarray(theta)))

    def initial_point(self, rng):
        theta = np.zeros(self.dim)
        X, Y = self.design.X, self.design.Y
        ols = np.linalg.solve(self.XtX, X.T @ Y)
        theta[:self.n_delta] = (ols + 0.1 * rng.standard_normal(ols.shape)).ravel()
        if self.n_sigma:
            theta[self.n_delta:self.n_delta + self.n_sigma] = 0.5 * np.log(self.sigma_delta2) \
                + rng.uniform(-0.2, 0.2, self.K)
        if self.n_corr:
            theta[self.n_delta + self.n_sigma:] = rng.uniform(-0.2, 0.2, self.n_corr)
        return theta


@dataclass
class CorrelationPosterior:
    delta: np.ndarray  # (draws, p, K), standardised scale
    sigma: np.ndarray  # (draws, K)
    omega: np.ndarray  # (draws, K, K)
    design: RegressionDesign
    chains: int
    diagnostics: dict = field(default_factory=dict)
    sigma_delta2: np.ndarray = None

    def covariance(self):
        """Sigma = D_sigma Omega D_sigma per draw."""
        return self.sigma[:, :, None] * self.omega * self.sigma[:, None, :]

    def delta_original(self):
        """Coefficients on the raw response and covariate scales."""
        d = self.design
        return self.delta * d.y_sd[None, None, :] / d.x_sd[None, :, None]

    def coefficient_table(self):
        d = self.design
        rows = []
        for scale, arr in (("standardized", self.delta), ("original", self.delta_original())):
            for i, cov in enumerate(d.covariate_names):
                for j, resp in enumerate(d.response_names):
                    rows.append({"response": resp, "covariate": cov, "scale": scale,
                                 **_summary(arr[:, i, j])})
        return pd.DataFrame(rows)

    def correlation_table(self):
        d = self.design
        rows = []
        K = self.omega.shape[1]
        for i in range(K):
            for j in range(i + 1, K):
                rows.append({"response_a": d.response_names[i], "response_b": d.response_names[j],
                             **_summary(self.omega[:, i, j])})
        for j in range(K):
            rows.append({"response_a": d.response_names[j], "response_b": "sigma",
                         **_summary(self.sigma[:, j])})
        return pd.DataFrame(rows)


def _summary(x):
    q = np.quantile(x, [0.025, 0.5, 0.975])
    return {"mean": float(x.mean()), "sd": float(x.std(ddof=1)), "q2.5": q[0], "q50": q[1],
            "q97.5": q[2], "significant": bool(q[0] > 0 or q[2] < 0)}


def fit_mvreg(design: RegressionDesign, chains=4, warmup=500, samples=500, seed=1,
              fixed_omega=None, fixed_sigma=None, workers=1, target_accept=0.8) -> CorrelationPosterior:
    if design.n <= 10:
        raise ValueError(f"regression needs more than 10 complete rows, got {design.n}")
    check_collinearity(design)
    target = MvRegressionPosterior(design, fixed_omega=fixed_omega, fixed_sigma=fixed_sigma)
    rngs = chain_rngs([seed, 0x4D56], chains)
    inits = [target.initial_point(r) for r in rngs]
    results = run_chains(target, inits, rngs, warmup, samples, target_accept, 10, workers)
    draws = np.stack([r.draws for r in results], axis=1)  # (iter, chain, dim)
    flat = draws.reshape(-1, target.dim)
    delta, sigma, omega = target.constrain(flat)
    rh = [diag.rhat(draws[:, :, k].T) for k in range(target.dim)] if samples >= 4 else [np.nan]
    diagnostics = {
        "max_rhat": float(np.nanmax(rh)),
        "divergences": [int(r.divergent.sum()) for r in results],
        "g": target.g,
        "sigma_delta2": target.sigma_delta2.tolist(),
        "n_rows": design.n,
        "n_dropped": design.n_dropped,
    }
    return CorrelationPosterior(delta=delta, sigma=sigma, omega=omega, design=design, chains=chains,
                                diagnostics=diagnostics, sigma_delta2=target.sigma_delta2)


def zellner_posterior_mean(design: RegressionDesign, g=None):
    """Closed-form coefficient mean under Omega = I and sigma_j = sigma_delta_j."""
    g = design.n if g is None else g
    ols = np.linalg.solve(design.X.T @ design.X, design.X.T @ design.Y)
    return g / (g + 1.0) * ols
