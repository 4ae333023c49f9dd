"""Deaths given infections: IFR-weighted delay convolution and NegBin scoring."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import special

from .epimodel import DelayKernel

MEAN_FLOOR = 1e-10


@dataclass(frozen=True)
class IfrSchedule:
    """Piecewise-constant IFR; ``levels[k]`` holds on ``[cp[k-1], cp[k])``."""

    change_points: tuple = ()
    levels: tuple = (0.01,)
    prior_means: tuple | None = None
    prior_kappa: float = 2000.0

    def __post_init__(self):
        cp = tuple(int(c) for c in self.change_points)
        object.__setattr__(self, "change_points", cp)
        object.__setattr__(self, "levels", tuple(float(v) for v in self.levels))
        if self.prior_means is None:
            object.__setattr__(self, "prior_means", self.levels)
        if any(b <= a for a, b in zip(cp, cp[1:])):
            raise ValueError("IFR change points must be strictly increasing")
        if len(self.levels) != len(cp) + 1:
            raise ValueError(f"need {len(cp) + 1} IFR levels, got {len(self.levels)}")
        if len(self.prior_means) != len(self.levels):
            raise ValueError("one prior mean per IFR level")
        if not all(0.0 <= v < 1.0 for v in self.levels):
            raise ValueError("IFR levels must lie in [0, 1)")

    def segment_index(self, T):
        return np.searchsorted(np.asarray(self.change_points, dtype=int), np.arange(T), side="right")

    def daily(self, T):
        return np.asarray(self.levels)[self.segment_index(T)]

    def with_levels(self, levels):
        return IfrSchedule(self.change_points, tuple(levels), self.prior_means, self.prior_kappa)


def convolve_delay(series, weights):
    """``out[t] = sum_{s>=1} series[t - s] * weights[s - 1]`` (strictly past)."""
    series = np.asarray(series, dtype=float)
    T = len(series)
    full = np.convolve(series, weights)
    out = np.zeros(T)
    out[1:] = full[:T - 1]
    return out


def convolve_delay_adjoint(out_bar, weights):
    """Transpose of :func:`convolve_delay`."""
    T = len(out_bar)
    shifted = np.zeros(T)
    shifted[:T - 1] = out_bar[1:]
    # correlate: series_bar[tau] = sum_s shifted[tau + s - 1] * w[s - 1]
    return np.correlate(shifted, weights, mode="full")[len(weights) - 1:len(weights) - 1 + T]


def expected_deaths(infections, kernel: DelayKernel, ifr: IfrSchedule):
    infections = np.asarray(infections, dtype=float)
    return ifr.daily(len(infections)) * convolve_delay(infections, kernel.weights)


def ifr_prior_means(age_ifr, reported_by_age):
    """Case-mix weighted IFR: sum_g ifr_g * c_g / C."""
    age_ifr = np.asarray(age_ifr, dtype=float)
    counts = np.asarray(reported_by_age, dtype=float)
    if age_ifr.shape != counts.shape:
        raise ValueError("age_ifr and reported_by_age must have the same length")
    if np.any(counts < 0):
        raise ValueError("reported counts must be non-negative")
    total = counts.sum()
    if total <= 0:
        raise ValueError("reported counts are all zero; weights undefined")
    return float(np.dot(age_ifr, counts) / total)


def negbin_log_pmf(observed, mean, phi):
    """Log PMF of the NegBin with the given mean and variance mean + mean^2 / phi."""
    D = np.asarray(observed, dtype=float)
    d = np.maximum(np.asarray(mean, dtype=float), MEAN_FLOOR)
    out = (special.gammaln(D + phi) - special.gammaln(phi) - special.gammaln(D + 1.0)
           - phi * np.log1p(d / phi) + special.xlogy(D, d) - D * np.log(phi + d))
    return out if out.ndim else float(out)


def negbin_loglik_grad(observed, mean, phi):
    """Summed log-likelihood with gradients wrt each mean and wrt phi.

    Means below the floor are clamped, so their gradient is zero.
    """
    D = np.asarray(observed, dtype=float)
    raw = np.asarray(mean, dtype=float)
    d = np.maximum(raw, MEAN_FLOOR)
    log_pd = np.log(phi + d)
    ll = (special.gammaln(D + phi) - special.gammaln(phi) - special.gammaln(D + 1.0)
          - phi * np.log1p(d / phi) + special.xlogy(D, d) - D * log_pd)
    d_bar = np.where(raw > MEAN_FLOOR, D / d - (D + phi) / (phi + d), 0.0)
    phi_bar = (special.digamma(D + phi) - special.digamma(phi)
               - np.log1p(d / phi) + 1.0 - (phi + D) / (phi + d))
    return float(ll.sum()), d_bar, float(phi_bar.sum())
