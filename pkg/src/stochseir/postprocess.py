"""Posterior summaries: R_t, cumulative infections and the reporting ratio."""
from __future__ import annotations

import logging
from dataclasses import dataclass, field

import numpy as np
import pandas as pd

from .ingest import WindowError
from .spline import smooth_ratio

log = logging.getLogger(__name__)

DEFAULT_BANDS = ((0.025, 0.975), (0.25, 0.75))


def _label(p):
    return f"q{100 * p:g}"


@dataclass
class QuantileBand:
    """Pointwise median and equal-tailed bands of a (draws, T) array."""

    median: np.ndarray
    bands: dict = field(default_factory=dict)  # (p_lo, p_hi) -> (lower, upper)

    def __len__(self):
        return len(self.median)

    def columns(self):
        cols = {"median": self.median}
        for (p_lo, p_hi), (lo, hi) in self.bands.items():
            cols[_label(p_lo)] = lo
            cols[_label(p_hi)] = hi
        return cols

    def to_frame(self, dates=None):
        df = pd.DataFrame(self.columns())
        df.insert(0, "date" if dates is not None else "day",
                  dates if dates is not None else np.arange(len(self)))
        return df

    @classmethod
    def from_frame(cls, df):
        """Inverse of :meth:`to_frame` for bands stored as ``q<lo>``/``q<hi>`` pairs."""
        qs = sorted((float(c[1:]) / 100.0 for c in df.columns if c.startswith("q")))
        bands = {}
        while len(qs) >= 2:
            lo, hi = qs.pop(0), qs.pop(-1)
            bands[(lo, hi)] = (df[_label(lo)].to_numpy(), df[_label(hi)].to_numpy())
        return cls(df["median"].to_numpy(), bands)


def quantile_band(draws, bands=DEFAULT_BANDS) -> QuantileBand:
    draws = np.asarray(draws, dtype=float)
    if draws.ndim == 1:
        draws = draws[:, None]
    probs = [0.5] + [p for pair in bands for p in pair]
    q = np.quantile(draws, probs, axis=0)
    out = QuantileBand(median=q[0])
    for i, pair in enumerate(bands):
        out.bands[tuple(pair)] = (q[1 + 2 * i], q[2 + 2 * i])
    return out


def reproduction_number(beta_draws, gamma2_draws, bands=DEFAULT_BANDS):
    """Per-draw R_t = 2 beta_t / gamma2 summarised pointwise.

    ``gamma2_draws`` is (draws,) for a single infectious-period regime or
    (draws, T) when the rate switches during the window.
    """
    beta = np.asarray(beta_draws, dtype=float)
    g2 = np.asarray(gamma2_draws, dtype=float)
    if g2.ndim == 1:
        g2 = g2[:, None]
    return quantile_band(2.0 * beta / g2, bands)


@dataclass
class CumulativeInfections:
    cumulative: QuantileBand
    attack_rate: QuantileBand


def cumulative_infections(c_draws, population, bands=DEFAULT_BANDS) -> CumulativeInfections:
    cum = np.cumsum(np.atleast_2d(np.asarray(c_draws, dtype=float)), axis=1)
    return CumulativeInfections(quantile_band(cum, bands), quantile_band(cum / population, bands))


@dataclass
class ReportingRatioSeries:
    raw: np.ndarray  # NaN where undefined or c_{t-L} = 0
    smoothed: np.ndarray | None
    lag: int
    n_clamped: int = 0
    n_missing: int = 0
    stiffness: float | None = None


def reporting_ratio(c_median, reported, lag=6, smooth=True) -> ReportingRatioSeries:
    """r_t = reported_t / c_{t - L} on the shared daily grid.

    Ratios above 1 are clamped to 1 and counted; days with c_{t - L} = 0 are
    missing.  The first ``lag`` days are undefined.
    """
    c = np.asarray(c_median, dtype=float)
    rep = np.asarray(getattr(reported, "values", reported), dtype=float)
    n = min(len(c), len(rep))
    if lag < 0 or n <= lag:
        raise WindowError(f"no overlap between the series after a {lag}-day shift")
    raw = np.full(n, np.nan)
    denom = c[:n - lag]
    with np.errstate(divide="ignore", invalid="ignore"):
        r = np.where(denom > 0, rep[lag:n] / denom, np.nan)
    over = np.isfinite(r) & (r > 1.0)
    n_clamped = int(over.sum())
    if n_clamped:
        log.info("reporting ratio: %d day(s) above 1 clamped", n_clamped)
    raw[lag:] = np.where(over, 1.0, r)
    out = ReportingRatioSeries(raw=raw, smoothed=None, lag=lag, n_clamped=n_clamped,
                               n_missing=int(np.sum(~np.isfinite(raw[lag:]))))
    if smooth:
        out.smoothed, fit = smooth_ratio(raw)
        out.stiffness = fit.lam
    return out
