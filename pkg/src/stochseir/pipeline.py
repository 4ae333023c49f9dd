"""Glue between a run configuration, the data feeds and the posterior model."""
from __future__ import annotations

import datetime as dt
from dataclasses import replace

import numpy as np

from . import epimodel as em
from . import ingest
from .config import RunConfig
from .inference.model import ModelData, Priors
from .inference.sampling import SamplerSettings

GAMMA2_FIRST_MEAN = 0.4
GAMMA2_SECOND_MEAN = 0.5


def _read_feed(cfg: RunConfig, key, kind):
    feed = cfg.country.feeds.get(key)
    if feed is None:
        return None
    path = cfg.feed_path(key)
    try:
        if feed.format == "jhu":
            return ingest.parse_jhu(path, feed.country or cfg.country.name, kind)
        if feed.format == "long":
            return ingest.parse_long(path, kind)
        return ingest.parse_google_mobility(path)
    except FileNotFoundError:
        raise ingest.DataError(f"feed {key}: file not found: {path}") from None


def load_dataset(cfg: RunConfig) -> ingest.CountryDataset:
    """Read every configured feed and align them onto one grid."""
    deaths = _read_feed(cfg, "deaths", "deaths")
    mobility = _read_feed(cfg, "mobility", ingest.MOBILITY_KIND)
    if mobility is not None and not isinstance(mobility, list):
        mobility = [mobility]
    ds = ingest.CountryDataset(
        population=cfg.country.population,
        deaths=deaths,
        cases=_read_feed(cfg, "cases", "confirmed_cases"),
        tests=_read_feed(cfg, "tests", "tests"),
        vaccinations=_read_feed(cfg, "vaccinations", "first_dose_vaccinations"),
        mobility_components=tuple(mobility or ()),
        name=cfg.country.name,
    )
    return ingest.align(ds, cfg.country.window.start, cfg.country.window.end)


def _day(ds: ingest.CountryDataset, date: dt.date) -> int:
    """Offset of ``date`` from the first day of the analysis window."""
    return (date - ds.window_dates[0]).days


def window_interior(ds, dates, T):
    """Window offsets of the dates that fall strictly inside ``(0, T)``."""
    days = [_day(ds, d) for d in dates]
    return [k for k in days if 0 < k < T]


def ifr_schedule(ds, cfg: RunConfig, T):
    """Change points and prior means restricted to the window.

    Levels whose period ends before the window or starts after it are dropped.
    """
    block = cfg.model.ifr
    means = [lev.resolve() for lev in block.levels]
    days = [_day(ds, d) for d in block.change_points]
    first = sum(1 for k in days if k <= 0)
    last = len(means) - sum(1 for k in days if k >= T)
    cps = [k for k in days if 0 < k < T]
    return tuple(cps), tuple(means[first:last])


def priors_from_config(cfg: RunConfig, ds=None, T=None) -> tuple[Priors, int | None]:
    """Prior suite plus the window offset of the gamma2 regime switch (or None)."""
    m = cfg.model
    switch = None
    means = (GAMMA2_FIRST_MEAN,)
    if m.gamma2_switch is not None and ds is not None:
        k = _day(ds, m.gamma2_switch)
        if k <= 0:
            means = (GAMMA2_SECOND_MEAN,)
        elif k < T:
            means, switch = (GAMMA2_FIRST_MEAN, GAMMA2_SECOND_MEAN), k
    prior = Priors(gamma2_means=means, ifr_kappa=m.ifr.kappa, seed_median=m.seed_median,
                   seed_log_sd=m.seed_log_sd, r0_guess=m.r0_guess, eta0_scale=m.eta0_scale)
    return prior, switch


def build_model_data(ds: ingest.CountryDataset, cfg: RunConfig) -> tuple[ModelData, Priors]:
    deaths = ds.window(ds.deaths)
    T = len(deaths)
    if T < 2:
        raise ingest.WindowError("the analysis window must span at least two days")
    m = cfg.model
    kernel = em.discretize_gamma(*m.infection_to_death)
    vax = np.zeros(T)
    if ds.vaccinations is not None:
        a, b = ds.analysis_window
        lagged = em.lagged_vaccinations(ds.vaccinations.values, m.vaccination.efficacy,
                                        m.vaccination.lag_days)
        vax = lagged[a:b]
    cps, means = ifr_schedule(ds, cfg, T)
    prior, switch = priors_from_config(cfg, ds, T)
    data = ModelData(
        deaths=deaths,
        population=float(ds.population),
        kernel=kernel,
        vax_inflow=vax,
        wave_boundaries=tuple(window_interior(ds, m.wave_boundaries, T - 1)),
        ifr_change_points=cps,
        ifr_prior_means=means,
        gamma2_switch=switch,
        substeps=m.substeps,
    )
    return data, prior


def sampler_settings(cfg: RunConfig, **overrides) -> SamplerSettings:
    s = cfg.sampler
    base = SamplerSettings(chains=s.chains, warmup=s.warmup, samples=s.samples,
                           target_accept=s.target_accept, max_depth=s.max_depth,
                           warm_start=s.warm_start, warm_start_chains=s.warm_start_chains,
                           warm_start_warmup=s.warm_start_warmup,
                           warm_start_samples=s.warm_start_samples)
    return replace(base, **{k: v for k, v in overrides.items() if v is not None})
