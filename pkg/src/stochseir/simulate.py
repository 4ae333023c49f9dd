"""Synthetic datasets drawn from the full generative model, with ground truth.

A scenario fixes the population, horizon and true parameters (or asks for
them to be drawn from the priors).  :func:`generate` produces the death,
case, test, vaccination and mobility feeds in the same file formats the
readers accept, together with a ready-to-run configuration.
"""
from __future__ import annotations

import dataclasses
import datetime as dt
import json
from dataclasses import dataclass, field
from pathlib import Path

import numpy as np
import pandas as pd
import yaml
from scipy import special

from . import epimodel as em
from . import ingest
from .config import ConfigError
from .diffusion import WaveSchedule, simulate_path
from .observation import MEAN_FLOOR, IfrSchedule, convolve_delay

COUNTRY = "Synthetia"


@dataclass
class Scenario:
    """True parameters of a synthetic epidemic.

    ``R_profile`` gives the daily reproduction number 2 beta / gamma2 directly;
    when it is None the log transmission rate follows the random walk from
    ``eta0`` with per-wave volatilities ``sigmas``.
    """

    name: str = "custom"
    population: int = 1_000_000
    T: int = 120
    start_date: dt.date = dt.date(2020, 3, 1)
    gamma1: float = 1.0
    gamma2: float = 0.4
    R_profile: list | None = None
    R0: float = 2.5
    sigmas: list = field(default_factory=lambda: [0.0])
    wave_boundaries: list = field(default_factory=list)  # day offsets
    ifr_levels: list = field(default_factory=lambda: [0.01])
    ifr_change_points: list = field(default_factory=list)
    phi: float = 50.0
    seed_size: float = 20.0
    first_doses: list | None = None
    rho: float = 0.5
    vaccine_lag: int = 45
    reporting_ratio: list | float = 0.3
    report_lag: int = 6
    substeps: int = 4
    sample_priors: bool = False

    def validate(self):
        if self.population <= 0 or self.T < 2:
            raise ConfigError("scenario needs population > 0 and T >= 2")
        if not 0 < self.seed_size < self.population:
            raise ConfigError("scenario seed_size must lie in (0, population)")
        if len(self.sigmas) != len(self.wave_boundaries) + 1:
            raise ConfigError("scenario needs one sigma per wave")
        if len(self.ifr_levels) != len(self.ifr_change_points) + 1:
            raise ConfigError("scenario needs one IFR level more than change points")
        if self.R_profile is not None and len(self.R_profile) != self.T:
            raise ConfigError("scenario R_profile must have T entries")
        if self.first_doses is not None and len(self.first_doses) != self.T:
            raise ConfigError("scenario first_doses must have T entries")
        if self.phi <= 0:
            raise ConfigError("scenario phi must be positive")
        return self


def _smooth_step(t, centre, width):
    return special.expit((t - centre) / width)


def preset(name) -> Scenario:
    """Named scenarios: ``flat``, ``two-wave`` and ``vaccinated``."""
    t = np.arange(120, dtype=float)
    if name == "flat":
        # beta = 0.5 with gamma2 = 0.4
        return Scenario(name="flat", R_profile=[2.5] * 120)
    if name == "two-wave":
        R = 2.5 - 1.8 * _smooth_step(t, 42, 3) + 1.0 * _smooth_step(t, 75, 3)
        return Scenario(name="two-wave", R_profile=R.tolist(), wave_boundaries=[60],
                        sigmas=[0.0, 0.0], ifr_levels=[0.01])
    if name == "vaccinated":
        doses = np.where(t >= 10, np.minimum(1000.0 * (t - 9), 8000.0), 0.0)
        R = 2.2 - 0.6 * _smooth_step(t, 40, 4)
        return Scenario(name="vaccinated", R_profile=R.tolist(), first_doses=doses.tolist())
    raise ConfigError(f"unknown scenario {name!r}; presets are flat, two-wave, vaccinated")


PRESETS = ("flat", "two-wave", "vaccinated")


def load_scenario(name_or_path) -> Scenario:
    if name_or_path in PRESETS:
        return preset(name_or_path)
    path = Path(name_or_path)
    if not path.exists():
        raise ConfigError(f"unknown scenario {name_or_path!r}; presets are {', '.join(PRESETS)}")
    data = yaml.safe_load(path.read_text()) or {}
    known = {f.name for f in dataclasses.fields(Scenario)}
    unknown = sorted(set(data) - known)
    if unknown:
        raise ConfigError(f"unknown scenario key(s): {', '.join(unknown)}")
    if "start_date" in data and not isinstance(data["start_date"], dt.date):
        data["start_date"] = dt.date.fromisoformat(str(data["start_date"]))
    return Scenario(**data)


@dataclass
class GroundTruth:
    params: dict
    beta: np.ndarray
    R_t: np.ndarray
    infections: np.ndarray
    expected_deaths: np.ndarray
    deaths: np.ndarray
    states: np.ndarray  # (T + 1, 6) persons at day boundaries
    reporting_ratio: np.ndarray
    vax_inflow: np.ndarray

    def frame(self, start_date):
        dates = pd.date_range(start_date, periods=len(self.beta), freq="D").strftime("%Y-%m-%d")
        return pd.DataFrame({
            "date": dates, "beta": self.beta, "R_t": self.R_t, "infections": self.infections,
            "expected_deaths": self.expected_deaths, "deaths": self.deaths,
            "reporting_ratio": self.reporting_ratio, "vax_inflow": self.vax_inflow,
        })


@dataclass
class SyntheticData:
    dataset: ingest.CountryDataset
    truth: GroundTruth
    scenario: Scenario


def _draw_from_priors(sc: Scenario, rng):
    """Replace the rate, volatility, dispersion and IFR values by prior draws."""
    from .inference.model import Priors, gamma_shape_rate

    pr = Priors()
    a, b = gamma_shape_rate(pr.gamma1_mean, pr.rate_sd)
    g1 = rng.gamma(a, 1.0 / b)
    a, b = gamma_shape_rate(pr.gamma2_means[0], pr.rate_sd)
    g2 = rng.gamma(a, 1.0 / b)
    # half-Cauchy draws are truncated to keep synthetic paths finite
    sig = np.minimum(np.abs(pr.sigma_scale * rng.standard_cauchy(len(sc.sigmas))), 0.1)
    inv_phi = min(abs(pr.inv_phi_scale * rng.standard_cauchy()), 1.0)
    m = np.asarray(sc.ifr_levels)
    ifr = rng.beta(m * pr.ifr_kappa, (1 - m) * pr.ifr_kappa)
    return dataclasses.replace(sc, gamma1=g1, gamma2=g2, sigmas=sig.tolist(), phi=1.0 / inv_phi,
                               ifr_levels=ifr.tolist(), sample_priors=False)


def negbin_draw(mean, phi, rng):
    """NegBin counts with the given mean and variance mean + mean^2 / phi."""
    mean = np.maximum(np.asarray(mean, dtype=float), MEAN_FLOOR)
    return rng.negative_binomial(phi, phi / (phi + mean)).astype(float)


def generate(scenario: Scenario | str, seed) -> SyntheticData:
    """Draw one synthetic dataset; identical ``seed`` gives identical output."""
    sc = load_scenario(scenario) if isinstance(scenario, str) else scenario
    sc.validate()
    rng = np.random.default_rng(seed)
    if sc.sample_priors:
        sc = _draw_from_priors(sc, rng)
    T, N = sc.T, float(sc.population)

    if sc.R_profile is not None:
        beta = np.asarray(sc.R_profile, dtype=float) * sc.gamma2 / 2.0
    else:
        sched = WaveSchedule(tuple(sc.wave_boundaries), tuple(sc.sigmas))
        eta0 = np.log(sc.R0 * sc.gamma2 / 2.0)
        beta = simulate_path(eta0, sched, T, rng).beta
    doses = np.zeros(T) if sc.first_doses is None else np.asarray(sc.first_doses, dtype=float)
    vax = em.lagged_vaccinations(doses, sc.rho, sc.vaccine_lag, T)

    y0 = em.initial_state(N, sc.seed_size).as_array()
    traj = em.integrate(y0, beta, sc.gamma1, sc.gamma2, vax, N, substeps=sc.substeps)
    c = traj.incidence
    kernel = em.discretize_gamma(6.29, 0.26)
    ifr = IfrSchedule(tuple(sc.ifr_change_points), tuple(sc.ifr_levels)).daily(T)
    d = ifr * convolve_delay(c, kernel.weights)
    deaths = negbin_draw(d, sc.phi, rng)

    ratio = np.broadcast_to(np.asarray(sc.reporting_ratio, dtype=float), (T,)).copy()
    lagged_c = np.concatenate([np.zeros(sc.report_lag), c[:T - sc.report_lag]])
    cases = rng.binomial(np.round(lagged_c).astype(np.int64), np.clip(ratio, 0.0, 1.0)).astype(float)

    # tests scale with reported cases; mobility tracks the transmission rate
    tests = rng.poisson(20.0 * cases + 500.0).astype(float)
    signal = (np.log(beta) - np.log(beta).mean()) / max(np.log(beta).std(), 1e-3)
    loadings = np.array([30.0, 10.0, 25.0, 30.0, 25.0, -10.0])
    mob = signal[:, None] * loadings + rng.normal(0.0, 5.0, (T, loadings.size))

    start = sc.start_date
    mk = lambda v, kind, name="": ingest.DailySeries(start, v, kind, name=name)
    dataset = ingest.CountryDataset(
        population=sc.population,
        deaths=mk(deaths, "deaths", COUNTRY),
        cases=mk(cases, "confirmed_cases", COUNTRY),
        tests=mk(tests, "tests"),
        vaccinations=mk(doses, "first_dose_vaccinations"),
        mobility_components=tuple(mk(np.round(mob[:, j], 6), ingest.MOBILITY_KIND, cat)
                                  for j, cat in enumerate(ingest.GOOGLE_CATEGORIES)),
        analysis_window=(0, T),
        name=COUNTRY,
    )
    params = {
        "gamma1": sc.gamma1, "gamma2": sc.gamma2, "sigmas": list(map(float, sc.sigmas)),
        "phi": sc.phi, "ifr_levels": list(map(float, sc.ifr_levels)), "seed_size": sc.seed_size,
        "population": sc.population, "rho": sc.rho, "vaccine_lag": sc.vaccine_lag,
        "report_lag": sc.report_lag,
    }
    truth = GroundTruth(params=params, beta=beta, R_t=2.0 * beta / sc.gamma2, infections=c,
                        expected_deaths=d, deaths=deaths, states=traj.states,
                        reporting_ratio=ratio, vax_inflow=vax)
    return SyntheticData(dataset=dataset, truth=truth, scenario=sc)


def run_config(syn: SyntheticData, feeds: dict) -> dict:
    """Configuration document that fits the synthetic data over its full span."""
    sc = syn.scenario
    day = lambda k: (sc.start_date + dt.timedelta(days=int(k))).isoformat()
    return {
        "country": {
            "name": COUNTRY,
            "population": int(sc.population),
            "feeds": feeds,
            "window": {"start": sc.start_date.isoformat(), "end": day(sc.T - 1)},
        },
        "model": {
            "substeps": sc.substeps,
            "wave_boundaries": [day(k) for k in sc.wave_boundaries],
            "ifr": {"change_points": [day(k) for k in sc.ifr_change_points],
                    "levels": [{"prior_mean": float(v)} for v in sc.ifr_levels]},
            "vaccination": {"efficacy": sc.rho, "lag_days": sc.vaccine_lag},
        },
        "postprocess": {"reporting_lag": sc.report_lag},
        "regression": {"cutoff": None},
    }


def write(syn: SyntheticData, out_dir) -> dict:
    """Write the feeds, ``config.yaml`` and the ground truth; returns the paths."""
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    ds = syn.dataset
    files = {
        "deaths": ("deaths_jhu.csv", "jhu"),
        "cases": ("cases_jhu.csv", "jhu"),
        "tests": ("tests.csv", "long"),
        "vaccinations": ("vaccinations.csv", "long"),
        "mobility": ("mobility.csv", "google"),
    }
    ingest.write_jhu(out / files["deaths"][0], ds.deaths, COUNTRY)
    ingest.write_jhu(out / files["cases"][0], ds.cases, COUNTRY)
    ingest.write_long(out / files["tests"][0], ds.tests, "tests")
    ingest.write_long(out / files["vaccinations"][0], ds.vaccinations, "first_doses")
    ingest.write_mobility(out / files["mobility"][0], ds.mobility_components)
    feeds = {k: {"path": f, "format": fmt} for k, (f, fmt) in files.items()}
    cfg = run_config(syn, feeds)
    (out / "config.yaml").write_text(yaml.safe_dump(cfg, sort_keys=False))
    syn.truth.frame(syn.scenario.start_date).to_csv(out / "truth.csv", index=False,
                                                    float_format="%.17g")
    meta = {"scenario": syn.scenario.name, **syn.truth.params}
    (out / "truth.json").write_text(json.dumps(meta, indent=2, sort_keys=True) + "\n")
    return {k: out / f for k, (f, _) in files.items()} | {"config": out / "config.yaml",
                                                          "truth": out / "truth.csv"}
