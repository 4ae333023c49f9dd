"""Run configuration: a YAML document mapped onto nested dataclasses.

Every block is validated in full before any computation; unknown keys are
errors, not warnings.
"""
from __future__ import annotations

import dataclasses
import datetime as dt
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import yaml


class ConfigError(Exception):
    """Invalid run configuration (CLI exit code 2)."""


@dataclass
class Feed:
    path: str
    format: str = "long"
    country: str | None = None  # JHU row name when it differs from country.name

    FORMATS = ("jhu", "long", "google")

    def validate(self, where):
        if self.format not in self.FORMATS:
            raise ConfigError(f"{where}.format must be one of {self.FORMATS}, got {self.format!r}")


@dataclass
class Window:
    start: dt.date | None = None
    end: dt.date | None = None


@dataclass
class CountryBlock:
    name: str
    population: int
    feeds: dict = field(default_factory=dict)
    window: Window = field(default_factory=Window)

    FEEDS = ("deaths", "cases", "tests", "vaccinations", "mobility")

    def validate(self):
        if not isinstance(self.population, int) or self.population <= 0:
            raise ConfigError("country.population must be a positive integer")
        if "deaths" not in self.feeds:
            raise ConfigError("country.feeds.deaths is required")
        for key, feed in self.feeds.items():
            if key not in self.FEEDS:
                raise ConfigError(f"unknown feed country.feeds.{key}")
            feed.validate(f"country.feeds.{key}")
        w = self.window
        if w.start and w.end and w.end < w.start:
            raise ConfigError("country.window.end precedes country.window.start")


@dataclass
class IfrLevel:
    prior_mean: float | None = None
    age_ifr: list | None = None
    reported_by_age: list | None = None

    def resolve(self) -> float:
        from .observation import ifr_prior_means

        if self.prior_mean is not None:
            return float(self.prior_mean)
        return ifr_prior_means(self.age_ifr, self.reported_by_age)


@dataclass
class IfrBlock:
    change_points: list = field(default_factory=list)  # dates
    levels: list = field(default_factory=lambda: [IfrLevel(prior_mean=0.01)])
    kappa: float = 2000.0

    def validate(self):
        if len(self.levels) != len(self.change_points) + 1:
            raise ConfigError("model.ifr needs exactly one level more than change points")
        for i, lev in enumerate(self.levels):
            if lev.prior_mean is None and (lev.age_ifr is None or lev.reported_by_age is None):
                raise ConfigError(f"model.ifr.levels[{i}] needs prior_mean or age_ifr + reported_by_age")
            try:
                m = lev.resolve()
            except ValueError as exc:
                raise ConfigError(f"model.ifr.levels[{i}]: {exc}") from None
            if not 0 < m < 1:
                raise ConfigError(f"model.ifr.levels[{i}] prior mean must lie in (0, 1)")
        if self.kappa <= 0:
            raise ConfigError("model.ifr.kappa must be positive")
        if sorted(self.change_points) != list(self.change_points):
            raise ConfigError("model.ifr.change_points must be increasing")


@dataclass
class VaccinationBlock:
    efficacy: float = 0.5
    lag_days: int = 45


@dataclass
class ModelBlock:
    substeps: int = 4
    wave_boundaries: list = field(default_factory=list)  # dates
    ifr: IfrBlock = field(default_factory=IfrBlock)
    gamma2_switch: dt.date | None = None
    vaccination: VaccinationBlock = field(default_factory=VaccinationBlock)
    r0_guess: float = 3.0
    eta0_scale: float = 0.5
    seed_median: float = 20.0
    seed_log_sd: float = 1.0
    infection_to_death: list = field(default_factory=lambda: [6.29, 0.26])

    def validate(self):
        if self.substeps < 1:
            raise ConfigError("model.substeps must be >= 1")
        self.ifr.validate()
        if sorted(self.wave_boundaries) != list(self.wave_boundaries):
            raise ConfigError("model.wave_boundaries must be increasing")
        if not 0 <= self.vaccination.efficacy <= 1:
            raise ConfigError("model.vaccination.efficacy must lie in [0, 1]")
        if self.vaccination.lag_days < 0:
            raise ConfigError("model.vaccination.lag_days must be >= 0")
        if len(self.infection_to_death) != 2 or min(self.infection_to_death) <= 0:
            raise ConfigError("model.infection_to_death must be [shape, rate] > 0")


@dataclass
class SamplerBlock:
    chains: int = 4
    warmup: int = 500
    samples: int = 500
    seed: int = 1
    target_accept: float = 0.8
    max_depth: int = 10
    warm_start: bool = True
    warm_start_chains: int = 2
    warm_start_warmup: int = 200
    warm_start_samples: int = 200

    def validate(self):
        for name in ("chains", "samples", "max_depth"):
            if getattr(self, name) < 1:
                raise ConfigError(f"sampler.{name} must be >= 1")
        if self.warmup < 0:
            raise ConfigError("sampler.warmup must be >= 0")
        if not 0 < self.target_accept < 1:
            raise ConfigError("sampler.target_accept must lie in (0, 1)")


@dataclass
class PostprocessBlock:
    reporting_lag: int = 6
    bands: list = field(default_factory=lambda: [[0.025, 0.975], [0.25, 0.75]])


@dataclass
class RegressionBlock:
    cutoff: dt.date | None = dt.date(2021, 3, 31)
    test_lags: list = field(default_factory=lambda: [3, 4, 5, 6])
    serial_interval: list = field(default_factory=lambda: [2.6, 0.4])
    chains: int = 4
    warmup: int = 500
    samples: int = 500
    seed: int = 1


@dataclass
class RunConfig:
    country: CountryBlock
    model: ModelBlock = field(default_factory=ModelBlock)
    sampler: SamplerBlock = field(default_factory=SamplerBlock)
    postprocess: PostprocessBlock = field(default_factory=PostprocessBlock)
    regression: RegressionBlock = field(default_factory=RegressionBlock)
    base_dir: Path = field(default=Path("."), metadata={"internal": True})

    def validate(self):
        self.country.validate()
        self.model.validate()
        self.sampler.validate()
        if self.postprocess.reporting_lag < 0:
            raise ConfigError("postprocess.reporting_lag must be >= 0")
        return self

    def feed_path(self, key) -> Path | None:
        feed = self.country.feeds.get(key)
        if feed is None:
            return None
        p = Path(feed.path)
        return p if p.is_absolute() else self.base_dir / p

    def to_dict(self):
        d = _to_plain(self)
        d.pop("base_dir", None)
        for key, feed in d["country"]["feeds"].items():
            feed["path"] = str(self.feed_path(key).resolve())
        return d


# ---------------------------------------------------------------------------


def _build(cls, data, where):
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{where or 'config'} must be a mapping")
    fields = {f.name: f for f in dataclasses.fields(cls) if not f.metadata.get("internal")}
    unknown = sorted(set(data) - set(fields))
    if unknown:
        raise ConfigError(f"unknown key(s) in {where or 'config'}: {', '.join(unknown)}")
    kwargs = {}
    for name, value in data.items():
        kwargs[name] = _coerce(cls, name, value, f"{where}.{name}" if where else name)
    try:
        return cls(**kwargs)
    except TypeError as exc:
        raise ConfigError(f"{where or 'config'}: {exc}") from None


def _coerce(cls, name, value, where):
    sub = {
        (RunConfig, "country"): CountryBlock,
        (RunConfig, "model"): ModelBlock,
        (RunConfig, "sampler"): SamplerBlock,
        (RunConfig, "postprocess"): PostprocessBlock,
        (RunConfig, "regression"): RegressionBlock,
        (CountryBlock, "window"): Window,
        (ModelBlock, "ifr"): IfrBlock,
        (ModelBlock, "vaccination"): VaccinationBlock,
    }.get((cls, name))
    if sub is not None:
        return _build(sub, value, where)
    if cls is CountryBlock and name == "feeds":
        if not isinstance(value, dict):
            raise ConfigError(f"{where} must be a mapping")
        return {k: _build(Feed, v if isinstance(v, dict) else {"path": v}, f"{where}.{k}")
                for k, v in value.items()}
    if cls is IfrBlock and name == "levels":
        return [_build(IfrLevel, v if isinstance(v, dict) else {"prior_mean": v}, f"{where}[{i}]")
                for i, v in enumerate(value)]
    if cls is IfrBlock and name == "change_points" or cls is ModelBlock and name == "wave_boundaries":
        return [_date(v, f"{where}[{i}]") for i, v in enumerate(value or [])]
    if name in ("start", "end", "gamma2_switch", "cutoff"):
        return None if value is None else _date(value, where)
    return value


def _date(value, where):
    if isinstance(value, dt.datetime):
        return value.date()
    if isinstance(value, dt.date):
        return value
    try:
        return dt.date.fromisoformat(str(value))
    except ValueError:
        raise ConfigError(f"{where}: expected an ISO date, got {value!r}") from None


def _to_plain(obj):
    if dataclasses.is_dataclass(obj):
        return {f.name: _to_plain(getattr(obj, f.name)) for f in dataclasses.fields(obj)}
    if isinstance(obj, dict):
        return {k: _to_plain(v) for k, v in obj.items()}
    if isinstance(obj, (list, tuple)):
        return [_to_plain(v) for v in obj]
    if isinstance(obj, dt.date):
        return obj.isoformat()
    if isinstance(obj, Path):
        return str(obj)
    return obj


def from_dict(data: dict[str, Any], base_dir=".") -> RunConfig:
    cfg = _build(RunConfig, data, "")
    if not isinstance(cfg.country, CountryBlock):
        raise ConfigError("country block is required")
    cfg.base_dir = Path(base_dir)
    return cfg.validate()


def load_config(path) -> RunConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text())
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from None
    except yaml.YAMLError as exc:
        raise ConfigError(f"malformed YAML in {path}: {exc}") from None
    if "country" not in (data or {}):
        raise ConfigError("config must contain a country block")
    return from_dict(data, base_dir=path.parent)


def dump_config(cfg: RunConfig, path):
    Path(path).write_text(yaml.safe_dump(cfg.to_dict(), sort_keys=False))
