"""Readers for the surveillance feeds and alignment onto one daily grid."""
from __future__ import annotations

import datetime as dt
import io
from dataclasses import dataclass, field, replace
from pathlib import Path

import numpy as np
import pandas as pd

JHU_META_COLUMNS = ("Province/State", "Country/Region", "Lat", "Long")
JHU_DATE_FORMAT = "%m/%d/%y"
COUNT_KINDS = ("deaths", "confirmed_cases", "tests", "first_dose_vaccinations")
MOBILITY_KIND = "mobility_component"
GOOGLE_CATEGORIES = (
    "retail_and_recreation_percent_change_from_baseline",
    "grocery_and_pharmacy_percent_change_from_baseline",
    "parks_percent_change_from_baseline",
    "transit_stations_percent_change_from_baseline",
    "workplaces_percent_change_from_baseline",
    "residential_percent_change_from_baseline",
)
START_THRESHOLD = 10
START_LEAD_DAYS = 14


class DataError(Exception):
    """Base class for input-data problems (CLI exit code 3)."""


class UnknownCountryError(DataError, LookupError):
    pass


class ParseError(DataError, ValueError):
    pass


class StartUndefinedError(DataError):
    pass


class WindowError(DataError):
    pass


@dataclass(frozen=True)
class DailySeries:
    start_date: dt.date
    values: np.ndarray
    kind: str
    name: str = ""
    meta: dict = field(default_factory=dict, compare=False)

    def __post_init__(self):
        values = np.asarray(self.values, dtype=float)
        if values.ndim != 1 or len(values) < 1:
            raise ValueError("a daily series needs at least one value")
        object.__setattr__(self, "values", values)

    def __len__(self):
        return len(self.values)

    @property
    def end_date(self) -> dt.date:
        return self.start_date + dt.timedelta(days=len(self.values) - 1)

    @property
    def dates(self):
        return [self.start_date + dt.timedelta(days=i) for i in range(len(self.values))]

    def index_of(self, date) -> int:
        return (date - self.start_date).days

    def __eq__(self, other):
        if not isinstance(other, DailySeries):
            return NotImplemented
        return (self.start_date == other.start_date and self.kind == other.kind
                and self.name == other.name and np.array_equal(self.values, other.values))


@dataclass(frozen=True)
class CountryDataset:
    population: int
    deaths: DailySeries
    cases: DailySeries | None = None
    tests: DailySeries | None = None
    vaccinations: DailySeries | None = None
    mobility_components: tuple = ()
    analysis_window: tuple | None = None  # (start, end) grid indices, end exclusive
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "mobility_components", tuple(self.mobility_components))
        if self.population <= np.sum(self.deaths.values):
            raise DataError("population must exceed cumulative deaths")

    def series(self):
        out = [("deaths", self.deaths), ("cases", self.cases), ("tests", self.tests),
               ("vaccinations", self.vaccinations)]
        out += [(f"mobility[{i}]", s) for i, s in enumerate(self.mobility_components)]
        return [(k, s) for k, s in out if s is not None]

    @property
    def start_date(self) -> dt.date:
        return self.deaths.start_date

    @property
    def window_dates(self):
        a, b = self.analysis_window
        return self.start_date + dt.timedelta(days=a), self.start_date + dt.timedelta(days=b - 1)

    def window(self, series: DailySeries | None):
        """Values of an aligned series restricted to the analysis window."""
        if series is None:
            return None
        a, b = self.analysis_window
        return series.values[a:b]


def _as_buffer(raw):
    if isinstance(raw, (bytes, bytearray)):
        return io.BytesIO(raw)
    if isinstance(raw, (str, Path)):
        return raw
    return raw


def _daily_from_cumulative(cum):
    """Difference a cumulative series; negative revisions are clamped to zero."""
    cum = np.asarray(cum, dtype=float)
    daily = np.diff(cum, prepend=0.0)
    return np.clip(daily, 0.0, None)


def parse_jhu(raw, country, kind="deaths") -> DailySeries:
    """Read a wide JHU time-series CSV and return daily counts for ``country``.

    All rows whose Country/Region matches are summed (provinces, overseas
    territories); the number of rows used is recorded in ``meta``.
    """
    df = pd.read_csv(_as_buffer(raw), float_precision="round_trip")
    missing = [c for c in ("Country/Region",) if c not in df.columns]
    if missing:
        raise ParseError(f"JHU file lacks column {missing[0]!r}")
    date_cols = [c for c in df.columns if c not in JHU_META_COLUMNS]
    dates = []
    for col in date_cols:
        try:
            dates.append(dt.datetime.strptime(str(col), JHU_DATE_FORMAT).date())
        except ValueError:
            raise ParseError(f"malformed date column {col!r} in JHU file") from None
    if not dates:
        raise ParseError("JHU file has no date columns")
    if any((b - a).days != 1 for a, b in zip(dates, dates[1:])):
        raise ParseError("JHU date columns are not consecutive days")
    rows = df[df["Country/Region"] == country]
    if rows.empty:
        raise UnknownCountryError(f"country {country!r} not found in JHU file")
    cum = rows[date_cols].to_numpy(dtype=float).sum(axis=0)
    return DailySeries(dates[0], _daily_from_cumulative(cum), kind, name=country,
                       meta={"rows_summed": int(len(rows))})


def parse_jhu_deaths(raw, country) -> DailySeries:
    return parse_jhu(raw, country, "deaths")


def parse_long(raw, kind, fill=0.0) -> DailySeries:
    """Two-column (ISO date, value) file of daily values; gaps become ``fill``."""
    df = pd.read_csv(_as_buffer(raw), float_precision="round_trip")
    if df.shape[1] != 2:
        raise ParseError(f"expected two columns (date, value), found {df.shape[1]}")
    date_col, value_col = df.columns
    try:
        dates = pd.to_datetime(df[date_col], format="%Y-%m-%d")
    except (ValueError, TypeError) as exc:
        raise ParseError(f"malformed date in column {date_col!r}: {exc}") from None
    s = pd.Series(df[value_col].to_numpy(dtype=float), index=dates).groupby(level=0).sum()
    full = pd.date_range(s.index.min(), s.index.max(), freq="D")
    values = s.reindex(full).fillna(fill).to_numpy()
    if kind in COUNT_KINDS:
        values = np.clip(values, 0.0, None)
    return DailySeries(full[0].date(), values, kind)


def parse_google_mobility(raw, categories=GOOGLE_CATEGORIES):
    """Google community-mobility CSV: one series per category, gaps carried forward."""
    df = pd.read_csv(_as_buffer(raw), float_precision="round_trip")
    if "date" not in df.columns:
        raise ParseError("mobility file lacks a 'date' column")
    cats = [c for c in categories if c in df.columns]
    if not cats:
        cats = [c for c in df.columns if c != "date"]
    try:
        dates = pd.to_datetime(df["date"], format="%Y-%m-%d")
    except (ValueError, TypeError) as exc:
        raise ParseError(f"malformed date in column 'date': {exc}") from None
    frame = df[cats].astype(float).set_index(dates).groupby(level=0).mean()
    full = pd.date_range(frame.index.min(), frame.index.max(), freq="D")
    frame = frame.reindex(full).ffill().bfill()
    return [DailySeries(full[0].date(), frame[c].to_numpy(), MOBILITY_KIND, name=c) for c in cats]


def epidemic_start(deaths: DailySeries | np.ndarray) -> int:
    """First day with >= 10 cumulative deaths, minus 14 days, floored at 0."""
    values = deaths.values if isinstance(deaths, DailySeries) else np.asarray(deaths, dtype=float)
    hit = np.flatnonzero(np.cumsum(values) >= START_THRESHOLD)
    if hit.size == 0:
        raise StartUndefinedError(f"cumulative deaths never reach {START_THRESHOLD}")
    return max(int(hit[0]) - START_LEAD_DAYS, 0)


def _reindex(series: DailySeries, start, n):
    offset = (series.start_date - start).days
    out = np.empty(n)
    lo, hi = offset, offset + len(series)
    if series.kind == MOBILITY_KIND:
        out[:max(lo, 0)] = series.values[0]
        out[max(hi, 0):] = series.values[-1]
    else:
        out[:] = 0.0
    a, b = max(lo, 0), min(hi, n)
    out[a:b] = series.values[a - lo:b - lo]
    return replace(series, start_date=start, values=out)


def align(dataset: CountryDataset, start_date=None, end_date=None) -> CountryDataset:
    """Put every feed on the union grid and fix the analysis window.

    Counts are zero-padded; mobility is padded with its first/last value.
    Without overrides the window runs from :func:`epidemic_start` to the last
    date covered by both the deaths and cases feeds.  A dataset that already
    carries a window keeps it (by calendar date).
    """
    members = dataset.series()
    grid_start = min(s.start_date for _, s in members)
    grid_end = max(s.end_date for _, s in members)
    n = (grid_end - grid_start).days + 1
    deaths = _reindex(dataset.deaths, grid_start, n)

    if dataset.analysis_window is not None:
        old_start, old_end = dataset.window_dates
        start_date = start_date or old_start
        end_date = end_date or old_end
    if end_date is None:
        end_date = dataset.deaths.end_date
        if dataset.cases is not None:
            end_date = min(end_date, dataset.cases.end_date)
    a = (start_date - grid_start).days if start_date is not None else epidemic_start(deaths)
    b = (end_date - grid_start).days + 1
    a, b = max(a, 0), min(b, n)
    if b <= a:
        raise WindowError(f"requested window [{start_date}, {end_date}] has no overlap with the data "
                          f"({grid_start} to {grid_end})")

    def re(s):
        return None if s is None else _reindex(s, grid_start, n)

    return CountryDataset(
        population=dataset.population,
        deaths=deaths,
        cases=re(dataset.cases),
        tests=re(dataset.tests),
        vaccinations=re(dataset.vaccinations),
        mobility_components=tuple(re(s) for s in dataset.mobility_components),
        analysis_window=(a, b),
        name=dataset.name,
    )


# ---------------------------------------------------------------------------
# writers (used by the synthetic generator; inverse of the readers above)


def write_jhu(path, series: DailySeries, country):
    cum = np.cumsum(series.values)
    cols = {k: [v] for k, v in zip(JHU_META_COLUMNS, ["", country, 0.0, 0.0])}
    for d, v in zip(series.dates, cum):
        cols[d.strftime(JHU_DATE_FORMAT).lstrip("0").replace("/0", "/")] = [_fmt(v)]
    pd.DataFrame(cols).to_csv(path, index=False)


def write_long(path, series: DailySeries, value_name="value"):
    df = pd.DataFrame({"date": [d.isoformat() for d in series.dates],
                       value_name: [_fmt(v) for v in series.values]})
    df.to_csv(path, index=False)


def write_mobility(path, components):
    first = components[0]
    df = pd.DataFrame({"date": [d.isoformat() for d in first.dates]})
    for s in components:
        df[s.name] = s.values
    df.to_csv(path, index=False, float_format="%.17g")


def _fmt(v):
    return int(v) if float(v).is_integer() else repr(float(v))
