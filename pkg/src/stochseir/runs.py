"""Run-directory artifacts shared by the CLI subcommands.

One directory holds a whole analysis:

    config.yaml            resolved configuration echo (feed paths absolute)
    draws.csv              chain, iteration and one column per parameter
    derived.npz            per-draw beta, infections, expected deaths, R_t
    diagnostics.txt        parameter summary table
    run.json               seed, wall time, divergences, window, warnings
    rt.csv, beta.csv, infections.csv, reporting_ratio.csv      (postprocess)
    regression_coefficients.csv, regression_correlations.csv  (regress)
    report/                SVG figures plus the diagnostics table  (report)
"""
from __future__ import annotations

import datetime as dt
import json
import logging
import shutil
import time
from pathlib import Path

import numpy as np
import pandas as pd

from . import pipeline, plotting
from . import postprocess as pp
from . import regression as rg
from .config import RunConfig, dump_config, load_config
from .ingest import DataError
from .inference import diagnostics as diag
from .inference.sampling import PosteriorDraws, max_scalar_rhat, nuts_sample

log = logging.getLogger(__name__)

REPORT_INPUTS = ("rt.csv", "infections.csv", "reporting_ratio.csv", "diagnostics.txt")
DERIVED_KEYS = ("beta", "infections", "expected_deaths", "R_t")


class MissingArtifactsError(DataError):
    def __init__(self, missing, where):
        self.missing = list(missing)
        super().__init__(f"missing input(s) in {where}: {', '.join(self.missing)}")


def _dates(start, n):
    return [(start + dt.timedelta(days=i)).isoformat() for i in range(n)]


def _csv(df, path):
    df.to_csv(path, index=False, float_format="%.10g")


# -- fit ------------------------------------------------------------------------


def fit(cfg: RunConfig, out_dir, settings, seed) -> tuple[PosteriorDraws, dict]:
    ds = pipeline.load_dataset(cfg)
    data, prior = pipeline.build_model_data(ds, cfg)
    t0 = time.perf_counter()
    post = nuts_sample(data, settings, seed, prior)
    wall = time.perf_counter() - t0

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    dump_config(cfg, out / "config.yaml")
    write_draws(post, out / "draws.csv")
    start, end = ds.window_dates
    np.savez_compressed(out / "derived.npz", dates=np.array(_dates(start, data.T)),
                        **{k: post.derived[k] for k in DERIVED_KEYS})
    rows = diag.summarize(post.draws, post.names)
    (out / "diagnostics.txt").write_text(diag.format_table(rows))
    meta = {
        "seed": seed,
        "settings": vars(settings),
        "window": [start.isoformat(), end.isoformat()],
        "T": data.T,
        "population": data.population,
        "gamma2_switch": data.gamma2_switch,
        "wall_time_s": wall,
        "divergences": post.diagnostics["divergences"],
        "warmup_divergences": post.diagnostics["warmup_divergences"],
        "step_size": post.diagnostics["step_size"],
        "mean_tree_depth": post.diagnostics["mean_tree_depth"],
        "max_scalar_rhat": max_scalar_rhat(post),
        "warm_start": post.diagnostics["warm_start"],
        "warnings": post.warnings,
        "jhu_rows_summed": ds.deaths.meta.get("rows_summed"),
    }
    (out / "run.json").write_text(json.dumps(meta, indent=2) + "\n")
    return post, meta


def write_draws(post: PosteriorDraws, path):
    n_it, n_ch, dim = post.draws.shape
    flat = post.draws.transpose(1, 0, 2).reshape(-1, dim)
    df = pd.DataFrame(flat, columns=post.names)
    df.insert(0, "iteration", np.tile(np.arange(n_it), n_ch))
    df.insert(0, "chain", np.repeat(np.arange(n_ch), n_it))
    df.to_csv(path, index=False, float_format="%.17g")


def read_draws(path) -> pd.DataFrame:
    return pd.read_csv(path, float_precision="round_trip")


def _require(run_dir, names):
    missing = [n for n in names if not (Path(run_dir) / n).exists()]
    if missing:
        raise MissingArtifactsError(missing, run_dir)


# -- postprocess ------------------------------------------------------------------


def gamma2_per_day(draws: pd.DataFrame, T, switch):
    """(draws, T) infectious-stage rate, honouring a regime switch."""
    cols = sorted(c for c in draws.columns if c.startswith("gamma2["))
    g = draws[cols].to_numpy()
    seg = np.zeros(T, dtype=int)
    if switch is not None:
        seg[switch:] = 1
    return g[:, seg]


def postprocess(run_dir, cfg: RunConfig | None = None, figures=False):
    run = Path(run_dir)
    _require(run, ("draws.csv", "derived.npz", "run.json", "config.yaml"))
    cfg = cfg or load_config(run / "config.yaml")
    meta = json.loads((run / "run.json").read_text())
    draws = read_draws(run / "draws.csv")
    der = np.load(run / "derived.npz")
    dates = [str(d) for d in der["dates"]]
    T = len(dates)
    bands = tuple(tuple(b) for b in cfg.postprocess.bands)
    flat = lambda k: der[k].reshape(-1, T)

    beta = flat("beta")
    rt = pp.reproduction_number(beta, gamma2_per_day(draws, T, meta.get("gamma2_switch")), bands)
    _csv(rt.to_frame(dates), run / "rt.csv")
    _csv(pp.quantile_band(beta, bands).to_frame(dates), run / "beta.csv")

    c = flat("infections")
    inf = pp.quantile_band(c, bands).to_frame(dates)
    cum = pp.cumulative_infections(c, meta["population"], bands)
    ds = pipeline.load_dataset(cfg)
    reported = ds.window(ds.cases) if ds.cases is not None else None
    if reported is not None:
        inf["reported_cases"] = reported
    for prefix, band in (("cum_", cum.cumulative), ("attack_", cum.attack_rate)):
        for k, v in band.columns().items():
            inf[prefix + k] = v
    _csv(inf, run / "infections.csv")
    _csv(pp.quantile_band(flat("expected_deaths"), bands).to_frame(dates)
         .assign(observed=ds.window(ds.deaths)), run / "deaths.csv")

    if reported is None:
        raise DataError("reporting ratio needs a cases feed")
    ratio = pp.reporting_ratio(np.median(c, axis=0), reported, cfg.postprocess.reporting_lag)
    rr = pd.DataFrame({"date": dates, "raw": ratio.raw, "smoothed": ratio.smoothed})
    _csv(rr, run / "reporting_ratio.csv")
    summary = {"reporting_lag": ratio.lag, "clamped_days": ratio.n_clamped,
               "missing_days": ratio.n_missing, "stiffness": ratio.stiffness,
               "final_attack_rate": {k: float(v[-1]) for k, v in cum.attack_rate.columns().items()}}
    (run / "postprocess.json").write_text(json.dumps(summary, indent=2) + "\n")
    if figures:
        render_figures(run, run / "figures")
    return summary


# -- regression -----------------------------------------------------------------


def regress(run_dir, cfg: RunConfig | None = None, chains=None, warmup=None, samples=None, seed=None):
    run = Path(run_dir)
    _require(run, ("infections.csv", "beta.csv", "reporting_ratio.csv", "config.yaml"))
    cfg = cfg or load_config(run / "config.yaml")
    rc = cfg.regression
    ds = pipeline.load_dataset(cfg)
    if not ds.mobility_components or ds.tests is None:
        raise DataError("regression needs mobility and tests feeds")
    inf = pd.read_csv(run / "infections.csv")
    beta = pd.read_csv(run / "beta.csv")
    ratio = pd.read_csv(run / "reporting_ratio.csv")
    pc1, share = rg.mobility_pc1(list(ds.mobility_components))
    proxy = rg.mobility_proxy(pc1, rg.serial_interval(*rc.serial_interval))
    a, _ = ds.analysis_window
    n = len(inf)
    if rc.cutoff is not None:
        n = min(n, (rc.cutoff - ds.window_dates[0]).days + 1)
    if n <= 0:
        raise DataError(f"regression cutoff {rc.cutoff} precedes the analysis window")
    design = rg.build_design(inf["median"].to_numpy(), np.log(beta["median"].to_numpy()),
                             ratio["smoothed"].to_numpy(), proxy.values, ds.tests.values,
                             tuple(rc.test_lags), offset=a, n_rows=n)
    post = rg.fit_mvreg(design, chains=chains or rc.chains, warmup=rc.warmup if warmup is None else warmup,
                        samples=samples or rc.samples, seed=rc.seed if seed is None else seed)
    _csv(post.coefficient_table(), run / "regression_coefficients.csv")
    _csv(post.correlation_table(), run / "regression_correlations.csv")
    meta = {**post.diagnostics, "pc1_variance_share": share,
            "standardization": {"x_mean": design.x_mean.tolist(), "x_sd": design.x_sd.tolist(),
                                "y_mean": design.y_mean.tolist(), "y_sd": design.y_sd.tolist()},
            "covariates": list(design.covariate_names), "responses": list(design.response_names)}
    (run / "regression.json").write_text(json.dumps(meta, indent=2) + "\n")
    return post


# -- report ---------------------------------------------------------------------


def render_figures(run_dir, out_dir):
    run, out = Path(run_dir), Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    rt = pd.read_csv(run / "rt.csv")
    inf = pd.read_csv(run / "infections.csv")
    ratio = pd.read_csv(run / "reporting_ratio.csv")
    written = []
    for name, fig in (("rt.svg", plotting.rt_figure(rt)),
                      ("infections.svg", plotting.infections_figure(inf)),
                      ("cumulative.svg", plotting.cumulative_figure(inf)),
                      ("reporting_ratio.svg", plotting.ratio_figure(ratio))):
        plotting.save_svg(fig, out / name)
        written.append(out / name)
    return written


def report(run_dir, out_dir=None):
    run = Path(run_dir)
    if not run.is_dir():
        raise MissingArtifactsError(REPORT_INPUTS, run)
    _require(run, REPORT_INPUTS)
    out = Path(out_dir) if out_dir else run / "report"
    written = render_figures(run, out)
    shutil.copyfile(run / "diagnostics.txt", out / "diagnostics.txt")
    return written + [out / "diagnostics.txt"]
