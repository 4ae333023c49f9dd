"""Static SVG figures: medians as lines, credible bands as shaded areas."""
from __future__ import annotations

import matplotlib

matplotlib.use("Agg")
import matplotlib.dates as mdates  # noqa: E402
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402
import pandas as pd  # noqa: E402

# fixed salt and no timestamp: identical inputs give byte-identical SVGs
matplotlib.rcParams["svg.hashsalt"] = "stochseir"
SVG_METADATA = {"Date": None, "Creator": None}
BAND_ALPHAS = (0.2, 0.35)


def _bands(df):
    """((lower column, upper column), ...) ordered widest first."""
    qs = sorted({c for c in df.columns if c.startswith("q")}, key=lambda c: float(c[1:]))
    pairs = []
    while len(qs) >= 2:
        pairs.append((qs.pop(0), qs.pop(-1)))
    return pairs


def _dates(df):
    return pd.to_datetime(df["date"]) if "date" in df.columns else df["day"]


def band_figure(df, title, ylabel, prefix="", color="C0", reference=None, extra=None):
    """Median line with nested shaded bands from a summary frame.

    Columns are ``<prefix>median`` and ``<prefix>q<p>`` pairs; ``extra`` maps
    a legend label to a series drawn as points.
    """
    sub = df[[c for c in df.columns if c.startswith(prefix) or c in ("date", "day")]].copy()
    sub.columns = [c[len(prefix):] if c.startswith(prefix) else c for c in sub.columns]
    x = _dates(df)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    for (lo, hi), alpha in zip(_bands(sub), BAND_ALPHAS):
        ax.fill_between(x, sub[lo], sub[hi], color=color, alpha=alpha, linewidth=0,
                        label=f"{lo[1:]}-{hi[1:]}%")
    ax.plot(x, sub["median"], color=color, label="median")
    if reference is not None:
        ax.axhline(reference, color="0.3", linestyle="--", linewidth=0.8)
    for label, series in (extra or {}).items():
        ax.plot(x, series, ".", color="0.2", markersize=3, label=label)
    ax.set_title(title)
    ax.set_ylabel(ylabel)
    if "date" in df.columns:
        ax.xaxis.set_major_formatter(mdates.DateFormatter("%Y-%m-%d"))
        fig.autofmt_xdate()
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    return fig


def rt_figure(df):
    return band_figure(df, "Time-varying reproduction number", "R_t", reference=1.0)


def infections_figure(df):
    extra = {"reported cases": df["reported_cases"]} if "reported_cases" in df.columns else None
    return band_figure(df, "Daily infections", "infections", color="C1", extra=extra)


def cumulative_figure(df):
    return band_figure(df, "Cumulative infections", "infections", prefix="cum_", color="C2")


def ratio_figure(df):
    x = _dates(df)
    fig, ax = plt.subplots(figsize=(7, 3.5))
    ax.plot(x, df["raw"], ".", color="0.4", markersize=3, label="observed ratio")
    ax.plot(x, df["smoothed"], color="C3", label="smoothed")
    ax.set_ylim(0, 1)
    ax.set_title("Reporting ratio")
    ax.set_ylabel("reported / infections")
    if "date" in df.columns:
        ax.xaxis.set_major_formatter(mdates.DateFormatter("%Y-%m-%d"))
        fig.autofmt_xdate()
    ax.legend(frameon=False, fontsize=8)
    fig.tight_layout()
    return fig


def save_svg(fig, path):
    fig.savefig(path, format="svg", metadata=SVG_METADATA)
    plt.close(fig)


def shaded_bounds(fig):
    """(lower, upper) arrays of every shaded band in a figure, in drawing order."""
    out = []
    for coll in fig.axes[0].collections:
        if not hasattr(coll, "get_paths") or not coll.get_paths():
            continue
        # polygon: start, n lower points, end of upper, n upper points reversed, closing point
        v = coll.get_paths()[0].vertices
        n = (len(v) - 3) // 2
        out.append((v[1:n + 1, 1], v[n + 2:2 * n + 2, 1][::-1]))
    return out
