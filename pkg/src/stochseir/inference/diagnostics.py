"""Convergence diagnostics: rank-normalised split R-hat and effective sample size."""
from __future__ import annotations

import numpy as np
from scipy import stats


def _split(x):
    """(chains, draws) -> (2 * chains, draws // 2)."""
    x = np.asarray(x, dtype=float)
    n = x.shape[1] // 2
    return np.concatenate([x[:, :n], x[:, x.shape[1] - n:]], axis=0)


def _rank_normalize(x):
    ranks = stats.rankdata(x, method="average").reshape(x.shape)
    return stats.norm.ppf((ranks - 0.375) / (x.size + 0.25))


def _autocov(x):
    """Biased autocovariance of each row via FFT."""
    m, n = x.shape
    xc = x - x.mean(axis=1, keepdims=True)
    size = 2 ** int(np.ceil(np.log2(2 * n)))
    f = np.fft.rfft(xc, n=size, axis=1)
    acov = np.fft.irfft(f * np.conjugate(f), n=size, axis=1)[:, :n]
    return acov / n


def _ess_raw(x):
    """Geyer initial-monotone-sequence ESS for (chains, draws) samples."""
    m, n = x.shape
    if n < 4 or np.ptp(x) == 0:
        return np.nan
    acov = _autocov(x)
    chain_mean = x.mean(axis=1)
    mean_var = np.mean(acov[:, 0]) * n / (n - 1.0)
    var_plus = mean_var * (n - 1.0) / n
    if m > 1:
        var_plus += np.var(chain_mean, ddof=1)
    rho = np.zeros(n)
    rho_even = 1.0
    rho[0] = rho_even
    rho_odd = 1.0 - (mean_var - np.mean(acov[:, 1])) / var_plus
    rho[1] = rho_odd
    t = 1
    while t < n - 3 and rho_even + rho_odd > 0.0:
        rho_even = 1.0 - (mean_var - np.mean(acov[:, t + 1])) / var_plus
        rho_odd = 1.0 - (mean_var - np.mean(acov[:, t + 2])) / var_plus
        if rho_even + rho_odd >= 0:
            rho[t + 1] = rho_even
            rho[t + 2] = rho_odd
        t += 2
    max_t = t - 2
    if rho_even > 0:
        rho[max_t + 1] = rho_even
    t = 1
    while t <= max_t - 2:
        if rho[t + 1] + rho[t + 2] > rho[t - 1] + rho[t]:
            rho[t + 1] = (rho[t - 1] + rho[t]) / 2.0
            rho[t + 2] = rho[t + 1]
        t += 2
    ess = m * n
    tau = -1.0 + 2.0 * np.sum(rho[:max_t + 1]) + rho[max_t + 1]
    tau = max(tau, 1.0 / np.log10(ess))
    return ess / tau


def _rhat_raw(x):
    m, n = x.shape
    chain_var = np.var(x, axis=1, ddof=1)
    W = np.mean(chain_var)
    B = n * np.var(x.mean(axis=1), ddof=1)
    if W == 0:
        return np.nan
    var_plus = (n - 1.0) / n * W + B / n
    return float(np.sqrt(var_plus / W))


def rhat(x):
    """max(bulk, tail) rank-normalised split R-hat of a (chains, draws) array."""
    s = _split(x)
    if np.ptp(s) == 0:
        return np.nan
    bulk = _rhat_raw(_rank_normalize(s))
    folded = np.abs(s - np.median(s))
    tail = _rhat_raw(_rank_normalize(folded))
    return float(max(bulk, tail))


def ess_bulk(x):
    s = _split(x)
    if np.ptp(s) == 0:
        return np.nan
    return float(_ess_raw(_rank_normalize(s)))


def ess_mean(x):
    return float(_ess_raw(_split(x)))


def mcse_mean(x):
    x = np.asarray(x, dtype=float)
    return float(np.std(x, ddof=1) / np.sqrt(ess_mean(x)))


def summarize(draws, names, probs=(0.025, 0.5, 0.975)):
    """Per-parameter summary rows from a (iterations, chains, dim) array."""
    rows = []
    for j, name in enumerate(names):
        x = draws[:, :, j].T
        flat = x.ravel()
        q = np.quantile(flat, probs)
        rows.append({
            "parameter": name,
            "mean": float(flat.mean()),
            "sd": float(flat.std(ddof=1)) if flat.size > 1 else 0.0,
            **{f"q{100 * p:g}": float(v) for p, v in zip(probs, q)},
            "rhat": rhat(x) if x.shape[1] >= 4 else np.nan,
            "ess_bulk": ess_bulk(x) if x.shape[1] >= 4 else np.nan,
        })
    return rows


def format_table(rows):
    cols = list(rows[0].keys())
    width = max(len(r["parameter"]) for r in rows)
    head = f"{'parameter':<{width}}" + "".join(f"{c:>12}" for c in cols[1:])
    lines = [head]
    for r in rows:
        cells = "".join(f"{r[c]:>12.4g}" for c in cols[1:])
        lines.append(f"{r['parameter']:<{width}}{cells}")
    return "\n".join(lines) + "\n"
