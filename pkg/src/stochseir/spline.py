"""Penalised cubic B-spline smoother (P-spline) with GCV-chosen stiffness."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import interpolate, linalg, special

MIN_POINTS = 10
LAMBDA_GRID = np.logspace(-4, 6, 30)
LOGIT_CLIP = (0.001, 0.999)
DEGREE = 3


class SmoothingError(ValueError):
    pass


@dataclass
class PSplineFit:
    knots: np.ndarray
    coef: np.ndarray
    lam: float
    gcv: float
    edf: float
    span: tuple  # (first, last) abscissa covered by data

    def __call__(self, x):
        x = np.asarray(x, dtype=float)
        out = np.full(x.shape, np.nan)
        inside = (x >= self.span[0]) & (x <= self.span[1])
        if inside.any():
            out[inside] = interpolate.BSpline(self.knots, self.coef, DEGREE, extrapolate=False)(x[inside])
        return out


def _basis(x, lo, hi, n_segments):
    dx = (hi - lo) / n_segments
    knots = lo + dx * np.arange(-DEGREE, n_segments + DEGREE + 1)
    B = interpolate.BSpline.design_matrix(x, knots, DEGREE).toarray()
    return B, knots


def pspline(x, y, lambdas=LAMBDA_GRID, n_segments=None) -> PSplineFit:
    """Least squares cubic B-spline with a second-difference penalty.

    Knots are equally spaced over the data span, so shifting ``x`` shifts
    the fit.  The penalty weight minimises GCV = n RSS / (n - edf)^2 over
    ``lambdas``.  Polynomials of degree <= 1 lie in the penalty null space.
    """
    x = np.asarray(x, dtype=float)
    y = np.asarray(y, dtype=float)
    n = len(x)
    if n < MIN_POINTS:
        raise SmoothingError(f"need at least {MIN_POINTS} points to smooth, got {n}")
    lo, hi = float(x.min()), float(x.max())
    if hi == lo:
        raise SmoothingError("all points share one abscissa")
    if n_segments is None:
        n_segments = int(np.clip(n // 3, 4, 40))
    B, knots = _basis(x, lo, hi, n_segments)
    k = B.shape[1]
    D = np.diff(np.eye(k), n=2, axis=0)
    BtB, Bty, P = B.T @ B, B.T @ y, D.T @ D
    best = None
    for lam in lambdas:
        A = BtB + lam * P
        try:
            cf = linalg.cho_factor(A)
        except linalg.LinAlgError:
            continue
        coef = linalg.cho_solve(cf, Bty)
        edf = float(np.trace(linalg.cho_solve(cf, BtB)))
        rss = float(np.sum((y - B @ coef) ** 2))
        gcv = n * rss / max(n - edf, 1e-12) ** 2
        if best is None or gcv < best.gcv - 1e-15 * abs(best.gcv):
            best = PSplineFit(knots, coef, float(lam), gcv, edf, (lo, hi))
    if best is None:
        raise SmoothingError("penalised system is singular for every stiffness on the grid")
    return best


def smooth_ratio(values, lambdas=LAMBDA_GRID):
    """Smooth a ratio series with gaps (NaN) on the logit scale.

    Values are clipped to [0.001, 0.999] before the logit; the fit is
    evaluated on every day between the first and last observed value and
    mapped back to (0, 1).  Days outside that span stay NaN.
    """
    values = np.asarray(values, dtype=float)
    t = np.arange(len(values), dtype=float)
    ok = np.isfinite(values)
    if ok.sum() < MIN_POINTS:
        raise SmoothingError(f"need at least {MIN_POINTS} non-missing points, got {int(ok.sum())}")
    y = special.logit(np.clip(values[ok], *LOGIT_CLIP))
    fit = pspline(t[ok], y, lambdas)
    return special.expit(fit(t)), fit
