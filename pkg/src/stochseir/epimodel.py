"""Deterministic SEEIIR skeleton conditional on a daily transmission-rate path.

State is carried internally as population fractions (compartment / N); the
public helpers accept and return person counts.  The heavy lifting lives in
numba kernels: a forward pass that integrates the implicit trapezoidal rule
with fixed-point iteration, and a reverse pass that back-propagates through
the converged fixed points (implicit-function adjoint).
"""
from __future__ import annotations

from dataclasses import dataclass

import numba
import numpy as np
from scipy import special

S, E1, E2, I1, I2, R = range(6)
COMPARTMENTS = ("S", "E1", "E2", "I1", "I2", "R")

MAX_FIXED_POINT_ITER = 50
# negative round-off tolerated before clamping, in persons
NEGATIVE_SLACK = 1e-9

STATUS_OK = 0
STATUS_NO_CONVERGENCE = 1
STATUS_NEGATIVE = 2


class IntegratorDivergence(RuntimeError):
    """Fixed-point iteration failed or a compartment went negative."""

    def __init__(self, day, reason="fixed-point iteration did not converge"):
        super().__init__(f"integrator diverged on day {day}: {reason}")
        self.day = day


@dataclass(frozen=True)
class CompartmentState:
    S: float
    E1: float
    E2: float
    I1: float
    I2: float
    R: float

    def as_array(self) -> np.ndarray:
        return np.array([self.S, self.E1, self.E2, self.I1, self.I2, self.R], dtype=float)

    @classmethod
    def from_array(cls, y) -> "CompartmentState":
        return cls(*(float(v) for v in y))

    @property
    def total(self) -> float:
        return float(self.as_array().sum())


@dataclass(frozen=True)
class RateParams:
    gamma1: float
    gamma2: float
    rho: float = 0.5
    vaccine_lag_U: int = 45

    def __post_init__(self):
        if not self.gamma1 > 0 or not self.gamma2 > 0:
            raise ValueError("gamma1 and gamma2 must be positive")
        if not 0.0 <= self.rho <= 1.0:
            raise ValueError("rho must lie in [0, 1]")
        if self.vaccine_lag_U < 0:
            raise ValueError("vaccine_lag_U must be non-negative")


@dataclass(frozen=True)
class DelayKernel:
    """Daily weights ``weights[s-1]`` for delays ``s = 1..S_max``."""

    weights: np.ndarray
    shape: float
    rate: float

    @property
    def s_max(self) -> int:
        return len(self.weights)

    @property
    def mass(self) -> float:
        return float(self.weights.sum())

    @property
    def mean(self) -> float:
        s = np.arange(1, self.s_max + 1)
        return float(np.dot(s, self.weights))


# ---------------------------------------------------------------------------
# numba kernels (fractions, N = 1)


@numba.njit(cache=True)
def _rhs(y, beta, g1, g2, vax, sir, out):
    inf = y[I1] + y[I2]
    flux = beta * y[S] * inf
    out[S] = -flux - vax
    if sir:
        out[E1] = 0.0
        out[E2] = 0.0
        out[I1] = flux - g2 * y[I1]
    else:
        out[E1] = flux - g1 * y[E1]
        out[E2] = g1 * y[E1] - g1 * y[E2]
        out[I1] = g1 * y[E2] - g2 * y[I1]
    out[I2] = g2 * y[I1] - g2 * y[I2]
    out[R] = g2 * y[I2] + vax


@numba.njit(cache=True)
def _incidence(y, beta, g1, sir):
    if sir:
        return beta * y[S] * (y[I1] + y[I2])
    return g1 * y[E2]


@numba.njit(cache=True)
def _jac(y, beta, g1, g2, sir, J):
    J[:, :] = 0.0
    inf = y[I1] + y[I2]
    J[S, S] = -beta * inf
    J[S, I1] = -beta * y[S]
    J[S, I2] = -beta * y[S]
    if sir:
        J[I1, S] = beta * inf
        J[I1, I1] = beta * y[S] - g2
        J[I1, I2] = beta * y[S]
    else:
        J[E1, S] = beta * inf
        J[E1, I1] = beta * y[S]
        J[E1, I2] = beta * y[S]
        J[E1, E1] = -g1
        J[E2, E1] = g1
        J[E2, E2] = -g1
        J[I1, E2] = g1
        J[I1, I1] = -g2
    J[I2, I1] = g2
    J[I2, I2] = -g2
    J[R, I2] = g2


@numba.njit(cache=True)
def _param_sens(y, g1, sir, dbeta, dg1, dg2):
    """Partial derivatives of the RHS with respect to beta, gamma1, gamma2."""
    si = y[S] * (y[I1] + y[I2])
    dbeta[:] = 0.0
    dg1[:] = 0.0
    dg2[:] = 0.0
    dbeta[S] = -si
    if sir:
        dbeta[I1] = si
    else:
        dbeta[E1] = si
        dg1[E1] = -y[E1]
        dg1[E2] = y[E1] - y[E2]
        dg1[I1] = y[E2]
    dg2[I1] = -y[I1]
    dg2[I2] = y[I1] - y[I2]
    dg2[R] = y[I2]


@numba.njit(cache=True)
def _solve_transposed(A, b, x, M):
    """Solve ``A.T @ x = b`` for a small dense A (partial pivoting).

    ``M`` is an (n, n + 1) work array.
    """
    n = b.shape[0]
    for i in range(n):
        for j in range(n):
            M[i, j] = A[j, i]
        M[i, n] = b[i]
    for k in range(n):
        p = k
        best = abs(M[k, k])
        for i in range(k + 1, n):
            if abs(M[i, k]) > best:
                best = abs(M[i, k])
                p = i
        if p != k:
            for j in range(n + 1):
                tmp = M[k, j]
                M[k, j] = M[p, j]
                M[p, j] = tmp
        for i in range(k + 1, n):
            f = M[i, k] / M[k, k]
            if f != 0.0:
                for j in range(k, n + 1):
                    M[i, j] -= f * M[k, j]
    for i in range(n - 1, -1, -1):
        acc = M[i, n]
        for j in range(i + 1, n):
            acc -= M[i, j] * x[j]
        x[i] = acc / M[i, i]


@numba.njit(cache=True)
def _forward(y0, beta, g1, g2, vax, substeps, sir, tol, slack):
    """Integrate ``len(beta)`` days.

    Returns (incidence per day, states at every sub-step, status, bad day).
    ``g2`` and ``vax`` are per-day arrays.
    """
    T = beta.shape[0]
    h = 1.0 / substeps
    states = np.empty((T * substeps + 1, 6))
    states[0, :] = y0
    inc = np.zeros(T)
    f0 = np.empty(6)
    f1 = np.empty(6)
    base = np.empty(6)
    cur = np.empty(6)
    nxt = np.empty(6)
    for d in range(T):
        b = beta[d]
        gg2 = g2[d]
        v = vax[d]
        for k in range(substeps):
            n = d * substeps + k
            for i in range(6):
                cur[i] = states[n, i]
            _rhs(cur, b, g1, gg2, v, sir, f0)
            for i in range(6):
                base[i] = cur[i] + 0.5 * h * f0[i]
                nxt[i] = cur[i] + h * f0[i]
            converged = False
            for it in range(MAX_FIXED_POINT_ITER):
                _rhs(nxt, b, g1, gg2, v, sir, f1)
                delta = 0.0
                for i in range(6):
                    new = base[i] + 0.5 * h * f1[i]
                    diff = abs(new - nxt[i])
                    if diff > delta:
                        delta = diff
                    nxt[i] = new
                if delta <= tol:
                    converged = True
                    break
            if not converged or not np.isfinite(delta):
                return inc, states, STATUS_NO_CONVERGENCE, d
            for i in range(6):
                if nxt[i] < 0.0:
                    if nxt[i] > -slack:
                        nxt[i] = 0.0
                    else:
                        return inc, states, STATUS_NEGATIVE, d
                states[n + 1, i] = nxt[i]
            inc[d] += 0.5 * h * (_incidence(cur, b, g1, sir) + _incidence(nxt, b, g1, sir))
    return inc, states, STATUS_OK, -1


@numba.njit(cache=True)
def _backward(states, beta, g1, g2, inc_bar, substeps, sir):
    """Reverse pass for a scalar loss L(incidence).

    ``inc_bar[d]`` is dL/d incidence[d].  Returns gradients with respect to
    the daily beta, gamma1, the daily gamma2 and the initial state.
    """
    T = beta.shape[0]
    h = 1.0 / substeps
    beta_bar = np.zeros(T)
    g2_bar = np.zeros(T)
    g1_bar = 0.0
    lam = np.zeros(6)
    mu = np.zeros(6)
    J0 = np.empty((6, 6))
    J1 = np.empty((6, 6))
    A = np.empty((6, 6))
    work = np.empty((6, 7))
    pb0 = np.empty(6)
    pg10 = np.empty(6)
    pg20 = np.empty(6)
    pb1 = np.empty(6)
    pg11 = np.empty(6)
    pg21 = np.empty(6)
    for d in range(T - 1, -1, -1):
        b = beta[d]
        gg2 = g2[d]
        cb = inc_bar[d] * 0.5 * h
        for k in range(substeps - 1, -1, -1):
            n = d * substeps + k
            y0 = states[n]
            y1 = states[n + 1]
            # incidence quadrature at the step's right end
            if sir:
                inf1 = y1[I1] + y1[I2]
                lam[S] += cb * b * inf1
                lam[I1] += cb * b * y1[S]
                lam[I2] += cb * b * y1[S]
                beta_bar[d] += cb * (y0[S] * (y0[I1] + y0[I2]) + y1[S] * inf1)
            else:
                lam[E2] += cb * g1
                g1_bar += cb * (y0[E2] + y1[E2])
            _jac(y1, b, g1, gg2, sir, J1)
            for i in range(6):
                for j in range(6):
                    A[i, j] = -0.5 * h * J1[i, j]
                A[i, i] += 1.0
            _solve_transposed(A, lam, mu, work)
            _jac(y0, b, g1, gg2, sir, J0)
            _param_sens(y0, g1, sir, pb0, pg10, pg20)
            _param_sens(y1, g1, sir, pb1, pg11, pg21)
            sb = 0.0
            s1 = 0.0
            s2 = 0.0
            for i in range(6):
                sb += mu[i] * (pb0[i] + pb1[i])
                s1 += mu[i] * (pg10[i] + pg11[i])
                s2 += mu[i] * (pg20[i] + pg21[i])
            beta_bar[d] += 0.5 * h * sb
            g1_bar += 0.5 * h * s1
            g2_bar[d] += 0.5 * h * s2
            for j in range(6):
                acc = mu[j]
                for i in range(6):
                    acc += 0.5 * h * J0[i, j] * mu[i]
                lam[j] = acc
            # incidence quadrature at the step's left end
            if sir:
                lam[S] += cb * b * (y0[I1] + y0[I2])
                lam[I1] += cb * b * y0[S]
                lam[I2] += cb * b * y0[S]
            else:
                lam[E2] += cb * g1
    return beta_bar, g1_bar, g2_bar, lam


# ---------------------------------------------------------------------------
# person-scale API


def fixed_point_tolerance(N: float) -> float:
    """Absolute tolerance on the fraction scale (1e-10 persons, floored at 1e-15)."""
    return max(1e-10 / N, 1e-15)


def ode_rhs(state, beta, vax_inflow, params: RateParams, N):
    """Time derivatives of the six compartments (persons per day)."""
    y = np.asarray(state.as_array() if isinstance(state, CompartmentState) else state, dtype=float)
    out = np.empty(6)
    _rhs(y / N, float(beta), params.gamma1, params.gamma2, params.rho * vax_inflow / N, False, out)
    return out * N


def integrate_day(state, beta_const, vax_inflow, params: RateParams, N, substeps=4, day=0):
    """Advance one day; returns (state at t+1, new infections over the day).

    The fixed-point map contracts roughly while h times the largest rate stays
    below one (h = 1 / substeps); beyond that the step raises
    ``IntegratorDivergence``.
    ``vax_inflow`` is the raw number of first doses given U days earlier;
    efficacy is applied here.
    """
    if substeps < 1:
        raise ValueError("substeps must be >= 1")
    y = np.asarray(state.as_array() if isinstance(state, CompartmentState) else state, dtype=float)
    inc, states, status, _ = _forward(
        y / N,
        np.array([float(beta_const)]),
        float(params.gamma1),
        np.array([float(params.gamma2)]),
        np.array([params.rho * vax_inflow / N]),
        int(substeps),
        False,
        fixed_point_tolerance(N),
        NEGATIVE_SLACK / N,
    )
    _raise_on_status(status, day)
    return CompartmentState.from_array(states[-1] * N), float(inc[0] * N)


@dataclass
class Trajectory:
    """Daily output of :func:`integrate`, person scale."""

    states: np.ndarray  # (T + 1, 6) day-boundary states
    incidence: np.ndarray  # (T,)
    substates: np.ndarray  # (T * substeps + 1, 6) fractions, kept for adjoints


def integrate(y0, beta, gamma1, gamma2, vax_inflow, N, substeps=4, sir=False) -> Trajectory:
    """Integrate ``len(beta)`` days from the person-scale state ``y0``.

    ``gamma2`` and ``vax_inflow`` may be scalars or per-day arrays;
    ``vax_inflow`` is already efficacy-weighted and lagged (persons/day).
    """
    beta = np.ascontiguousarray(beta, dtype=float)
    T = beta.shape[0]
    g2 = np.broadcast_to(np.asarray(gamma2, dtype=float), (T,)).copy()
    vax = np.broadcast_to(np.asarray(vax_inflow, dtype=float), (T,)) / N
    y0 = np.asarray(y0.as_array() if isinstance(y0, CompartmentState) else y0, dtype=float)
    inc, sub, status, day = _forward(
        y0 / N, beta, float(gamma1), g2, np.ascontiguousarray(vax), int(substeps), bool(sir),
        fixed_point_tolerance(N), NEGATIVE_SLACK / N,
    )
    _raise_on_status(status, day)
    return Trajectory(states=sub[::substeps] * N, incidence=inc * N, substates=sub)


def _raise_on_status(status, day):
    if status == STATUS_NO_CONVERGENCE:
        raise IntegratorDivergence(day)
    if status == STATUS_NEGATIVE:
        raise IntegratorDivergence(day, "compartment went negative")


def initial_state(N, seed_size) -> CompartmentState:
    """Seed split evenly between the two latent stages."""
    if not 0 < seed_size < N:
        raise ValueError(f"seed_size must lie in (0, N), got {seed_size}")
    half = seed_size / 2.0
    return CompartmentState(S=N - seed_size, E1=half, E2=half, I1=0.0, I2=0.0, R=0.0)


def lagged_vaccinations(first_doses, rho=0.5, lag=45, length=None):
    """Efficacy-weighted inflow ``rho * nu[t - lag]``, zero before the lag."""
    nu = np.asarray(first_doses, dtype=float)
    n = len(nu) if length is None else length
    out = np.zeros(n)
    if lag < n:
        take = min(n - lag, len(nu))
        out[lag:lag + take] = nu[:take]
    return rho * out


def gamma_support(shape, rate, mass=0.999):
    """Smallest s with CDF(s + 0.5) > mass."""
    s = 2
    while special.gammainc(shape, rate * (s + 0.5)) <= mass:
        s += 1
    return s


def discretize_gamma(shape, rate, S_max=None) -> DelayKernel:
    """Discretize a shape-rate Gamma density onto whole days.

    Day 1 takes the mass on [0, 1.5]; day s >= 2 takes [s - 0.5, s + 0.5].
    """
    if not (shape > 0 and rate > 0):
        raise ValueError("shape and rate must be positive")
    if S_max is None:
        S_max = gamma_support(shape, rate)
    if S_max < 2:
        raise ValueError("S_max must be >= 2")
    edges = np.concatenate([[0.0], np.arange(1, S_max + 1) + 0.5])
    cdf = special.gammainc(shape, rate * edges)
    if not np.all(np.isfinite(cdf)):
        raise FloatingPointError("non-finite Gamma CDF evaluation")
    weights = np.clip(np.diff(cdf), 0.0, None)
    return DelayKernel(weights=weights, shape=float(shape), rate=float(rate))
