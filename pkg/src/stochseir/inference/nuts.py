"""No-U-Turn sampler with dual-averaging step size and windowed diagonal metric.

The transition follows the multinomial variant: biased progressive sampling
between doubled subtrees, uniform progressive sampling inside them, and the
generalised no-U-turn criterion checked on the merged trajectory as well as
on the two extra sub-trajectories that straddle each merge point.

A target is any object with ``log_prob_grad(theta) -> (float, ndarray)``
that returns ``-inf`` for points outside the support.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np

MAX_DELTA_H = 1000.0


@dataclass
class DualAveraging:
    delta: float = 0.8
    gamma: float = 0.05
    kappa: float = 0.75
    t0: float = 10.0
    mu: float = 0.0
    counter: int = 0
    s_bar: float = 0.0
    x_bar: float = 0.0

    def restart(self, step_size):
        self.mu = math.log(10.0 * step_size)
        self.counter = 0
        self.s_bar = 0.0
        self.x_bar = 0.0

    def learn(self, accept_stat):
        self.counter += 1
        accept_stat = min(1.0, accept_stat)
        eta = 1.0 / (self.counter + self.t0)
        self.s_bar = (1.0 - eta) * self.s_bar + eta * (self.delta - accept_stat)
        x = self.mu - self.s_bar * math.sqrt(self.counter) / self.gamma
        x_eta = self.counter ** (-self.kappa)
        self.x_bar = (1.0 - x_eta) * self.x_bar + x_eta * x
        return math.exp(x)

    @property
    def final_step_size(self):
        return math.exp(self.x_bar)


class WelfordVariance:
    def __init__(self, dim):
        self.n = 0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def add(self, x):
        self.n += 1
        delta = x - self.mean
        self.mean += delta / self.n
        self.m2 += delta * (x - self.mean)

    def variance(self):
        return self.m2 / (self.n - 1)

    def restart(self):
        self.n = 0
        self.mean[:] = 0.0
        self.m2[:] = 0.0


class WindowedMetric:
    """Expanding-window schedule for the diagonal inverse metric."""

    def __init__(self, dim, num_warmup, init_buffer=75, term_buffer=50, base_window=25):
        self.num_warmup = num_warmup
        if num_warmup < 20:
            self.active = False
            return
        self.active = True
        if init_buffer + base_window + term_buffer > num_warmup:
            init_buffer = int(0.15 * num_warmup)
            term_buffer = int(0.1 * num_warmup)
            base_window = num_warmup - (init_buffer + term_buffer)
        self.init_buffer = init_buffer
        self.term_buffer = term_buffer
        self.window_size = base_window
        self.next_window = init_buffer + base_window - 1
        self.counter = 0
        self.estimator = WelfordVariance(dim)

    def _in_window(self):
        return (self.init_buffer <= self.counter < self.num_warmup - self.term_buffer
                and self.counter != self.num_warmup)

    def _end_of_window(self):
        return self.counter == self.next_window and self.counter != self.num_warmup

    def _compute_next_window(self):
        last = self.num_warmup - self.term_buffer - 1
        if self.next_window == last:
            return
        self.window_size *= 2
        self.next_window = self.counter + self.window_size
        if self.next_window != last:
            boundary = self.next_window + 2 * self.window_size
            if boundary >= self.num_warmup - self.term_buffer:
                self.next_window = last

    def learn(self, theta):
        """Feed one warmup draw; returns a new inverse metric at window ends."""
        if not self.active:
            return None
        if self._in_window():
            self.estimator.add(theta)
        if self._end_of_window():
            self._compute_next_window()
            n = self.estimator.n
            var = (n / (n + 5.0)) * self.estimator.variance() + 1e-3 * (5.0 / (n + 5.0))
            self.estimator.restart()
            self.counter += 1
            return var
        self.counter += 1
        return None


@dataclass
class ChainResult:
    draws: np.ndarray
    log_prob: np.ndarray
    accept_stat: np.ndarray
    step_size: np.ndarray
    tree_depth: np.ndarray
    n_leapfrog: np.ndarray
    divergent: np.ndarray
    energy: np.ndarray
    inv_metric: np.ndarray
    warmup_divergent: int = 0
    warmup_accept: np.ndarray = field(default_factory=lambda: np.zeros(0))


class NUTS:
    """One chain of the sampler; state lives on the instance."""

    def __init__(self, target, dim, rng, step_size=1.0, inv_metric=None, max_depth=10):
        self.target = target
        self.dim = dim
        self.rng = rng
        self.step_size = step_size
        self.inv_metric = np.ones(dim) if inv_metric is None else np.asarray(inv_metric, float)
        self.max_depth = max_depth

    # -- Hamiltonian pieces -------------------------------------------------

    def _kinetic(self, p):
        return 0.5 * float(np.dot(p, self.inv_metric * p))

    def _momentum(self):
        return self.rng.standard_normal(self.dim) / np.sqrt(self.inv_metric)

    def _leapfrog(self, theta, p, grad, eps):
        p = p + 0.5 * eps * grad
        theta = theta + eps * self.inv_metric * p
        lp, grad = self.target.log_prob_grad(theta)
        p = p + 0.5 * eps * grad
        return theta, p, grad, lp

    def init_step_size(self, theta, lp, grad):
        """Double or halve the step until one leapfrog crosses acceptance 0.8."""
        eps = self.step_size
        log_target = math.log(0.8)
        p = self._momentum()
        H0 = -lp + self._kinetic(p)
        _, p1, _, lp1 = self._leapfrog(theta, p, grad, eps)
        h = -lp1 + self._kinetic(p1)
        delta = H0 - h if np.isfinite(h) else -np.inf
        direction = 1 if delta > log_target else -1
        while True:
            p = self._momentum()
            H0 = -lp + self._kinetic(p)
            _, p1, _, lp1 = self._leapfrog(theta, p, grad, eps)
            h = -lp1 + self._kinetic(p1)
            delta = H0 - h if np.isfinite(h) else -np.inf
            if direction == 1 and not delta > log_target:
                break
            if direction == -1 and not delta < log_target:
                break
            eps = eps * 2.0 if direction == 1 else eps / 2.0
            if eps > 1e7:
                raise RuntimeError("step size search diverged to infinity; posterior may be improper")
            if eps == 0:
                raise RuntimeError("step size search collapsed to zero; no acceptable step found")
        self.step_size = eps
        return eps

    # -- tree building --------------------------------------------------------

    def _criterion(self, p_sharp_minus, p_sharp_plus, rho):
        return np.dot(p_sharp_plus, rho) > 0 and np.dot(p_sharp_minus, rho) > 0

    def _build_tree(self, depth, sign, H0):
        """Extend ``self._z`` by 2**depth leapfrog steps.

        Returns (valid, proposal, p_sharp_beg, p_sharp_end, rho, p_beg, p_end,
        log_sum_weight).
        """
        if depth == 0:
            theta, p, grad, lp = self._z
            theta, p, grad, lp = self._leapfrog(theta, p, grad, sign * self.step_size)
            self._z = (theta, p, grad, lp)
            self._n_leapfrog += 1
            h = -lp + self._kinetic(p) if np.isfinite(lp) else np.inf
            if not np.isfinite(h):
                h = np.inf
            if h - H0 > MAX_DELTA_H:
                self._divergent = True
            lw = H0 - h
            self._sum_metro += 1.0 if lw > 0 else math.exp(lw)
            if self._divergent:
                return False, None, None, None, None, None, None, -np.inf
            p_sharp = self.inv_metric * p
            return True, self._z, p_sharp, p_sharp, p.copy(), p, p, lw

        ok, prop_init, ps_beg, ps_init_end, rho_init, p_beg, p_init_end, lsw_init = \
            self._build_tree(depth - 1, sign, H0)
        if not ok:
            return False, None, None, None, None, None, None, -np.inf
        ok, prop_final, ps_final_beg, ps_end, rho_final, p_final_beg, p_end, lsw_final = \
            self._build_tree(depth - 1, sign, H0)
        if not ok:
            return False, None, None, None, None, None, None, -np.inf

        lsw = np.logaddexp(lsw_init, lsw_final)
        proposal = prop_init
        if lsw_final > lsw or self.rng.uniform() < math.exp(lsw_final - lsw):
            proposal = prop_final
        rho = rho_init + rho_final
        persist = self._criterion(ps_beg, ps_end, rho)
        persist = persist and self._criterion(ps_beg, ps_final_beg, rho_init + p_final_beg)
        persist = persist and self._criterion(ps_init_end, ps_end, rho_final + p_init_end)
        return persist, proposal, ps_beg, ps_end, rho, p_beg, p_end, lsw

    def transition(self, theta, lp, grad):
        """One NUTS transition; returns (new point, statistics dict)."""
        p0 = self._momentum()
        H0 = -lp + self._kinetic(p0)
        z0 = (theta, p0, grad, lp)
        z_fwd = z_bck = z0
        sample = z0
        log_sum_weight = 0.0
        rho = p0.copy()
        ps0 = self.inv_metric * p0
        ps_fwd_fwd = ps_fwd_bck = ps_bck_fwd = ps_bck_bck = ps0
        p_fwd_bck = p_bck_fwd = p0
        self._n_leapfrog = 0
        self._sum_metro = 0.0
        self._divergent = False
        depth = 0
        while depth < self.max_depth:
            if self.rng.uniform() > 0.5:
                rho_bck = rho
                p_bck_fwd, ps_bck_fwd = p_fwd_bck, ps_fwd_bck
                self._z = z_fwd
                ok, prop, ps_fwd_bck, ps_fwd_fwd, rho_fwd, p_fwd_bck, _, lsw_sub = \
                    self._build_tree(depth, 1.0, H0)
                z_fwd = self._z
            else:
                rho_fwd = rho
                p_fwd_bck, ps_fwd_bck = p_bck_fwd, ps_bck_fwd
                self._z = z_bck
                ok, prop, ps_bck_fwd, ps_bck_bck, rho_bck, p_bck_fwd, _, lsw_sub = \
                    self._build_tree(depth, -1.0, H0)
                z_bck = self._z
            if not ok:
                break
            depth += 1
            if lsw_sub > log_sum_weight or self.rng.uniform() < math.exp(lsw_sub - log_sum_weight):
                sample = prop
            log_sum_weight = np.logaddexp(log_sum_weight, lsw_sub)
            rho = rho_bck + rho_fwd
            persist = self._criterion(ps_bck_bck, ps_fwd_fwd, rho)
            persist = persist and self._criterion(ps_bck_bck, ps_fwd_bck, rho_bck + p_fwd_bck)
            persist = persist and self._criterion(ps_bck_fwd, ps_fwd_fwd, rho_fwd + p_bck_fwd)
            if not persist:
                break
        theta, p, grad, lp = sample
        accept = self._sum_metro / max(self._n_leapfrog, 1)
        stats = {
            "accept_stat": accept,
            "tree_depth": depth,
            "n_leapfrog": self._n_leapfrog,
            "divergent": self._divergent,
            "energy": -lp + self._kinetic(p),
            "step_size": self.step_size,
        }
        return (theta, lp, grad), stats


def run_chain(target, theta0, rng, num_warmup=1000, num_samples=1000, target_accept=0.8,
              max_depth=10, adapt_metric=True, step_size=1.0, inv_metric=None) -> ChainResult:
    theta = np.array(theta0, dtype=float)
    dim = theta.size
    lp, grad = target.log_prob_grad(theta)
    if not np.isfinite(lp):
        raise ValueError("initial point has non-finite log density")
    kernel = NUTS(target, dim, rng, step_size=step_size, inv_metric=inv_metric, max_depth=max_depth)
    if num_warmup > 0:
        kernel.init_step_size(theta, lp, grad)
    adapter = DualAveraging(delta=target_accept)
    adapter.restart(kernel.step_size)
    metric = WindowedMetric(dim, num_warmup) if adapt_metric else None

    warm_div = 0
    warm_acc = np.zeros(num_warmup)
    for it in range(num_warmup):
        (theta, lp, grad), st = kernel.transition(theta, lp, grad)
        warm_div += st["divergent"]
        warm_acc[it] = st["accept_stat"]
        kernel.step_size = adapter.learn(st["accept_stat"])
        if metric is not None:
            var = metric.learn(theta)
            if var is not None:
                kernel.inv_metric = var
                kernel.init_step_size(theta, lp, grad)
                adapter.restart(kernel.step_size)
    if num_warmup > 0:
        kernel.step_size = adapter.final_step_size

    draws = np.empty((num_samples, dim))
    out = {k: np.empty(num_samples) for k in ("log_prob", "accept_stat", "step_size", "energy")}
    depth = np.empty(num_samples, dtype=int)
    nleap = np.empty(num_samples, dtype=int)
    div = np.zeros(num_samples, dtype=bool)
    for it in range(num_samples):
        (theta, lp, grad), st = kernel.transition(theta, lp, grad)
        draws[it] = theta
        out["log_prob"][it] = lp
        out["accept_stat"][it] = st["accept_stat"]
        out["step_size"][it] = st["step_size"]
        out["energy"][it] = st["energy"]
        depth[it] = st["tree_depth"]
        nleap[it] = st["n_leapfrog"]
        div[it] = st["divergent"]
    return ChainResult(draws=draws, tree_depth=depth, n_leapfrog=nleap, divergent=div,
                       inv_metric=kernel.inv_metric.copy(), warmup_divergent=int(warm_div),
                       warmup_accept=warm_acc, **out)
