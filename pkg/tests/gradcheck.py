"""Finite-difference checks of the posterior gradient."""
import numpy as np


def random_point(model, rng):
    """A plausible random parameter point, built on the constrained scale."""
    d = model.data
    p = {
        "z": rng.standard_normal(d.T - 1),
        "eta0": np.log(3 * 0.4 / 2) + rng.normal(0, 0.2),
        "gamma1": rng.uniform(0.9, 1.1),
        "gamma2": rng.uniform(0.35, 0.55, d.n_gamma2),
        "sigma": rng.uniform(0.02, 0.2, d.n_waves),
        "inv_phi": rng.uniform(0.02, 0.5),
        "ifr": rng.uniform(0.005, 0.015, d.n_ifr),
        "seed_size": rng.uniform(5, 100),
    }
    return model.pack(p)


def fd_relative_errors(model, theta, rel_h=1e-5, floor=1e-2):
    """Per-coordinate |analytic - central FD| / max(|FD|, floor)."""
    _, g = model.log_prob_grad(theta)
    fd = np.empty_like(theta)
    for i in range(theta.size):
        h = rel_h * max(abs(theta[i]), 1.0)
        tp, tm = theta.copy(), theta.copy()
        tp[i] += h
        tm[i] -= h
        fd[i] = (model.log_prob(tp) - model.log_prob(tm)) / (2 * h)
    return np.abs(g - fd) / np.maximum(np.abs(fd), floor)
