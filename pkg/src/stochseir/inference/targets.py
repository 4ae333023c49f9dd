"""Analytic targets used to exercise the sampler in tests."""
from __future__ import annotations

import numpy as np


class StandardNormal:
    def __init__(self, dim=10):
        self.dim = dim

    def log_prob_grad(self, theta):
        return -0.5 * float(theta @ theta), -theta


class Funnel:
    """Neal's funnel: v ~ N(0, 3^2), x_i | v ~ N(0, exp(v)).

    ``centered=False`` samples (v, x_i / exp(v / 2)) instead, which makes the
    target an isotropic-ish Gaussian.
    """

    def __init__(self, dim=10, centered=True):
        self.dim = dim
        self.centered = centered

    def log_prob_grad(self, theta):
        v, x = theta[0], theta[1:]
        k = x.size
        if not self.centered:
            lp = -0.5 * (v / 3.0) ** 2 - 0.5 * float(x @ x)
            return lp, np.concatenate([[-v / 9.0], -x])
        if abs(v) > 700:
            return -np.inf, np.zeros_like(theta)
        ev = np.exp(-v)
        lp = -0.5 * (v / 3.0) ** 2 - 0.5 * k * v - 0.5 * ev * float(x @ x)
        gv = -v / 9.0 - 0.5 * k + 0.5 * ev * float(x @ x)
        return lp, np.concatenate([[gv], -ev * x])

    def to_centered(self, draws):
        """Map non-centred draws back to (v, x)."""
        if self.centered:
            return draws
        v = draws[..., :1]
        return np.concatenate([v, draws[..., 1:] * np.exp(v / 2.0)], axis=-1)
