"""Latent log transmission rate: a driftless random walk with per-wave volatility.

The path is sampled in non-centred form: the sampler sees standard-normal
increments ``z`` and the volatilities only enter through reconstruction.
"""
from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

LOG_SQRT_2PI = 0.5 * np.log(2.0 * np.pi)


@dataclass(frozen=True)
class WaveSchedule:
    """Segments ``[b_k, b_{k+1})`` of the increment index, one sigma each.

    ``boundaries`` holds the interior start days; an empty tuple means a
    single segment covering the whole window.
    """

    boundaries: tuple = ()
    sigmas: tuple = (1.0,)

    def __post_init__(self):
        b = tuple(int(x) for x in self.boundaries)
        object.__setattr__(self, "boundaries", b)
        object.__setattr__(self, "sigmas", tuple(float(s) for s in self.sigmas))
        if any(b2 <= b1 for b1, b2 in zip(b, b[1:])):
            raise ValueError("wave boundaries must be strictly increasing")
        if b and b[0] <= 0:
            raise ValueError("wave boundaries must lie inside the window")
        if len(self.sigmas) != len(b) + 1:
            raise ValueError(f"need {len(b) + 1} sigmas, got {len(self.sigmas)}")
        if any(s < 0 for s in self.sigmas):
            raise ValueError("sigmas must be non-negative")

    @property
    def n_waves(self):
        return len(self.boundaries) + 1

    def segment_index(self, n_increments):
        """Wave id for each increment ``z[i]`` (the step from day i to i + 1)."""
        return np.searchsorted(np.asarray(self.boundaries, dtype=int),
                               np.arange(n_increments), side="right")

    def with_sigmas(self, sigmas):
        return WaveSchedule(self.boundaries, tuple(sigmas))


@dataclass(frozen=True)
class LatentPath:
    eta: np.ndarray
    z: np.ndarray
    eta0: float

    @property
    def beta(self):
        return np.exp(self.eta)

    def __len__(self):
        return len(self.eta)


def reconstruct_path(eta0, z, schedule: WaveSchedule) -> LatentPath:
    z = np.asarray(z, dtype=float)
    sig = np.asarray(schedule.sigmas)[schedule.segment_index(len(z))]
    eta = np.empty(len(z) + 1)
    eta[0] = eta0
    np.cumsum(sig * z, out=eta[1:])
    eta[1:] += eta0
    return LatentPath(eta=eta, z=z, eta0=float(eta0))


def path_log_prior(z) -> float:
    z = np.asarray(z, dtype=float)
    return float(-0.5 * np.dot(z, z) - LOG_SQRT_2PI * z.size)


def path_gradients(eta_bar, z, schedule: WaveSchedule):
    """Pull dL/d eta back onto (eta0, z, sigmas).

    Returns ``(eta0_bar, z_bar, sigma_bar)`` where ``sigma_bar`` has one entry
    per wave.
    """
    z = np.asarray(z, dtype=float)
    seg = schedule.segment_index(len(z))
    sig = np.asarray(schedule.sigmas)[seg]
    # eta[t] depends on z[i] for all i < t
    tail = np.cumsum(eta_bar[::-1])[::-1][1:]
    z_bar = tail * sig
    sigma_bar = np.bincount(seg, weights=tail * z, minlength=schedule.n_waves)
    return float(eta_bar.sum()), z_bar, sigma_bar


def simulate_path(eta0, schedule: WaveSchedule, T, rng) -> LatentPath:
    z = rng.standard_normal(T - 1)
    return reconstruct_path(eta0, z, schedule)
