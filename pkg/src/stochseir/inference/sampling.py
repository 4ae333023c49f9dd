"""Multi-chain driver, SIR warm start and the posterior container."""
from __future__ import annotations

import logging
import multiprocessing
import os
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from . import diagnostics as diag
from .model import ModelData, Priors, SeirPosterior
from .nuts import ChainResult, run_chain

log = logging.getLogger(__name__)

WORKERS_ENV = "STOCHSEIR_WORKERS"
MAX_INIT_TRIES = 100
DIVERGENCE_WARN_FRACTION = 0.10


class InitializationError(RuntimeError):
    pass


@dataclass
class SamplerSettings:
    chains: int = 4
    warmup: int = 500
    samples: int = 500
    target_accept: float = 0.8
    max_depth: int = 10
    warm_start: bool = True
    warm_start_chains: int = 2
    warm_start_warmup: int = 200
    warm_start_samples: int = 200
    workers: int | None = None


def chain_rngs(seed, n):
    """Independent counter-based streams, one per chain index."""
    return [np.random.Generator(np.random.Philox(s)) for s in np.random.SeedSequence(seed).spawn(n)]


def default_workers(chains):
    env = os.environ.get(WORKERS_ENV)
    if env:
        return max(1, int(env))
    return max(1, min(chains, os.cpu_count() or 1))


def _chain_job(args):
    target, theta0, rng, kwargs = args
    return run_chain(target, theta0, rng, **kwargs)


def run_chains(target, inits, rngs, num_warmup, num_samples, target_accept=0.8, max_depth=10,
               workers=None) -> list[ChainResult]:
    """Run one chain per initial point; results are ordered by chain index."""
    kwargs = dict(num_warmup=num_warmup, num_samples=num_samples,
                  target_accept=target_accept, max_depth=max_depth)
    jobs = [(target, theta0, rng, kwargs) for theta0, rng in zip(inits, rngs)]
    workers = default_workers(len(jobs)) if workers is None else workers
    if workers <= 1 or len(jobs) == 1:
        return [_chain_job(j) for j in jobs]
    # spawn, not fork: JAX and numba threads do not survive a fork safely
    with ProcessPoolExecutor(max_workers=workers, mp_context=multiprocessing.get_context("spawn")) as pool:
        return list(pool.map(_chain_job, jobs))


def find_initial_point(target, draw, rng, tries=MAX_INIT_TRIES):
    for _ in range(tries):
        theta = draw(rng)
        lp, _ = target.log_prob_grad(theta)
        if np.isfinite(lp):
            return theta
    raise InitializationError(f"no finite initial log posterior after {tries} draws")


@dataclass
class PosteriorDraws:
    names: list
    draws: np.ndarray  # (iterations, chains, dim), constrained scale
    unconstrained: np.ndarray
    derived: dict = field(default_factory=dict)  # name -> (iterations, chains, T)
    diagnostics: dict = field(default_factory=dict)
    warnings: list = field(default_factory=list)

    @property
    def n_iterations(self):
        return self.draws.shape[0]

    @property
    def n_chains(self):
        return self.draws.shape[1]

    def column(self, name):
        return self.draws[:, :, self.names.index(name)]

    def scalar_names(self):
        return [n for n in self.names if not n.startswith("z[")]

    def flat(self, name):
        """Derived series or parameter with chains pooled: (draws, ...)."""
        if name in self.derived:
            x = self.derived[name]
            return x.reshape(-1, *x.shape[2:])
        return self.column(name).reshape(-1)


def collect(model: SeirPosterior, results: list[ChainResult], with_derived=True) -> PosteriorDraws:
    unc = np.stack([r.draws for r in results], axis=1)
    n_it, n_ch, dim = unc.shape
    con = np.empty_like(unc)
    for i in range(n_it):
        for c in range(n_ch):
            con[i, c] = model.constrain(unc[i, c])
    names = model.constrained_names()
    post = PosteriorDraws(names=names, draws=con, unconstrained=unc)
    if with_derived:
        series = {}
        for i in range(n_it):
            for c in range(n_ch):
                der = model.derived(unc[i, c])
                for key in ("beta", "infections", "expected_deaths", "R_t"):
                    series.setdefault(key, np.empty((n_it, n_ch, model.data.T)))[i, c] = der[key]
        post.derived = series
    post.diagnostics = chain_diagnostics(post, results)
    frac = post.diagnostics["divergent_fraction"]
    if frac > DIVERGENCE_WARN_FRACTION:
        msg = f"{100 * frac:.1f}% of post-warmup transitions diverged"
        post.warnings.append(msg)
        log.warning(msg)
    return post


def chain_diagnostics(post: PosteriorDraws, results):
    rh, ess = {}, {}
    if post.n_iterations >= 4:
        for j, name in enumerate(post.names):
            x = post.draws[:, :, j].T
            rh[name] = diag.rhat(x)
            ess[name] = diag.ess_bulk(x)
    n_div = [int(r.divergent.sum()) for r in results]
    return {
        "rhat": rh,
        "ess_bulk": ess,
        "divergences": n_div,
        "warmup_divergences": [r.warmup_divergent for r in results],
        "divergent_fraction": sum(n_div) / max(1, post.n_iterations * post.n_chains),
        "step_size": [float(r.step_size[-1]) for r in results],
        "mean_tree_depth": [float(r.tree_depth.mean()) for r in results],
        "max_tree_depth": [int(r.tree_depth.max()) for r in results],
        "mean_accept_stat": [float(r.accept_stat.mean()) for r in results],
    }


def sir_warm_start(data: ModelData, prior: Priors, settings: SamplerSettings, seed, n_chains=None):
    """Initial points for the full model from a short fit of the SIR reduction.

    Shared coordinates are drawn uniformly from the central-50% box of the SIR
    posterior (unconstrained scale); gamma1 comes from its jittered prior
    median.  The SIR seed is reused as the latent-stage seed.
    """
    n_chains = settings.chains if n_chains is None else n_chains
    full = SeirPosterior(data, prior)
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0x51])))
    sir = SeirPosterior(data, prior, sir=True)
    try:
        rngs = chain_rngs([seed, 0x5152], settings.warm_start_chains)
        inits = [find_initial_point(sir, sir.jittered_init, r) for r in rngs]
        results = run_chains(sir, inits, rngs, settings.warm_start_warmup, settings.warm_start_samples,
                             settings.target_accept, settings.max_depth, settings.workers)
    except (InitializationError, RuntimeError, ValueError) as exc:
        log.warning("SIR warm start failed (%s); falling back to prior initial values", exc)
        return [find_initial_point(full, full.jittered_init, rng) for _ in range(n_chains)], None
    pooled = np.concatenate([r.draws for r in results], axis=0)
    lo, hi = np.quantile(pooled, [0.25, 0.75], axis=0)
    g1_slice = full.layout["log_gamma1"]
    inits = []
    for _ in range(n_chains):
        def draw(r):
            u = r.uniform(lo, hi)
            theta = np.insert(u, g1_slice.start, full.jittered_init(r)[g1_slice])
            return theta
        inits.append(find_initial_point(full, draw, rng))
    return inits, (lo, hi)


def nuts_sample(data: ModelData, settings: SamplerSettings, seed, prior: Priors = Priors(),
                with_derived=True) -> PosteriorDraws:
    model = SeirPosterior(data, prior)
    box = None
    if settings.warm_start:
        inits, box = sir_warm_start(data, prior, settings, seed)
    else:
        init_rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, 0x1])))
        inits = [find_initial_point(model, model.jittered_init, init_rng) for _ in range(settings.chains)]
    rngs = chain_rngs(seed, settings.chains)
    results = run_chains(model, inits, rngs, settings.warmup, settings.samples,
                         settings.target_accept, settings.max_depth, settings.workers)
    post = collect(model, results, with_derived=with_derived)
    post.diagnostics["warm_start"] = box is not None
    post.diagnostics["initial_points"] = [model.constrain(t).tolist() for t in inits]
    return post


def max_scalar_rhat(post: PosteriorDraws):
    vals = [post.diagnostics["rhat"].get(n, np.nan) for n in post.scalar_names()]
    return float(np.nanmax(vals)) if vals else np.nan
