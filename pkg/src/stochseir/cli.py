"""Command-line entry point: simulate, fit, postprocess, regress, report."""
from __future__ import annotations

import argparse
import logging
import sys

import numpy as np

from . import pipeline, runs
from . import simulate as sim
from .config import ConfigError, load_config
from .ingest import DataError
from .inference.sampling import WORKERS_ENV, InitializationError
from .regression import CollinearityError, DegeneratePCAError
from .spline import SmoothingError

EXIT_OK, EXIT_CONFIG, EXIT_DATA, EXIT_QUALITY = 0, 2, 3, 4
STRICT_RHAT = 1.05

log = logging.getLogger("stochseir")


def cmd_simulate(args):
    scenario = sim.load_scenario(args.scenario).validate()
    syn = sim.generate(scenario, args.seed)
    paths = sim.write(syn, args.output)
    print(f"wrote {len(paths)} files to {args.output} (config: {paths['config']})")
    return EXIT_OK


def cmd_fit(args):
    cfg = load_config(args.config)
    if args.seed is not None:
        cfg.sampler.seed = args.seed
    settings = pipeline.sampler_settings(
        cfg, chains=args.chains, warmup=args.warmup, samples=args.samples,
        target_accept=args.target_accept, warm_start=False if args.no_warm_start else None)
    cfg.sampler.chains, cfg.sampler.warmup, cfg.sampler.samples = (
        settings.chains, settings.warmup, settings.samples)
    cfg.sampler.target_accept, cfg.sampler.warm_start = settings.target_accept, settings.warm_start
    cfg.validate()
    post, meta = runs.fit(cfg, args.output, settings, cfg.sampler.seed)
    print(f"fit done in {meta['wall_time_s']:.1f} s; divergences per chain {meta['divergences']}; "
          f"max scalar R-hat {meta['max_scalar_rhat']:.3f}")
    for w in post.warnings:
        print(f"warning: {w}", file=sys.stderr)
    if args.strict:
        worst = float(np.nanmax(list(post.diagnostics["rhat"].values())))
        if not worst <= STRICT_RHAT:
            print(f"R-hat {worst:.3f} exceeds {STRICT_RHAT}", file=sys.stderr)
            return EXIT_QUALITY
    return EXIT_OK


def cmd_postprocess(args):
    cfg = load_config(args.config) if args.config else None
    summary = runs.postprocess(args.run, cfg, figures=args.figures)
    print(f"postprocess done; {summary['clamped_days']} reporting-ratio day(s) clamped at 1")
    return EXIT_OK


def cmd_regress(args):
    cfg = load_config(args.config) if args.config else None
    post = runs.regress(args.run, cfg, chains=args.chains, warmup=args.warmup,
                        samples=args.samples, seed=args.seed)
    print(f"regression done on {post.design.n} rows; max R-hat {post.diagnostics['max_rhat']:.3f}")
    return EXIT_OK


def cmd_report(args):
    written = runs.report(args.run, args.output)
    print("\n".join(str(p) for p in written))
    return EXIT_OK


def build_parser():
    p = argparse.ArgumentParser(
        prog="stochseir",
        description="Stochastic-transmission SEIR inference from reported deaths.",
        epilog=f"Set {WORKERS_ENV} to override the number of worker processes used for chains.",
    )
    p.add_argument("-v", "--verbose", action="store_true")
    sub = p.add_subparsers(dest="command", required=True)

    s = sub.add_parser("simulate", help="generate a synthetic dataset with known truth")
    s.add_argument("--scenario", default="flat", help="preset name (flat, two-wave, vaccinated) or YAML path")
    s.add_argument("--seed", type=int, default=1)
    s.add_argument("--output", required=True)
    s.set_defaults(func=cmd_simulate)

    f = sub.add_parser("fit", help="sample the posterior with NUTS")
    f.add_argument("--config", required=True)
    f.add_argument("--chains", type=int)
    f.add_argument("--warmup", type=int)
    f.add_argument("--samples", type=int)
    f.add_argument("--seed", type=int)
    f.add_argument("--target-accept", type=float)
    f.add_argument("--no-warm-start", action="store_true")
    f.add_argument("--strict", action="store_true", help=f"exit 4 when any R-hat exceeds {STRICT_RHAT}")
    f.add_argument("--output", required=True, help="run directory")
    f.set_defaults(func=cmd_fit)

    pp = sub.add_parser("postprocess", help="R_t, infections, reporting ratio summaries")
    pp.add_argument("--run", required=True, help="run directory written by fit")
    pp.add_argument("--config", help="override the configuration stored in the run directory")
    pp.add_argument("--figures", action="store_true", help="also write SVG charts")
    pp.set_defaults(func=cmd_postprocess)

    r = sub.add_parser("regress", help="regression on mobility and testing")
    r.add_argument("--run", required=True)
    r.add_argument("--config")
    r.add_argument("--chains", type=int)
    r.add_argument("--warmup", type=int)
    r.add_argument("--samples", type=int)
    r.add_argument("--seed", type=int)
    r.set_defaults(func=cmd_regress)

    rep = sub.add_parser("report", help="static SVG report from a finished run")
    rep.add_argument("--run", required=True)
    rep.add_argument("--output", help="default: <run>/report")
    rep.set_defaults(func=cmd_report)
    return p


def main(argv=None):
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    except (DataError, SmoothingError, CollinearityError, DegeneratePCAError, InitializationError) as exc:
        print(f"data error: {exc}", file=sys.stderr)
        return EXIT_DATA


if __name__ == "__main__":
    sys.exit(main())
