"""Command-line interface: ``sensq analyze`` and ``sensq simulate``.

Exit codes: 0 success, 2 input parse or validation error, 3 configuration error.
"""

from __future__ import annotations

import argparse
import math
import os
import sys
from dataclasses import replace
from pathlib import Path

import numpy as np

from . import __version__
from .core import EffectSpec, transform_for_null
from .inference import (
    EngineConfig,
    EngineMismatchError,
    average_bias_limit,
    confidence_curve,
    count_exceeding_limit,
    quantile_grid,
)
from .io import InputError, read_study_csv, write_curve_csv, write_curve_json, write_json, write_table_csv
from .pair_exact import DEFAULT_MC, SupportTooLargeError
from .scores import DegenerateScaleError, DiffMeans, MStatConfig, compute_scores
from .simulate import PRESETS, run_experiment

EXIT_OK, EXIT_INPUT, EXIT_CONFIG = 0, 2, 3
DEFAULT_GAMMA_GRID = "1,1.5,2,3,5,10,20,50,100"


class ConfigError(ValueError):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_CONFIG, f"{self.prog}: error: {message}\n")


def parse_fractions(text: str) -> list[float] | None:
    """``all``, ``start:stop:step`` (inclusive) or a comma list of fractions in (0, 1]."""
    text = text.strip()
    if text == "all":
        return None
    try:
        if ":" in text:
            start, stop, step = (float(x) for x in text.split(":"))
            if step <= 0 or start > stop:
                raise ValueError
            n = int(math.floor((stop - start) / step + 1e-9))
            fracs = [start + i * step for i in range(n + 1)]
        else:
            fracs = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse quantile grid {text!r}") from None
    if not fracs or any(not 0 < f <= 1 + 1e-12 for f in fracs):
        raise ConfigError("quantile fractions must lie in (0, 1]")
    return fracs


def parse_gamma_grid(text: str) -> list[float]:
    try:
        grid = [float(x) for x in text.split(",") if x.strip()]
    except ValueError:
        raise ConfigError(f"cannot parse gamma grid {text!r}") from None
    if not grid or any(not g >= 1 for g in grid):
        raise ConfigError("gamma grid values must be >= 1")
    return grid


def resolve_seed(seed: int | None) -> int:
    if seed is not None:
        return seed
    env = os.environ.get("SENSQ_SEED")
    if env is None:
        return 0
    try:
        return int(env)
    except ValueError:
        raise ConfigError(f"SENSQ_SEED must be an integer, got {env!r}") from None


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="sensq", description="Sensitivity analysis for quantiles of hidden biases.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    a = sub.add_parser("analyze", help="lower confidence limits for every bias quantile")
    a.add_argument("input", nargs="?", help="CSV with columns set_id,treated,outcome[,delta]")
    a.add_argument("--nhanes", metavar="PATH", help="user-supplied extract in the same CSV schema")
    a.add_argument("--stat", choices=("diff_means", "mstat"), default="diff_means")
    a.add_argument("--kappa", type=float, default=3.0, help="m-statistic truncation (inf allowed)")
    a.add_argument("--iota", type=float, default=0.0, help="m-statistic inner trimming")
    a.add_argument("--engine", choices=("auto", "pair_exact", "set_asymptotic"), default="auto")
    a.add_argument("--exact", action="store_true",
                   help="with --engine auto, use the finite-sample engine when every set is a pair")
    a.add_argument("--pair-method", choices=("exact_dp", "monte_carlo"), default="exact_dp")
    a.add_argument("--alpha", type=float, default=0.05)
    a.add_argument("--quantiles", default="all",
                   help="'all', 'start:stop:step' or comma-separated fractions of I")
    a.add_argument("--mc", type=int, default=DEFAULT_MC, help="Monte-Carlo draws")
    a.add_argument("--add-one", action="store_true", help="use (count+1)/(M+1) Monte-Carlo p-values")
    a.add_argument("--seed", type=int, default=None, help="defaults to $SENSQ_SEED, then 0")
    a.add_argument("--tol", type=float, default=1e-4)
    a.add_argument("--gamma-max", type=float, default=math.inf)
    a.add_argument("--k-min", type=int, default=1)
    a.add_argument("--gamma-grid", default=DEFAULT_GAMMA_GRID,
                   help="bias thresholds for the exceedance counts in the summary")
    a.add_argument("--format", choices=("csv", "json"), default="csv")
    a.add_argument("--null", choices=EffectSpec.KINDS, default="sharp")
    a.add_argument("--delta", type=float, default=None,
                   help="constant hypothesized effect (overrides a delta column)")
    a.add_argument("--threads", type=int, default=os.cpu_count() or 1)
    a.add_argument("--out", default=".", help="output directory")

    s = sub.add_parser("simulate", help="run a simulation preset")
    s.add_argument("--preset", required=True, help=f"one of {', '.join(sorted(PRESETS))}")
    s.add_argument("--reps", type=int, default=None, help="override the preset's replications")
    s.add_argument("--seed", type=int, default=None, help="defaults to $SENSQ_SEED, then 0")
    s.add_argument("--alpha", type=float, default=0.05)
    s.add_argument("--workers", type=int, default=1)
    s.add_argument("--out", default=".", help="output directory")
    return p


def _stat_from(args):
    if args.stat == "mstat":
        try:
            return MStatConfig(kappa=args.kappa, iota=args.iota)
        except ValueError as exc:
            raise ConfigError(str(exc)) from None
    return DiffMeans()


def cmd_analyze(args) -> int:
    if not 0 < args.alpha < 1:
        raise ConfigError("--alpha must lie in (0, 1)")
    if args.tol <= 0 or args.mc < 1 or args.threads < 1 or args.k_min < 1:
        raise ConfigError("--tol, --mc, --threads and --k-min must be positive")
    path = args.nhanes or args.input
    if path is None:
        raise ConfigError("give an input CSV or --nhanes PATH")
    if not Path(path).is_file():
        raise ConfigError(f"input file {path!r} not found")
    fractions = parse_fractions(args.quantiles)
    gamma_grid = parse_gamma_grid(args.gamma_grid)
    stat = _stat_from(args)
    seed = resolve_seed(args.seed)

    study, delta_col = read_study_csv(path)
    delta = np.full(study.n_units, args.delta) if args.delta is not None else delta_col
    study = transform_for_null(study, EffectSpec(args.null, delta))

    engine = args.engine
    if engine == "auto":
        engine = "pair_exact" if args.exact and study.is_pair_study() else "set_asymptotic"
    try:
        config = EngineConfig(engine=engine, method=args.pair_method, n_mc=args.mc, seed=seed,
                              add_one=args.add_one, threads=args.threads,
                              gamma_max=args.gamma_max, k_min=args.k_min)
    except ValueError as exc:
        raise ConfigError(str(exc)) from None
    scores = compute_scores(study, stat)
    ks = None if fractions is None else quantile_grid(study.n_sets, fractions)
    curve = confidence_curve(scores, args.alpha, config, ks=ks, tol=args.tol)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    if args.format == "csv":
        write_curve_csv(curve, out / "curve.csv")
    else:
        write_curve_json(curve, out / "curve.json")
    summary = {
        "n_sets": study.n_sets,
        "alpha": args.alpha,
        "engine": engine,
        "statistic": args.stat,
        "seed": seed,
        "statistic_value": scores.t_obs,
        "count_exceeding": [
            {"gamma0": g, "count": count_exceeding_limit(curve, g)} for g in gamma_grid
        ],
        "average_bias": (
            {g: average_bias_limit(curve, g) for g in ("identity", "log", "odds")}
            if curve.is_full() else None
        ),
    }
    write_json(summary, out / "summary.json")
    print(f"wrote {out / ('curve.' + args.format)} and {out / 'summary.json'}")
    return EXIT_OK


def cmd_simulate(args) -> int:
    if args.preset not in PRESETS:
        raise ConfigError(f"unknown preset {args.preset!r}; choose from {', '.join(sorted(PRESETS))}")
    if args.reps is not None and args.reps < 1:
        raise ConfigError("--reps must be >= 1")
    if not 0 < args.alpha < 1:
        raise ConfigError("--alpha must lie in (0, 1)")
    mode, design, extra = PRESETS[args.preset]
    design = replace(design, seed=resolve_seed(args.seed))
    if args.reps is not None:
        design = replace(design, reps=args.reps)
    result = run_experiment(design, mode, alpha=args.alpha, workers=max(1, args.workers), **extra)

    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    write_table_csv(result.table, out / f"{args.preset}.csv")
    manifest = {
        "preset": args.preset,
        "mode": mode,
        "alpha": args.alpha,
        "design": design.to_dict(),
        "options": {k: list(v) for k, v in extra.items()},
        "version": __version__,
        "summary": result.summary,
    }
    write_json(manifest, out / "manifest.json")
    print(f"wrote {out / (args.preset + '.csv')} and {out / 'manifest.json'}")
    return EXIT_OK


def main(argv=None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        if args.command == "analyze":
            return cmd_analyze(args)
        return cmd_simulate(args)
    except (InputError, DegenerateScaleError) as exc:
        print(f"sensq: input error: {exc}", file=sys.stderr)
        return EXIT_INPUT
    except (ConfigError, EngineMismatchError, SupportTooLargeError) as exc:
        print(f"sensq: configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG


if __name__ == "__main__":
    raise SystemExit(main())
