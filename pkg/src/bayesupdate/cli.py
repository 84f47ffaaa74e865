"""Command-line entry point: ``bayesupdate run|compare CONFIG [--seed N] [--out-dir D] [--quiet]``.

Exit codes: 0 success, 1 configuration error, 2 numerical failure.
"""
from __future__ import annotations

import argparse
import json
import logging
import sys

import numpy as np

from .errors import (
    ConfigError,
    ConvergenceError,
    EstimationError,
    EvidenceError,
    GermMismatchError,
    ModelEvaluationError,
    RankDeficiencyError,
    UnisolventError,
)
from .experiment import compare_updates, load_config, run_experiment

NUMERICAL_ERRORS = (ConvergenceError, EstimationError, EvidenceError, GermMismatchError, ModelEvaluationError,
                    RankDeficiencyError, UnisolventError, FloatingPointError, np.linalg.LinAlgError)


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="bayesupdate", description="Run polynomial-chaos Bayesian update experiments.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name, text in (("run", "run the first configured filter"),
                       ("compare", "run every configured filter on identical data")):
        p = sub.add_parser(name, help=text)
        p.add_argument("config", help="path to a JSON experiment config")
        p.add_argument("--seed", type=int, default=None, help="override the config seed")
        p.add_argument("--out-dir", default=None, help="override the output directory")
        p.add_argument("--quiet", action="store_true", help="only report errors")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    logging.basicConfig(level=logging.WARNING if args.quiet else logging.INFO, format="%(levelname)s %(message)s")
    log = logging.getLogger("bayesupdate")
    try:
        cfg = load_config(args.config, seed=args.seed, out_dir=args.out_dir)
        if args.command == "run":
            summary = run_experiment(cfg)
            brief = {k: summary[k] for k in ("model", "filter", "posterior_mean", "oracle_mean", "final_trace")
                     if k in summary}
        else:
            rows = compare_updates(cfg)
            brief = {r["filter"]: r.get("oracle_distance", r["rmse"]) for r in rows}
    except ConfigError as exc:
        print(f"config error: {exc}", file=sys.stderr)
        return 1
    except NUMERICAL_ERRORS as exc:
        print(f"numerical failure: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 2
    log.info("wrote %s", cfg.output_dir)
    if not args.quiet:
        print(json.dumps(brief, default=lambda o: np.asarray(o).tolist()))
    return 0


if __name__ == "__main__":
    sys.exit(main())
