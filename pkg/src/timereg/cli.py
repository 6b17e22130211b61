"""Command-line front end.

    timereg regularity --config heat.cfg --workers 4 --out results/heat
    timereg hypotheses --config plap.cfg
    timereg ito-check --config ou.cfg --paths 512
    timereg oracle --config heat.cfg
    timereg simulate --config heat.cfg --paths 4

Exit codes: 0 success, 1 invalid configuration or refused overwrite,
2 more than 1% of paths aborted by the solver.
"""
from __future__ import annotations

import argparse
import sys

from .experiment import ConfigError, OutputExistsError, parse_config, run_experiment

_COMMANDS = {
    "simulate": ["simulate"],
    "regularity": ["regularity"],
    "hypotheses": ["hypotheses"],
    "ito-check": ["ito"],
    "oracle": ["oracle"],
    "run": None,  # modes listed in analysis.modes
}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="timereg", description=__doc__.split("\n\n")[0])
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name)
        p.add_argument("--config", required=True, help="flat key = value config file")
        p.add_argument("--paths", type=int, help="override ensemble.paths")
        p.add_argument("--seed", type=int, help="override ensemble.seed")
        p.add_argument("--workers", type=int, default=1)
        p.add_argument("--out", help="override output.dir")
        p.add_argument("--overwrite", action="store_true", help="replace existing outputs")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = parse_config(args.config)
        overrides = {}
        if args.paths is not None:
            overrides["ensemble.paths"] = args.paths
        if args.seed is not None:
            overrides["ensemble.seed"] = args.seed
        if args.out is not None:
            overrides["output.dir"] = args.out
        if overrides:
            cfg = cfg.with_overrides(**overrides)
    except ConfigError as exc:
        for problem in exc.problems:
            print(f"config error: {problem}", file=sys.stderr)
        return 1
    if args.workers < 1:
        print("config error: --workers must be >= 1", file=sys.stderr)
        return 1
    try:
        manifest = run_experiment(cfg, args.workers, modes=_COMMANDS[args.command], overwrite=args.overwrite)
    except OutputExistsError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    for f in manifest.files:
        print(f"{f['sha256'][:12]}  {f['name']}")
    if manifest.status:
        print(f"error: {len(manifest.failures)} paths aborted (more than 1%)", file=sys.stderr)
    return manifest.status


if __name__ == "__main__":
    sys.exit(main())
