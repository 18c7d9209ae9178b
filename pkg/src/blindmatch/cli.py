"""Command line entry point.

Usage::

    blindmatch <experiment> --config <path> [--out <dir>] [--seeds a,b,c]
               [--time-limit s] [--solver name]

where ``<experiment>`` is one of shuffle, small_scale, larger_scale,
solver_bench, unsup_classify. The config is JSON; command line flags override
the corresponding config fields. Exit code 0 on success, 1 on any fatal error.
"""

from __future__ import annotations

import argparse
import json
import sys

from .exceptions import BlindmatchError
from .pipeline import EXPERIMENT_KINDS, ExperimentConfig, run_experiment


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="blindmatch", description=__doc__)
    parser.add_argument("experiment", choices=EXPERIMENT_KINDS)
    parser.add_argument("--config", required=True, help="path to a JSON experiment config")
    parser.add_argument("--out", help="output directory (overrides config out_dir)")
    parser.add_argument("--seeds", help="comma-separated seed list override, e.g. 0,1,2")
    parser.add_argument("--time-limit", type=float, help="per-solve time limit in seconds")
    parser.add_argument("--solver", help="LAP mode for the dual-ascent solver: jv or auction")
    return parser


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        cfg = ExperimentConfig.from_file(args.config)
        if cfg.kind != args.experiment:
            raise BlindmatchError(
                f"config kind {cfg.kind!r} does not match requested experiment {args.experiment!r}"
            )
        if args.out:
            cfg.out_dir = args.out
        if args.seeds:
            cfg.seeds = [int(s) for s in args.seeds.split(",") if s.strip() != ""]
        if args.time_limit is not None:
            cfg.solver = dict(cfg.solver, time_limit=args.time_limit)
        if args.solver:
            cfg.solver = dict(cfg.solver, lap=args.solver)
        cfg.validate()
        result = run_experiment(cfg)
    except BlindmatchError as exc:
        print(f"error [{exc.code}]: {exc}", file=sys.stderr)
        return 1
    except (ValueError, OSError) as exc:
        print(f"error: {exc}", file=sys.stderr)
        return 1
    summary = result.aggregates if hasattr(result, "aggregates") else result.get("aggregates", {})
    if not summary and isinstance(result, dict) and "curves" in result:
        summary = {name: f"{len(curve)} levels" for name, curve in result["curves"].items()}
    print(json.dumps({"experiment": args.experiment, "summary": summary}, indent=2, default=str))
    return 0


if __name__ == "__main__":
    sys.exit(main())
