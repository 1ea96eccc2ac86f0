"""Command-line entry point wiring argparse onto the experiment harness."""

from __future__ import annotations

import argparse
import sys
from dataclasses import replace

from .harness import ConfigError, ExperimentConfig, GRID_FUNCTION_NAMES, \
    SUBCOMMANDS, parse_config, run
from .lattice import parse_domain_spec


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="gfflab",
        description="Sign-excursion decomposition laboratory for the "
                    "metric-graph Gaussian free field.")
    parser.add_argument("--config", metavar="PATH",
                        help="config file (line-based key = value)")
    parser.add_argument("--seed", type=int, metavar="U64",
                        help="base seed, overrides the config")
    parser.add_argument("--out", metavar="DIR",
                        help="output directory, overrides the config")
    parser.add_argument("--n", type=int, metavar="U32",
                        help="refinement level, overrides the config")
    parser.add_argument("--samples", type=int, metavar="U32",
                        help="replica count, overrides the config")
    sub = parser.add_subparsers(dest="subcommand", required=True)

    sub.add_parser("sample", help="sample fields and tabulate summaries")
    p = sub.add_parser("decompose", help="decompose samples into sign clusters")
    p.add_argument("--raster", action="store_true",
                   help="dump the replica-0 cluster raster")
    p = sub.add_parser("minkowski", help="gauge ratios of the largest cluster")
    p.add_argument("--r-list", metavar="R1,R2,...",
                   help="gauge radii, overrides the config")
    p = sub.add_parser("crossing", help="annulus crossing probability scan")
    p.add_argument("--mode", choices=("metric", "discrete"))
    p = sub.add_parser("spin", help="spin-field discrepancy versus the exact value")
    p.add_argument("--f", choices=GRID_FUNCTION_NAMES, dest="f_name")
    p = sub.add_parser("stats", help="moment, sign, and height-gap checks")
    p.add_argument("check", choices=("l2", "moments", "signs", "height-gap"))
    p.add_argument("--J", metavar="all|K1,K2,...",
                   help="cluster ranks entering the moment identity")
    p.add_argument("--q", type=int, help="half the moment order")
    p.add_argument("--K", type=int, help="number of top clusters for sign tests")
    p.add_argument("--corrupt", action="store_true",
                   help="inject the corrupted sign null (run must then fail)")
    p.add_argument("--mode", choices=("metric", "discrete"))
    p.add_argument("--min-hole-vertices", type=int)
    p.add_argument("--f", choices=GRID_FUNCTION_NAMES, dest="f_name")
    p = sub.add_parser("markov", help="residual variance against the complement "
                                      "Green function")
    p.add_argument("--probes", type=int, help="number of probe vertices")
    p = sub.add_parser("conjecture", help="metric and discrete height gaps "
                                          "with their ratio")
    p.add_argument("--min-hole-vertices", type=int)
    return parser


def _apply_overrides(cfg: ExperimentConfig, args) -> ExperimentConfig:
    updates = {}
    if args.seed is not None:
        if not 0 <= args.seed < 1 << 64:
            raise ConfigError(["--seed: must be in [0, 2^64)"])
        updates["seed"] = args.seed
    if args.out is not None:
        updates["out"] = args.out
    if args.n is not None:
        if args.n < 2:
            raise ConfigError(["--n: must be >= 2"])
        updates["n"] = args.n
    if args.samples is not None:
        if args.samples < 1:
            raise ConfigError(["--samples: must be >= 1"])
        updates["samples"] = args.samples
    bounds = {"q": 1, "K": 2, "min_hole_vertices": 4, "probes": 1}
    for attr in ("mode", "f_name", "q", "K", "min_hole_vertices", "probes"):
        val = getattr(args, attr, None)
        if val is not None:
            if attr in bounds and val < bounds[attr]:
                flag = "--" + attr.replace("_", "-")
                raise ConfigError([f"{flag}: must be >= {bounds[attr]}"])
            updates[attr] = val
    if getattr(args, "check", None) is not None:
        updates["check"] = args.check
    if getattr(args, "corrupt", False):
        updates["corrupt"] = True
    if getattr(args, "J", None) is not None:
        if args.J == "all":
            updates["J"] = "all"
        else:
            try:
                ranks = tuple(int(t) for t in args.J.split(","))
            except ValueError:
                raise ConfigError(["--J: expected 'all' or comma separated ranks"]) from None
            if not ranks or min(ranks) < 1:
                raise ConfigError(["--J: cluster ranks are 1-based"])
            updates["J"] = ranks
    if getattr(args, "r_list", None) is not None:
        try:
            radii = tuple(float(t) for t in args.r_list.split(","))
        except ValueError:
            raise ConfigError(["--r-list: expected comma separated radii"]) from None
        if not radii or not all(0.0 < r < 1.0 for r in radii):
            raise ConfigError(["--r-list: radii must lie in (0, 1)"])
        updates["r_list"] = radii
    return replace(cfg, **updates)


def main(argv=None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.config is not None:
            with open(args.config, encoding="utf-8") as fh:
                cfg = parse_config(fh.read())
        else:
            cfg = ExperimentConfig()
        cfg = _apply_overrides(cfg, args)
    except ConfigError as exc:
        for line in exc.errors:
            print(f"config error: {line}", file=sys.stderr)
        return 2
    except OSError as exc:
        print(f"cannot read config: {exc}", file=sys.stderr)
        return 2
    return run(cfg, args.subcommand, raster=getattr(args, "raster", False))


if __name__ == "__main__":
    sys.exit(main())
