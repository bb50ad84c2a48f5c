"""Command-line interface: ``yespheres <pipeline> [options]``."""
from __future__ import annotations

import argparse
import json
import sys

from .errors import ConfigurationError, YeSpheresError
from .scenario import PIPELINES, PRESETS, load_scenario, run, validate

EXIT_PASS, EXIT_FAIL, EXIT_INCONCLUSIVE, EXIT_CONFIG = 0, 1, 2, 3

_COMMANDS = {"axioms": ["axioms"], "expand": ["expansions"], "ye": ["ye"],
             "spectrum": ["spectrum"], "census": ["census"], "all": None}


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="yespheres",
                                     description="Verification pipelines for prescribed-curvature spheres.")
    sub = parser.add_subparsers(dest="command", required=True)
    for name in _COMMANDS:
        p = sub.add_parser(name, help=f"run the {name} pipeline" if name != "all"
                           else "run every pipeline selected by the scenario")
        src = p.add_mutually_exclusive_group()
        src.add_argument("--scenario", help="path to a scenario JSON file")
        src.add_argument("--preset", choices=sorted(PRESETS), help="named built-in scenario")
        p.add_argument("--out", help="directory for JSON and CSV reports")
        p.add_argument("--seed", type=int, help="override the scenario seed")
        p.add_argument("--workers", type=int, default=1, help="process budget for independent probes")
        p.add_argument("--strict", action="store_true", help="reject unknown configuration keys")
    sub.add_parser("presets", help="list built-in scenarios")
    return parser


def _scenario(args):
    if args.scenario:
        sc = load_scenario(args.scenario, strict=args.strict)
    else:
        sc = validate({"preset": args.preset or "t2_flat_coscos"}, strict=args.strict)
    if args.seed is not None:
        cfg = sc.to_dict()
        cfg["seed"] = args.seed
        cfg.pop("preset", None)
        sc = validate(cfg, strict=args.strict)
    return sc


def main(argv=None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as exc:
        return EXIT_CONFIG if exc.code else EXIT_PASS
    if args.command == "presets":
        for name in sorted(PRESETS):
            print(name)
        return EXIT_PASS
    try:
        if args.workers < 1:
            raise ConfigurationError("--workers must be at least 1")
        sc = _scenario(args)
    except ConfigurationError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for w in sc.warnings:
        print(f"warning: {w}", file=sys.stderr)
    selected = _COMMANDS[args.command] or [p for p in PIPELINES if p in sc.config["pipelines"]]
    try:
        report = run(sc, args.out, workers=args.workers, pipelines=selected)
    except YeSpheresError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_FAIL
    for name, res in report.pipelines.items():
        print(f"{name:<11} {res.status.upper():<13} {res.seconds:8.2f} s")
    print(f"config hash {report.config_hash[:16]}  overall {report.status.upper()}")
    if args.out is None:
        json.dump({k: v.status for k, v in report.pipelines.items()}, sys.stdout)
        print()
    return report.exit_code()


if __name__ == "__main__":  # pragma: no cover
    sys.exit(main())
