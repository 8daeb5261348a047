"""Command-line entry point.

    swarmlink run <scenario> --out <dir> [--seed N]
    swarmlink sweep <scenario> --param <name> --values a,b,c --out <dir>
    swarmlink validate <scenario>
    swarmlink fixtures --out <dir>

Exit codes: 0 success, 1 usage or config error, 2 experiment failure (for
example an unrecovered link in a reconnect run). The SWARMLINK_LOG
environment variable sets the log level (DEBUG, INFO, WARNING, ...).
"""

from __future__ import annotations

import argparse
import logging
import os
import sys
from pathlib import Path

from . import __version__, fixtures, scenario

logger = logging.getLogger("swarmlink")

EXIT_OK = 0
EXIT_CONFIG = 1
EXIT_EXPERIMENT = 2


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="swarmlink",
        description="Deterministic multi-UAV swarm simulator")
    parser.add_argument("--version", action="version", version=f"swarmlink {__version__}")
    sub = parser.add_subparsers(dest="command", required=True)

    run = sub.add_parser("run", help="run one scenario and write its reports")
    run.add_argument("scenario", type=Path)
    run.add_argument("--out", type=Path, required=True, help="output directory")
    run.add_argument("--seed", type=int, default=None, help="override the config seed")

    swp = sub.add_parser("sweep", help="run a scenario once per parameter value")
    swp.add_argument("scenario", type=Path)
    swp.add_argument("--param", required=True, choices=scenario.SWEEPABLE)
    swp.add_argument("--values", required=True,
                     help="comma-separated values, e.g. 4,8,12 or -8:-2 for intervals")
    swp.add_argument("--out", type=Path, required=True)
    swp.add_argument("--seed", type=int, default=None)

    val = sub.add_parser("validate", help="parse and check a scenario without running")
    val.add_argument("scenario", type=Path)

    fix = sub.add_parser("fixtures", help="write the golden fixture scenarios")
    fix.add_argument("--out", type=Path, required=True)
    return parser


def _load_config(path: Path, seed_override=None):
    if not path.exists():
        raise FileNotFoundError(f"scenario file not found: {path}")
    cfg = scenario.parse_scenario(path.read_text())
    if seed_override is not None:
        cfg.seed = seed_override
    return cfg


def cmd_run(args) -> int:
    try:
        cfg = _load_config(args.scenario, args.seed)
    except (scenario.ScenarioError, FileNotFoundError, OSError) as exc:
        _report_config_error(exc)
        return EXIT_CONFIG
    _warn_remainder(cfg)
    report = scenario.run_experiment(cfg, out_dir=args.out)
    for path in report.files:
        logger.info("wrote %s", path)
    if report.failed:
        print(f"experiment failed: {report.status}", file=sys.stderr)
        return EXIT_EXPERIMENT
    return EXIT_OK


def cmd_sweep(args) -> int:
    try:
        cfg = _load_config(args.scenario, args.seed)
        values = [v for v in args.values.split(",") if v != ""]
        if not values:
            raise scenario.ScenarioError(["--values is empty"])
        reports = scenario.sweep(cfg, args.param, values, out_dir=args.out)
    except (scenario.ScenarioError, FileNotFoundError, OSError) as exc:
        _report_config_error(exc)
        return EXIT_CONFIG
    if any(r.failed for r in reports):
        print("one or more sweep values failed", file=sys.stderr)
        return EXIT_EXPERIMENT
    return EXIT_OK


def cmd_validate(args) -> int:
    try:
        cfg = _load_config(args.scenario)
    except (scenario.ScenarioError, FileNotFoundError, OSError) as exc:
        _report_config_error(exc)
        return EXIT_CONFIG
    _warn_remainder(cfg)
    print(scenario.serialize_scenario(cfg))
    return EXIT_OK


def cmd_fixtures(args) -> int:
    try:
        written = fixtures.write_fixtures(args.out)
    except OSError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_CONFIG
    for path in written:
        print(path)
    return EXIT_OK


def _warn_remainder(cfg) -> None:
    if cfg.remainder() > 1e-9:
        print(f"warning: duration {cfg.duration:g} s is not divisible by "
              f"dt {cfg.dt:g} s; remainder {cfg.remainder():.6g} s is discarded",
              file=sys.stderr)


def _report_config_error(exc) -> None:
    if isinstance(exc, scenario.ScenarioError):
        for problem in exc.problems:
            print(f"error: {problem}", file=sys.stderr)
    else:
        print(f"error: {exc}", file=sys.stderr)


def main(argv=None) -> int:
    level = os.environ.get("SWARMLINK_LOG", "WARNING").upper()
    logging.basicConfig(level=getattr(logging, level, logging.WARNING),
                        format="%(levelname)s %(name)s: %(message)s")
    args = build_parser().parse_args(argv)
    handler = {"run": cmd_run, "sweep": cmd_sweep,
               "validate": cmd_validate, "fixtures": cmd_fixtures}[args.command]
    return handler(args)


if __name__ == "__main__":
    sys.exit(main())
