"""Command-line interface.

Subcommands:
  run           execute the scenarios in a config file and write a JSON report
  compare       like run, but always executes the full five-scenario lineup
  attack-sweep  run the label-inference sweep for a config
  report        render a JSON report as a readable table

Exit codes: 0 on success, 2 for configuration problems, 1 for runtime
failures. Failures print a machine-readable JSON error object to stderr.
"""

from __future__ import annotations

import argparse
import json
import sys
from dataclasses import replace

from . import experiments
from .config import COUNTING_MODES, SCENARIOS, ExperimentConfig, load_config
from .errors import ConfigError, VflsimError


def _add_common(parser: argparse.ArgumentParser, scenario_flag: bool) -> None:
    parser.add_argument("--config", required=True, help="path to an INI config file")
    parser.add_argument("--seed", type=int, help="override base_seed")
    parser.add_argument("--trials", type=int, help="override trial count")
    parser.add_argument("--out", help="write the JSON report here")
    parser.add_argument(
        "--counting-mode",
        choices=COUNTING_MODES,
        help="override the reported communication counting mode",
    )
    if scenario_flag:
        parser.add_argument(
            "--scenario",
            action="append",
            choices=SCENARIOS,
            help="override the config's scenario list (repeatable)",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="vflsim",
        description="vertical federated learning simulator with exact "
        "communication accounting",
    )
    sub = parser.add_subparsers(dest="command", required=True)
    _add_common(sub.add_parser("run", help="run configured scenarios"), True)
    _add_common(
        sub.add_parser("compare", help="run all five scenarios side by side"), False
    )
    _add_common(
        sub.add_parser("attack-sweep", help="label-inference attack sweep"), False
    )
    show = sub.add_parser("report", help="render a JSON report as text")
    show.add_argument("report_path", help="path to a report written by run/compare")
    show.add_argument(
        "--counting-mode",
        choices=COUNTING_MODES,
        help="which communication counting mode to display",
    )
    return parser


def _apply_overrides(cfg: ExperimentConfig, args: argparse.Namespace) -> ExperimentConfig:
    if args.seed is not None:
        cfg = replace(cfg, base_seed=args.seed)
    if args.trials is not None:
        if args.trials < 1:
            raise ConfigError(["--trials must be >= 1"])
        cfg = replace(cfg, trials=args.trials)
    if args.counting_mode is not None:
        cfg = replace(cfg, counting_mode=args.counting_mode)
    if getattr(args, "scenario", None):
        cfg = replace(cfg, scenarios=tuple(args.scenario))
    if args.out:
        cfg = replace(cfg, out=args.out)
    return cfg


def _emit(report: dict, cfg: ExperimentConfig) -> None:
    if cfg.out:
        experiments.save_report(report, cfg.out)
    print(experiments.report_text(report, cfg.counting_mode))


def main(argv: list[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    try:
        if args.command == "report":
            with open(args.report_path) as fh:
                report = json.load(fh)
            print(experiments.report_text(report, args.counting_mode))
            return 0
        cfg = _apply_overrides(load_config(args.config), args)
        if args.command == "run":
            report = experiments.run_experiment(cfg)
        elif args.command == "compare":
            report = experiments.run_experiment(cfg, scenarios=SCENARIOS)
        else:
            report = experiments.run_attack_sweep(cfg)
        _emit(report, cfg)
        return 0
    except ConfigError as exc:
        json.dump({"error": {"kind": "config", "problems": exc.problems}}, sys.stderr)
        sys.stderr.write("\n")
        return 2
    except (VflsimError, OSError, json.JSONDecodeError) as exc:
        json.dump(
            {"error": {"kind": type(exc).__name__, "message": str(exc)}}, sys.stderr
        )
        sys.stderr.write("\n")
        return 1


if __name__ == "__main__":
    sys.exit(main())
