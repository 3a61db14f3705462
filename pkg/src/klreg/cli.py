"""Command-line interface for running scenarios and individual stages.

Exit codes: 0 on success, 2 for configuration problems (bad file, unknown
key, invalid value), 3 for runtime failures after a valid configuration.
"""

from __future__ import annotations

import argparse
import sys
from typing import Any, Sequence

from .config import SCENARIOS, ScenarioConfig, config_hash, load_config
from .errors import ConfigError, KlregError
from .scenarios import STAGE_NAMES, run_scenario

__all__ = ["main", "build_parser"]

# Which schedule a stage's --n flag overrides.
_SCHEDULE_KEY = {
    "run": "n_schedule",
    "equipartition": "n_schedule",
    "posterior": "posterior.n_schedule",
    "predictive": "posterior.n_schedule",
    "sieve": "sieve.n_schedule",
}


def _int_list(text: str) -> list[int]:
    try:
        values = [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(
            f"expected comma-separated integers, got {text!r}"
        )
    if not values:
        raise argparse.ArgumentTypeError("expected at least one integer")
    return values


def _add_common(sub: argparse.ArgumentParser, with_n: bool) -> None:
    sub.add_argument("--config", metavar="FILE", help="TOML configuration file")
    sub.add_argument(
        "--scenario",
        choices=SCENARIOS,
        help="scenario name (overrides the config file)",
    )
    sub.add_argument("--out", metavar="DIR", help="output directory for artifacts")
    sub.add_argument("--seed", type=int, help="master seed (overrides the config)")
    sub.add_argument(
        "--replicates", type=int, help="replicate count (overrides the config)"
    )
    sub.add_argument(
        "--workers",
        type=int,
        help="thread workers for independent tasks (overrides the config)",
    )
    if with_n:
        sub.add_argument(
            "--n",
            type=_int_list,
            metavar="N1,N2,...",
            help="sample-size schedule for this command (overrides the config)",
        )


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(
        prog="klreg",
        description=(
            "Divergence-rate diagnostics for Bayesian regression: "
            "run a full scenario or a single stage."
        ),
    )
    commands = parser.add_subparsers(dest="command", required=True)

    run = commands.add_parser("run", help="run every stage of a scenario")
    _add_common(run, with_n=True)
    run.add_argument(
        "--stages",
        metavar="S1,S2,...",
        help=f"comma-separated subset of stages ({', '.join(STAGE_NAMES)})",
    )

    validate = commands.add_parser(
        "validate", help="resolve and print a configuration without running"
    )
    _add_common(validate, with_n=False)

    for stage in STAGE_NAMES:
        sub = commands.add_parser(stage, help=f"run only the {stage} stage")
        _add_common(sub, with_n=stage in _SCHEDULE_KEY)
    return parser


def _overrides_from_args(args: argparse.Namespace) -> dict[str, Any]:
    overrides: dict[str, Any] = {}
    if args.scenario is not None:
        overrides["scenario"] = args.scenario
    if args.out is not None:
        overrides["out_dir"] = args.out
    if args.seed is not None:
        overrides["seed"] = args.seed
    if getattr(args, "replicates", None) is not None:
        overrides["replicates"] = args.replicates
    if getattr(args, "workers", None) is not None:
        overrides["workers"] = args.workers
    n_list = getattr(args, "n", None)
    if n_list is not None:
        overrides[_SCHEDULE_KEY[args.command]] = n_list
    return overrides


def _print_validation(config: ScenarioConfig) -> None:
    print(f"scenario: {config['scenario']}")
    print(f"config hash: {config_hash(config)}")
    print("resolved values ('*' = set by the user):")
    for key in sorted(config.values):
        mark = "*" if key in config.user_keys else " "
        print(f"  {mark} {key} = {config.values[key]!r}")


def _print_manifest(manifest: dict) -> None:
    for stage, info in manifest["stages"].items():
        artifacts = ", ".join(info["artifacts"])
        print(f"{stage}: {info['seconds']}s -> {artifacts}")
    print(f"config hash: {manifest['config_hash']}")


def main(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    args = parser.parse_args(argv)
    try:
        config = load_config(args.config, _overrides_from_args(args))
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2

    try:
        if args.command == "validate":
            _print_validation(config)
            return 0
        if args.command == "run":
            stages = None
            if args.stages:
                stages = [s.strip() for s in args.stages.split(",") if s.strip()]
            manifest = run_scenario(config, stages=stages)
        else:
            manifest = run_scenario(config, stages=[args.command])
    except ConfigError as exc:
        print(f"configuration error: {exc}", file=sys.stderr)
        return 2
    except KlregError as exc:
        print(f"run failed: {exc}", file=sys.stderr)
        return 3
    except Exception as exc:  # pragma: no cover - unexpected failure guard
        print(f"run failed: {type(exc).__name__}: {exc}", file=sys.stderr)
        return 3
    _print_manifest(manifest)
    out = manifest["resolved_config"]["out_dir"]
    print(f"manifest: {out}/manifest.json")
    return 0


if __name__ == "__main__":  # pragma: no cover - module execution hook
    sys.exit(main())
