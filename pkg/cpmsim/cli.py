"""Command-line entry point: run, sweep, fig1 and validate"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from dotenv import load_dotenv

# Environment first; Settings reads it at import
load_dotenv()

from .config import ScenarioConfig, Settings, load_config  # noqa: E402
from .logging_config import LogConfig  # noqa: E402
from .models import PolicyVariant  # noqa: E402
from .output import write_run, write_sweep  # noqa: E402
from .scenarios import format_schedule, replay, toy_scenario  # noqa: E402
from .scheduler import run, sweep  # noqa: E402
from .utils import EXIT_OK, EXIT_SIMULATION_ERROR, handle_cli_errors  # noqa: E402

logger = logging.getLogger(__name__)

POLICY_CHOICES = [variant.value for variant in PolicyVariant]


def _load(path: Optional[str], seed: Optional[int] = None, duration: Optional[float] = None) -> ScenarioConfig:
    config = load_config(Path(path) if path else None)
    overrides = {}
    if seed is not None:
        overrides["scenario.seed"] = seed
    if duration is not None:
        overrides["scenario.duration_s"] = duration
    return config.with_overrides(overrides) if overrides else config


@handle_cli_errors
def cmd_run(args: argparse.Namespace) -> int:
    config = _load(args.config, args.seed, args.duration)
    result = run(config, args.policy)
    out_dir = Path(args.out) if args.out else Settings.get_output_dir()
    write_run(result, out_dir)
    summary = result.summary()
    print(
        f"{summary.scenario} {summary.policy.value} seed={summary.seed}: "
        f"rate={summary.cpm_rate_hz:.2f}Hz objects/CPM={summary.objects_per_cpm:.2f} "
        f"CBR={summary.cbr:.3f} PDR>={config.metrics.pdr_level:g} up to {summary.pdr_distance_m:g}m"
    )
    return EXIT_OK


@handle_cli_errors
def cmd_sweep(args: argparse.Namespace) -> int:
    configs = [_load(path, duration=args.duration) for path in (args.config or [None])]
    given = (args.seeds or []) + (args.seed or [])
    seeds = given if args.seeds is not None or args.seed else [configs[0].scenario.seed]
    parallel = args.parallel if args.parallel is not None else Settings.get_parallel()
    result = sweep(configs, args.policy or POLICY_CHOICES, seeds, parallel=parallel)
    out_dir = Path(args.out) if args.out else Settings.get_output_dir()
    write_sweep(result, out_dir, [c.config_hash() for c in configs], seeds)
    if not result.comparison.empty:
        print(result.comparison.to_string(index=False, float_format=lambda v: f"{v:.3f}"))
    if result.failures:
        logger.warning(f"{len(result.failures)} sweep cells failed")
        return EXIT_SIMULATION_ERROR
    return EXIT_OK


@handle_cli_errors
def cmd_fig1(args: argparse.Namespace) -> int:
    config = _load(args.config)
    objects = toy_scenario(args.scenario)
    print(f"Scenario {args.scenario}")
    for variant in args.policy or POLICY_CHOICES:
        variant = PolicyVariant(variant)
        cpms = replay(objects, config.policy(variant), size_model=config.size_model())
        print(format_schedule(cpms, variant))
    return EXIT_OK


@handle_cli_errors
def cmd_validate(args: argparse.Namespace) -> int:
    for path in args.config or [None]:
        config = load_config(Path(path) if path else None)
        print(f"{path or 'defaults'}: OK ({config.name}, hash {config.config_hash()})")
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="cpmsim", description="Collective perception V2X simulator")
    parser.add_argument("--log-level", help="Override LOG_LEVEL (DEBUG, INFO, WARNING, ERROR)")
    commands = parser.add_subparsers(dest="command", required=True)

    run_parser = commands.add_parser("run", help="Simulate one scenario under one policy")
    run_parser.add_argument("--config", help="Scenario TOML file (embedded defaults when omitted)")
    run_parser.add_argument("--policy", choices=POLICY_CHOICES, default=PolicyVariant.ETSI.value)
    run_parser.add_argument("--seed", type=int)
    run_parser.add_argument("--duration", type=float, help="Simulated seconds")
    run_parser.add_argument("--out", help="Output directory (CPMSIM_OUTPUT_DIR by default)")
    run_parser.set_defaults(handler=cmd_run)

    sweep_parser = commands.add_parser("sweep", help="Run configs x policies x seeds")
    sweep_parser.add_argument("--config", action="append", help="Scenario TOML file; repeat for several")
    sweep_parser.add_argument("--policy", action="append", choices=POLICY_CHOICES)
    sweep_parser.add_argument("--seeds", type=int, nargs="*", help="Seeds shared by both policies")
    sweep_parser.add_argument("--seed", type=int, action="append", help="One seed; repeat for several")
    sweep_parser.add_argument("--duration", type=float)
    sweep_parser.add_argument("--parallel", type=int, help="Worker processes (CPMSIM_PARALLEL by default)")
    sweep_parser.add_argument("--out")
    sweep_parser.set_defaults(handler=cmd_sweep)

    fig1_parser = commands.add_parser("fig1", help="Print the CPM schedule of a scripted toy scenario")
    fig1_parser.add_argument("--scenario", type=int, choices=[1, 2], default=1)
    fig1_parser.add_argument("--policy", action="append", choices=POLICY_CHOICES)
    fig1_parser.add_argument("--config")
    fig1_parser.set_defaults(handler=cmd_fig1)

    validate_parser = commands.add_parser("validate", help="Check configuration files without running")
    validate_parser.add_argument("--config", action="append")
    validate_parser.set_defaults(handler=cmd_validate)
    return parser


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    args = parser.parse_args(list(argv) if argv is not None else None)
    LogConfig.setup_logging(
        level=args.log_level or Settings.LOG_LEVEL, log_file=Settings.LOG_FILE, force=bool(args.log_level)
    )
    return args.handler(args)


if __name__ == "__main__":
    sys.exit(main())
