"""
Command-line entry point.

    python -m app convergence --profile ci --seed 3 --out results/
    python -m app compare --config my.json --delta 2
    python -m app validate
    python -m app validate --profile ci --acceptance
"""

import argparse
import logging
import sys
from pathlib import Path
from typing import Optional, Sequence

from app.core.config import settings
from app.core.logger import configure_logging, get_logger, run_context
from app.schemas.experiment import ExperimentConfig, load_config, load_profile, with_overrides
from app.schemas.results import ValidationReport
from app.services.acceptance import run_acceptance
from app.services.experiments import ExperimentService
from app.services.persistence import write_json
from app.services.validation import run_validation

logger = get_logger(__name__)

COMMANDS = ("convergence", "sweep-delta", "sweep-quant", "compare", "validate")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="holotts", description="Two-timescale holographic MIMO beamforming experiments")
    parser.add_argument("command", choices=COMMANDS)
    parser.add_argument("--config", type=Path, help="JSON experiment config (replaces the profile)")
    parser.add_argument("--profile", choices=("table1", "ci"), default=None, help="built-in profile")
    parser.add_argument("--seed", type=int, help="master seed")
    parser.add_argument("--out", type=Path, help="output directory")
    parser.add_argument("--delta", type=float, nargs="+", help="QoS threshold(s) in bits/s/Hz")
    parser.add_argument("--replications", type=int, help="independent long intervals per setting")
    parser.add_argument("--workers", type=int, help="threads for per-sample / per-slot work")
    parser.add_argument("--log-level", default=None, help="override LOG_LEVEL")
    parser.add_argument(
        "--acceptance", action="store_true", help="validate: also run the profile-level acceptance checks"
    )
    return parser


def resolve_config(args: argparse.Namespace) -> ExperimentConfig:
    if args.config is not None:
        config = load_config(args.config)
    else:
        config = load_profile(args.profile or settings.DEFAULT_PROFILE)
    delta_grid = list(args.delta) if args.delta else None
    return with_overrides(
        config,
        seed=args.seed,
        output_dir=str(args.out) if args.out is not None else None,
        delta_grid=delta_grid,
        delta=delta_grid[0] if delta_grid else None,
        replications=args.replications,
        workers=args.workers,
    )


def _validate(config: ExperimentConfig, out: Path, acceptance: bool = False) -> ValidationReport:
    report = run_validation(seed=config.seed)
    if acceptance:
        extra = run_acceptance(ExperimentService(config))
        report = ValidationReport(passed=report.passed and extra.passed, checks=report.checks + extra.checks)
    write_json(out / "validation.json", report)
    return report


def main(argv: Optional[Sequence[str]] = None) -> int:
    args = build_parser().parse_args(argv)
    configure_logging(logging.getLevelName(args.log_level.upper()) if args.log_level else None)

    try:
        config = resolve_config(args)
    except (KeyError, ValueError, OSError) as exc:
        logger.error("Invalid configuration: %s", exc)
        return 2

    with run_context(config.config_hash(), config.seed):
        return _dispatch(args.command, config, acceptance=args.acceptance)


def _dispatch(command: str, config: ExperimentConfig, acceptance: bool = False) -> int:
    if command == "validate":
        report = _validate(config, Path(config.output_dir), acceptance)
        if not report.passed:
            logger.error("Validation failed: %s", ", ".join(c.name for c in report.failures))
            return 1
        logger.info("Validation passed (%s checks)", len(report.checks))
        return 0

    service = ExperimentService(config)
    if command == "convergence":
        service.run_convergence()
    elif command == "sweep-delta":
        service.run_sweep_delta()
    elif command == "sweep-quant":
        service.run_sweep_quant()
    elif command == "compare":
        service.run_compare()
    return 0


if __name__ == "__main__":
    sys.exit(main())
