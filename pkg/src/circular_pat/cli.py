"""circular-pat command line

    circular-pat phantom  --config exp.yaml --out out/
    circular-pat forward  --config exp.yaml --out out/
    circular-pat invert   --config exp.yaml --data out/pressure.rvl --out out/
    circular-pat pipeline --config exp.yaml --out out/
    circular-pat selftest [--check NAME ...]
"""

from __future__ import annotations

import argparse
import sys
from collections.abc import Sequence
from pathlib import Path

import yaml

from circular_pat import pipeline
from circular_pat.ansi_colors import ColorCodes
from circular_pat.config import ExperimentConfig, load_config
from circular_pat.exceptions import CircularPATError, CommandError
from circular_pat.logging import get_logger, set_quiet
from circular_pat.selftest import CHECKS, format_report, run_selftest
from circular_pat.utils import list_items, log_section

logger = get_logger(__name__)

EXIT_OK = 0
EXIT_FAILED = 1


def _parse_override(text: str) -> tuple[str, str]:
    if "=" not in text:
        raise argparse.ArgumentTypeError(f"Expected KEY=VALUE: {text}")
    key, value = text.split("=", 1)
    return key.strip(), value


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="circular-pat", description="Circular-detector PAT and toroidal Radon tools")
    parser.add_argument("-q", "--quiet", action="store_true", help="Only log warnings and errors")
    sub = parser.add_subparsers(dest="command", required=True)

    def experiment(name: str, help: str) -> argparse.ArgumentParser:
        p = sub.add_parser(name, help=help)
        p.add_argument("-c", "--config", type=Path, help="Experiment YAML file (built-in defaults when omitted)")
        p.add_argument("-o", "--out", type=Path, help="Output directory (output_dir of the config by default)")
        p.add_argument(
            "-s",
            "--set",
            dest="overrides",
            action="append",
            type=_parse_override,
            default=[],
            metavar="KEY=VALUE",
            help="Override a dotted config key, eg. geometry.r_det=0.2",
        )
        return p

    experiment("phantom", "Sample the phantom on the reconstruction grid")
    experiment("forward", "Simulate the detector data of the experiment")
    invert = experiment("invert", "Reconstruct from a data file written by 'forward'")
    invert.add_argument("-d", "--data", type=Path, required=True, help="sinogram.rvl or pressure.rvl")
    experiment("pipeline", "phantom -> forward -> invert")

    selftest = sub.add_parser("selftest", help="Check the numerical identities the inversions rely on")
    selftest.add_argument("--check", dest="checks", action="append", choices=list(CHECKS), help="Run only these checks")
    return parser


def _load(args: argparse.Namespace) -> tuple[ExperimentConfig, Path]:
    overrides = {key: yaml.safe_load(value) for key, value in args.overrides}
    config = load_config(args.config, overrides)
    out_dir = args.out or config.output_dir
    out_dir.mkdir(parents=True, exist_ok=True)
    return config, out_dir


def run(args: argparse.Namespace) -> int:
    if args.command == "selftest":
        log_section("Self-test")
        results = run_selftest(args.checks)
        print(format_report(results))
        failed = [r.name for r in results if not r.passed]
        if failed:
            logger.error(f"Failed checks:\n{list_items(failed)}")
            return EXIT_FAILED
        return EXIT_OK

    config, out_dir = _load(args)
    log_section(f"{args.command} ({config.kind})")
    match args.command:
        case "phantom":
            pipeline.run_phantom(config, out_dir)
        case "forward":
            pipeline.run_forward(config, out_dir)
        case "invert":
            pipeline.run_invert(config, args.data, out_dir)
        case "pipeline":
            pipeline.run_pipeline(config, out_dir)
    log_section("Done", sub_section=True)
    return EXIT_OK


def main(argv: Sequence[str] | None = None) -> int:
    args = build_parser().parse_args(argv)
    set_quiet(args.quiet)
    try:
        return run(args)
    except CommandError as e:
        logger.error(str(e))
        return e.exit_code
    except CircularPATError as e:
        logger.error(f"{type(e).__name__}: {e}", color_code=ColorCodes.RED)
        return EXIT_FAILED


if __name__ == "__main__":
    sys.exit(main())
