"""Command-line interface of the OCTA restoration toolkit."""

from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from collections.abc import Sequence
from typing import NoReturn

from octa_restore import __version__
from octa_restore.detect import SpreadMode
from octa_restore.errors import OctaRestoreError
from octa_restore.event_bus import EventBus
from octa_restore.metrics import ProjectionStatistic
from octa_restore.patch import DEFAULT_PATCH_COUNT, DEFAULT_PATCH_WIDTH, DEFAULT_TRIM
from octa_restore.repair import RepairMode

from . import commands
from .progress import ProgressReporter

logger = logging.getLogger(__name__)

EXIT_OK = 0
EXIT_USAGE = 1
EXIT_DATA = 2


class UsageError(Exception):
    """Raised by the parser instead of exiting."""

    def __init__(self, usage: str, message: str) -> None:
        """Keep the usage text next to the message."""
        super().__init__(message)
        self.usage = usage


class _Parser(argparse.ArgumentParser):
    def error(self, message: str) -> NoReturn:
        raise UsageError(self.format_usage(), message)


def _add_plan_args(parser: argparse.ArgumentParser) -> None:
    parser.add_argument(
        "--patch", type=int, default=DEFAULT_PATCH_WIDTH, help="Patch width"
    )
    parser.add_argument(
        "--count", type=int, default=DEFAULT_PATCH_COUNT, help="Patches per scan"
    )
    parser.add_argument(
        "--trim", type=int, default=DEFAULT_TRIM, help="Discarded patch margin"
    )


def _add_detector_args(
    parser: argparse.ArgumentParser, config_flags: tuple[str, ...] = ("--dconfig",)
) -> None:
    parser.add_argument(*config_flags, dest="dconfig", help="Detector config JSON")
    parser.add_argument("--tau-l", type=float, help="Lower threshold coefficient")
    parser.add_argument("--tau-u", type=float, help="Upper threshold coefficient")
    parser.add_argument("--window-l", type=int, help="Lower threshold neighbourhood")
    parser.add_argument("--window-u", type=int, help="Upper threshold neighbourhood")
    parser.add_argument("--spread", choices=[m.value for m in SpreadMode])


def build_parser() -> argparse.ArgumentParser:
    """Create the argument parser with every sub-command."""
    parser = _Parser(
        prog="octa-restore",
        description="Detect and repair defective OCTA B-scans",
    )
    parser.add_argument("--log-level", default=os.getenv("LOG_LEVEL", "INFO"))
    parser.add_argument(
        "--jobs", type=int, default=None, help="Worker threads for per-scan work"
    )
    parser.add_argument(
        "--version", action="version", version=f"octa-restore {__version__}"
    )
    sub = parser.add_subparsers(dest="command", metavar="COMMAND")

    synth = sub.add_parser("synth", help="Generate a phantom OCT/OCTA pair")
    synth.add_argument("--config", help="Phantom config JSON")
    synth.add_argument("--out-oct", required=True)
    synth.add_argument("--out-octa", required=True)
    synth.add_argument("--truth", help="Ground-truth JSON output")
    synth.add_argument("--bounds-out", help="Layer bounds JSON output")
    synth.add_argument("--defects", help="Injected defects, e.g. '7:blink,12:motion'")
    synth.add_argument("--motion-gain", type=float, default=3.0)
    synth.add_argument("--seed", type=int)
    synth.set_defaults(handler=commands.cmd_synth)

    detect = sub.add_parser("detect", help="Label defective scans")
    detect.add_argument("--in", dest="input", required=True)
    detect.add_argument(
        "--out", "--report", dest="report", help="Also write the labels here"
    )
    _add_detector_args(detect, ("--config", "--dconfig"))
    detect.set_defaults(handler=commands.cmd_detect)

    patchplan = sub.add_parser("patchplan", help="Show the stitch plan for a width")
    patchplan.add_argument("--width", type=int, required=True)
    _add_plan_args(patchplan)
    patchplan.set_defaults(handler=commands.cmd_patchplan)

    train = sub.add_parser("train", help="Train the network on volume pairs")
    train.add_argument(
        "--data", required=True, help="Directory of *.oct.vol/*.octa.vol pairs"
    )
    train.add_argument("--ucfg", help="Network config JSON")
    train.add_argument("--tcfg", help="Training config JSON")
    train.add_argument("--out", required=True, help="Checkpoint output")
    train.add_argument("--log", help="Loss CSV output")
    train.add_argument("--epochs", type=int)
    train.add_argument("--seed", type=int)
    train.add_argument("--patches-per-scan", type=int, default=100)
    train.add_argument(
        "--patch", type=int, default=DEFAULT_PATCH_WIDTH, help="Patch width"
    )
    train.add_argument(
        "--pad",
        type=int,
        help="Shared axial size (default: tallest volume, rounded up)",
    )
    _add_detector_args(train)
    train.set_defaults(handler=commands.cmd_train)

    infer = sub.add_parser("infer", help="Generate OCTA scans from OCT")
    infer.add_argument("--oct", required=True)
    infer.add_argument("--model", required=True)
    infer.add_argument("--out", required=True)
    infer.add_argument("--scans", help="Comma separated scan indices (default: all)")
    _add_plan_args(infer)
    infer.set_defaults(handler=commands.cmd_infer)

    repair = sub.add_parser("repair", help="Replace defective OCTA scans")
    repair.add_argument("--oct", required=True)
    repair.add_argument("--octa", required=True)
    repair.add_argument("--model", required=True)
    repair.add_argument("--out", required=True)
    repair.add_argument("--png", help="Annotated projection output")
    repair.add_argument("--bounds", help="Layer bounds JSON for the projection")
    repair.add_argument(
        "--mode", choices=[m.value for m in RepairMode], default=RepairMode.BOTH.value
    )
    _add_detector_args(repair)
    _add_plan_args(repair)
    repair.set_defaults(handler=commands.cmd_repair)

    project = sub.add_parser("project", help="Write an en-face projection PNG")
    project.add_argument("--in", dest="input", required=True)
    project.add_argument("--bounds", help="Layer bounds JSON")
    project.add_argument(
        "--statistic",
        choices=[s.value for s in ProjectionStatistic],
        default=ProjectionStatistic.MEAN.value,
    )
    project.add_argument("--png", required=True)
    project.set_defaults(handler=commands.cmd_project)

    evaluate = sub.add_parser("eval", help="Compare two volumes")
    evaluate.add_argument("--a", required=True, help="Reference volume")
    evaluate.add_argument("--b", required=True, help="Generated volume")
    evaluate.add_argument("--bounds", help="Layer bounds JSON")
    evaluate.add_argument("--intact", help="Comma separated scans for the B-scan row")
    evaluate.add_argument("--report", help="Report JSON output")
    evaluate.set_defaults(handler=commands.cmd_eval)

    importer = sub.add_parser("import", help="Wrap a raw float32 file")
    importer.add_argument("--raw", required=True)
    importer.add_argument("--dims", required=True, help="S,A,L")
    importer.add_argument("--out", required=True)
    importer.set_defaults(handler=commands.cmd_import)

    calibrate = sub.add_parser("calibrate", help="Fit detector thresholds on phantoms")
    calibrate.add_argument("--config", help="Phantom config JSON")
    calibrate.add_argument("--phantoms", type=int, default=5)
    calibrate.add_argument("--n-blink", type=int, default=5)
    calibrate.add_argument("--n-motion", type=int, default=5)
    calibrate.add_argument("--seed", type=int, default=1000)
    calibrate.add_argument("--out", help="Detector config JSON output")
    _add_detector_args(calibrate)
    calibrate.set_defaults(handler=commands.cmd_calibrate)
    return parser


def dispatch(argv: Sequence[str] | None = None) -> int:
    """Run one command and return its exit code.

    0 on success, 1 on usage errors, 2 on data, configuration or I/O errors.
    Reports are written to stdout as JSON; logs go to stderr.
    """
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        sys.stderr.write(exc.usage)
        sys.stderr.write(f"octa-restore: error: {exc}\n")
        return EXIT_USAGE
    except SystemExit as exc:  # --help / --version
        return int(exc.code or 0)
    if args.command is None:
        parser.print_usage(sys.stderr)
        return EXIT_USAGE

    logging.basicConfig(
        level=getattr(logging, str(args.log_level).upper(), logging.INFO),
        stream=sys.stderr,
    )
    bus = EventBus()
    ProgressReporter(bus)
    try:
        report = args.handler(args, bus)
    except (OctaRestoreError, OSError) as exc:
        sys.stderr.write(f"error: {exc}\n")
        logger.debug("Command %s failed", args.command, exc_info=True)
        return EXIT_DATA
    if report is not None:
        sys.stdout.write(json.dumps(report, indent=2) + "\n")
    return EXIT_OK


def main() -> None:  # pragma: no cover - thin CLI entry point
    """Parse CLI arguments, run the command and exit with its code."""
    try:
        code = dispatch()
    except KeyboardInterrupt:  # pragma: no cover - manual interruption
        logger.info("Interrupted by user")
        code = 130
    sys.exit(code)


if __name__ == "__main__":
    main()
