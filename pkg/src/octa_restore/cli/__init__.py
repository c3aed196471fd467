"""Command-line entry point."""

from __future__ import annotations

from .__main__ import build_parser, dispatch, main
from .progress import ProgressReporter

__all__ = ["ProgressReporter", "build_parser", "dispatch", "main"]
