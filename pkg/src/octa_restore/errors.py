"""Exception hierarchy shared by all pipeline stages."""

from __future__ import annotations

from pathlib import Path


class OctaRestoreError(Exception):
    """Base class for every error raised by the toolkit."""


class DataError(OctaRestoreError):
    """Raised when input data violates a documented contract."""


class ConfigError(OctaRestoreError):
    """Raised when a configuration value is out of range or unknown."""


class FormatError(DataError):
    """Malformed binary container; ``offset`` points at the offending byte."""

    def __init__(self, message: str, *, offset: int) -> None:
        """Store the byte offset alongside the message."""
        super().__init__(f"{message} (offset {offset})")
        self.offset = offset


class BadMagic(FormatError):
    """The file does not start with the expected magic tag."""


class TruncatedFile(FormatError):
    """The file ends before the declared header or payload does."""


class UnsupportedDtype(FormatError):
    """The header declares a dtype code other than float32-LE."""


class IoFailure(DataError):
    """Reading or writing a file failed at the operating-system level."""

    def __init__(self, path: Path | str, reason: str) -> None:
        """Keep the path so that callers can report it."""
        super().__init__(f"{path}: {reason}")
        self.path = Path(path)


class AxialTooLarge(DataError):
    """Volume is taller than the requested axial padding target."""


class WindowTooLarge(DataError):
    """Neighbourhood window exceeds the number of available scans."""


class ScanTooNarrow(DataError):
    """B-scan is narrower than the patch width."""


class InsufficientOverlap(DataError):
    """Patch count, width and trim cannot be honoured for a scan width."""


class PlanMismatch(DataError):
    """Patches handed to the stitcher do not match the stitch plan."""


class ShapeMismatch(DataError):
    """Two arrays that must share a shape do not."""


class EmptyDataset(DataError):
    """Training was requested without any patch pairs."""


class ImageTooSmall(DataError):
    """Image is smaller than the SSIM window."""


class InvalidBounds(DataError):
    """Layer bounds are inconsistent with the volume."""


class IndexOutOfRange(DataError):
    """A scan index lies outside the volume or is repeated."""


class DimMismatch(DataError):
    """Paired volumes do not share dimensions."""


__all__ = [
    "OctaRestoreError",
    "DataError",
    "ConfigError",
    "FormatError",
    "BadMagic",
    "TruncatedFile",
    "UnsupportedDtype",
    "IoFailure",
    "AxialTooLarge",
    "WindowTooLarge",
    "ScanTooNarrow",
    "InsufficientOverlap",
    "PlanMismatch",
    "ShapeMismatch",
    "EmptyDataset",
    "ImageTooSmall",
    "InvalidBounds",
    "IndexOutOfRange",
    "DimMismatch",
]
