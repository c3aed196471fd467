"""High level volume API: loading, saving, normalisation and axial padding."""

from __future__ import annotations

import logging
from pathlib import Path

import numpy as np

from octa_restore.errors import AxialTooLarge, ConfigError, DataError

from .adapters import ContainerAdapter, RawFloat32Adapter, VolumeAdapter
from .models import NormalizeScope, Volume

logger = logging.getLogger(__name__)

DEFAULT_AXIAL_TARGET = 480


def read_volume(path: Path | str) -> Volume:
    """Read an OCTAVOL1 container.

    Args:
        path: Location of the container file.

    Returns:
        The decoded :class:`Volume`.

    """
    volume = ContainerAdapter().read(path)
    logger.debug("Read %s with dims %s", path, volume.dims)
    return volume


def write_volume(volume: Volume, path: Path | str) -> None:
    """Write ``volume`` as a bit-exact OCTAVOL1 container, replacing ``path``."""
    ContainerAdapter().write(volume, path)
    logger.debug("Wrote %s with dims %s", path, volume.dims)


def open_volume(path: Path | str, dims: tuple[int, int, int] | None = None) -> Volume:
    """Load a volume choosing the adapter from the arguments.

    Args:
        path: File to read.
        dims: When given the file is treated as a headerless float32-LE payload
            of these dims, otherwise as an OCTAVOL1 container.

    Returns:
        The loaded :class:`Volume`.

    """
    adapter: VolumeAdapter
    if dims is not None:
        adapter = RawFloat32Adapter(dims)
    else:
        adapter = ContainerAdapter()
    volume = adapter.read(path)
    logger.debug("Opened %s with dims %s", path, volume.dims)
    return volume


def parse_dims(text: str) -> tuple[int, int, int]:
    """Parse ``"S,A,L"`` into a dims tuple."""
    parts = [p.strip() for p in text.split(",")]
    try:
        values = tuple(int(p) for p in parts)
    except ValueError as exc:
        raise ConfigError(f"dims must be three integers 'S,A,L', got {text!r}") from exc
    if len(values) != 3 or min(values) < 1:
        raise ConfigError(f"dims must be three positive integers 'S,A,L', got {text!r}")
    return (values[0], values[1], values[2])


def normalize(
    volume: Volume,
    scope: NormalizeScope = NormalizeScope.VOLUME,
    *,
    reference_max: float | None = None,
) -> Volume:
    """Scale values into ``[0, 1]`` by dividing by a maximum.

    Args:
        volume: Volume to normalise.
        scope: ``volume`` divides by the global maximum, ``bscan`` by each scan's
            own maximum, ``dataset`` by ``reference_max``.
        reference_max: Shared maximum for the ``dataset`` scope.

    Returns:
        The normalised volume. All-zero units are returned unchanged.

    """
    data = volume.data
    if scope is NormalizeScope.VOLUME:
        peak = np.float32(data.max())
        if peak <= 0:
            return volume
        return volume.replace(data / peak)
    if scope is NormalizeScope.BSCAN:
        peaks = data.max(axis=(1, 2), keepdims=True)
        safe = np.where(peaks > 0, peaks, np.float32(1.0))
        return volume.replace(data / safe)
    if reference_max is None or reference_max <= 0:
        raise ConfigError("dataset normalisation needs a positive reference_max")
    return volume.replace(data / np.float32(reference_max))


def pad_axial(volume: Volume, target: int = DEFAULT_AXIAL_TARGET) -> Volume:
    """Append zero rows at the bottom until ``n_axial == target``.

    Raises:
        AxialTooLarge: If the volume is already taller than ``target``.

    """
    if volume.n_axial > target:
        raise AxialTooLarge(
            f"n_axial {volume.n_axial} exceeds padding target {target}"
        )
    if volume.n_axial == target:
        return volume
    padded = np.pad(volume.data, ((0, 0), (0, target - volume.n_axial), (0, 0)))
    return volume.replace(padded)


def crop_axial(volume: Volume, n_axial: int) -> Volume:
    """Keep the top ``n_axial`` rows, undoing :func:`pad_axial`."""
    if not 1 <= n_axial <= volume.n_axial:
        raise DataError(f"cannot crop {volume.n_axial} axial rows to {n_axial}")
    return volume.replace(volume.data[:, :n_axial, :])


__all__ = [
    "DEFAULT_AXIAL_TARGET",
    "crop_axial",
    "normalize",
    "open_volume",
    "pad_axial",
    "parse_dims",
    "read_volume",
    "write_volume",
]
