"""Volume layer exports."""

from __future__ import annotations

from .adapters import ContainerAdapter, RawFloat32Adapter, VolumeAdapter
from .core import (
    DEFAULT_AXIAL_TARGET,
    crop_axial,
    normalize,
    open_volume,
    pad_axial,
    parse_dims,
    read_volume,
    write_volume,
)
from .models import NormalizeScope, Volume, VolumeHeader

__all__ = [
    "ContainerAdapter",
    "RawFloat32Adapter",
    "VolumeAdapter",
    "DEFAULT_AXIAL_TARGET",
    "crop_axial",
    "normalize",
    "open_volume",
    "pad_axial",
    "parse_dims",
    "read_volume",
    "write_volume",
    "NormalizeScope",
    "Volume",
    "VolumeHeader",
]
