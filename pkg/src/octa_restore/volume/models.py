"""Dataclasses describing volumes and their on-disk header."""

from __future__ import annotations

import enum
import struct
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from octa_restore.errors import DataError

MAGIC = b"OCTAVOL1"
DTYPE_FLOAT32_LE = 0
# magic, n_scans, n_axial, n_lateral, dtype code, meta_len
HEADER_STRUCT = struct.Struct("<8s3IBI")


class NormalizeScope(enum.StrEnum):
    """Unit over which the normalisation maximum is taken."""

    VOLUME = "volume"
    BSCAN = "bscan"
    DATASET = "dataset"


@dataclass(slots=True, frozen=True)
class Volume:
    """Immutable 3-D scalar field indexed (scan, axial, lateral).

    The data array is stored as C-contiguous float32 and flagged read-only so that
    volumes can be shared between workers without copies.
    """

    data: np.ndarray
    meta: dict[str, str] = field(default_factory=dict)

    def __post_init__(self) -> None:
        """Coerce the payload into a read-only float32 array."""
        array = np.ascontiguousarray(self.data, dtype=np.float32)
        if array.ndim != 3 or min(array.shape) < 1:
            raise DataError(
                f"volume data must be a non-empty 3-D array, got {array.shape}"
            )
        if array is self.data and array.flags.writeable:
            array = array.copy()
        array.flags.writeable = False
        object.__setattr__(self, "data", array)
        object.__setattr__(self, "meta", {str(k): str(v) for k, v in self.meta.items()})

    @property
    def n_scans(self) -> int:
        """Number of B-scans."""
        return int(self.data.shape[0])

    @property
    def n_axial(self) -> int:
        """Axial pixel count."""
        return int(self.data.shape[1])

    @property
    def n_lateral(self) -> int:
        """Lateral pixel count."""
        return int(self.data.shape[2])

    @property
    def dims(self) -> tuple[int, int, int]:
        """``(n_scans, n_axial, n_lateral)``."""
        return (self.n_scans, self.n_axial, self.n_lateral)

    def scan(self, index: int) -> np.ndarray:
        """Return B-scan ``index`` as a read-only (axial, lateral) view."""
        return self.data[index]

    def replace(self, data: np.ndarray) -> Volume:
        """Return a new volume with ``data`` and the same metadata."""
        return Volume(data=data, meta=dict(self.meta))

    def to_dict(self) -> dict[str, Any]:
        """Summarise the volume without its payload."""
        return {
            "n_scans": self.n_scans,
            "n_axial": self.n_axial,
            "n_lateral": self.n_lateral,
            "meta": dict(self.meta),
        }


@dataclass(slots=True, frozen=True)
class VolumeHeader:
    """Fixed-size prefix of an OCTAVOL1 container."""

    n_scans: int
    n_axial: int
    n_lateral: int
    dtype: int = DTYPE_FLOAT32_LE
    meta_len: int = 0

    def __post_init__(self) -> None:
        """Reject dimensions that cannot describe a volume."""
        if min(self.n_scans, self.n_axial, self.n_lateral) < 1:
            raise DataError(
                "header dims must be >= 1, "
                f"got {(self.n_scans, self.n_axial, self.n_lateral)}"
            )

    @property
    def payload_len(self) -> int:
        """Number of payload bytes that follow the meta block."""
        return self.n_scans * self.n_axial * self.n_lateral * 4

    def pack(self) -> bytes:
        """Encode the header without the meta block."""
        return HEADER_STRUCT.pack(
            MAGIC, self.n_scans, self.n_axial, self.n_lateral, self.dtype, self.meta_len
        )
