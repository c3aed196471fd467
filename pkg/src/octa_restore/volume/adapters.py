"""File adapters for the OCTAVOL1 container and headerless raw volumes."""

from __future__ import annotations

import json
import logging
from abc import ABC, abstractmethod
from pathlib import Path

import numpy as np

from octa_restore.errors import (
    BadMagic,
    DataError,
    TruncatedFile,
    UnsupportedDtype,
)
from octa_restore.fileio import read_bytes, write_atomic

from .models import DTYPE_FLOAT32_LE, HEADER_STRUCT, MAGIC, Volume, VolumeHeader

logger = logging.getLogger(__name__)

_PAYLOAD_DTYPE = np.dtype("<f4")


class VolumeAdapter(ABC):
    """Minimal reader/writer interface used by the volume layer."""

    @abstractmethod
    def read(self, path: Path | str) -> Volume:
        """Load a volume from ``path``."""

    @abstractmethod
    def write(self, volume: Volume, path: Path | str) -> None:
        """Persist ``volume`` at ``path``, overwriting any existing file."""


class ContainerAdapter(VolumeAdapter):
    """Bit-exact reader/writer of the self-describing OCTAVOL1 container."""

    def read(self, path: Path | str) -> Volume:
        """Parse an OCTAVOL1 file.

        Args:
            path: Location of the container.

        Returns:
            The decoded :class:`Volume`.

        Raises:
            BadMagic: The first eight bytes are not ``OCTAVOL1``.
            TruncatedFile: Header, meta block or payload end early.
            UnsupportedDtype: The dtype code is not float32-LE.

        """
        target = Path(path)
        raw = read_bytes(target)
        if len(raw) < len(MAGIC) or raw[: len(MAGIC)] != MAGIC:
            raise BadMagic(f"{target}: expected magic {MAGIC!r}", offset=0)
        if len(raw) < HEADER_STRUCT.size:
            raise TruncatedFile(f"{target}: header ends early", offset=len(raw))
        _, n_scans, n_axial, n_lateral, dtype, meta_len = HEADER_STRUCT.unpack_from(raw)
        if min(n_scans, n_axial, n_lateral) < 1:
            raise DataError(
                f"{target}: dims must be >= 1, "
                f"got {(n_scans, n_axial, n_lateral)} (offset 8)"
            )
        if dtype != DTYPE_FLOAT32_LE:
            raise UnsupportedDtype(
                f"{target}: dtype code {dtype} is not float32-LE",
                offset=len(MAGIC) + 12,
            )
        header = VolumeHeader(n_scans, n_axial, n_lateral, dtype, meta_len)
        meta_start = HEADER_STRUCT.size
        payload_start = meta_start + meta_len
        if len(raw) < payload_start:
            raise TruncatedFile(f"{target}: meta block ends early", offset=len(raw))
        meta = self._decode_meta(raw[meta_start:payload_start], target, meta_start)
        expected_end = payload_start + header.payload_len
        if len(raw) < expected_end:
            raise TruncatedFile(
                f"{target}: payload has {len(raw) - payload_start} of "
                f"{header.payload_len} bytes",
                offset=len(raw),
            )
        if len(raw) > expected_end:
            logger.warning(
                "%s: ignoring %d trailing bytes", target, len(raw) - expected_end
            )
        data = np.frombuffer(
            raw, dtype=_PAYLOAD_DTYPE, count=n_scans * n_axial * n_lateral,
            offset=payload_start,
        ).reshape(n_scans, n_axial, n_lateral)
        return Volume(data=data.astype(np.float32), meta=meta)

    def write(self, volume: Volume, path: Path | str) -> None:
        """Encode ``volume`` into an OCTAVOL1 file."""
        meta_block = (
            json.dumps(volume.meta, ensure_ascii=False).encode("utf-8")
            if volume.meta
            else b""
        )
        header = VolumeHeader(
            volume.n_scans, volume.n_axial, volume.n_lateral, meta_len=len(meta_block)
        )
        payload = volume.data.astype(_PAYLOAD_DTYPE, copy=False).tobytes(order="C")
        write_atomic(Path(path), [header.pack(), meta_block, payload])

    @staticmethod
    def _decode_meta(block: bytes, path: Path, offset: int) -> dict[str, str]:
        if not block:
            return {}
        try:
            decoded = json.loads(block.decode("utf-8"))
        except (UnicodeDecodeError, json.JSONDecodeError) as exc:
            raise DataError(
                f"{path}: meta block is not UTF-8 JSON (offset {offset})"
            ) from exc
        if not isinstance(decoded, dict):
            raise DataError(f"{path}: meta block must be an object (offset {offset})")
        return {str(k): str(v) for k, v in decoded.items()}


class RawFloat32Adapter(VolumeAdapter):
    """Headerless float32-LE payload whose dims are supplied by the caller."""

    def __init__(self, dims: tuple[int, int, int]) -> None:
        """Remember the dims used to interpret the payload.

        Args:
            dims: ``(n_scans, n_axial, n_lateral)`` of the raw file.

        """
        if len(dims) != 3 or min(dims) < 1:
            raise DataError(f"raw dims must be three positive integers, got {dims}")
        self.dims = (int(dims[0]), int(dims[1]), int(dims[2]))

    def read(self, path: Path | str) -> Volume:
        """Interpret the whole file as a float32-LE array of ``dims``."""
        target = Path(path)
        raw = read_bytes(target)
        expected = self.dims[0] * self.dims[1] * self.dims[2] * 4
        if len(raw) < expected:
            raise TruncatedFile(
                f"{target}: raw payload has {len(raw)} of {expected} bytes",
                offset=len(raw),
            )
        data = np.frombuffer(raw, dtype=_PAYLOAD_DTYPE, count=expected // 4)
        return Volume(data=data.reshape(self.dims).astype(np.float32))

    def write(self, volume: Volume, path: Path | str) -> None:
        """Write the bare payload; metadata is dropped."""
        if volume.dims != self.dims:
            raise DataError(
                f"volume dims {volume.dims} differ from adapter dims {self.dims}"
            )
        payload = volume.data.astype(_PAYLOAD_DTYPE).tobytes(order="C")
        write_atomic(Path(path), [payload])
