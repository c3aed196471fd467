"""OCTAUNW1 parameter checkpoints.

Layout (little-endian)::

    magic "OCTAUNW1"
    u32 config_len, UNetConfig as UTF-8 JSON
    u32 tensor count
    per tensor: u16 name_len, UTF-8 name, u8 ndim, u32 dims[ndim], float32 payload
"""

from __future__ import annotations

import json
import logging
import struct
from collections.abc import Iterator
from pathlib import Path

import numpy as np
import torch

from octa_restore.config import config_from_mapping
from octa_restore.errors import BadMagic, ConfigError, ShapeMismatch, TruncatedFile
from octa_restore.fileio import read_bytes, write_atomic

from .params import ModelParams
from .unet import DenseUNet, UNetConfig

logger = logging.getLogger(__name__)

MAGIC = b"OCTAUNW1"
_U32 = struct.Struct("<I")
_U16 = struct.Struct("<H")
_U8 = struct.Struct("<B")
_PAYLOAD_DTYPE = np.dtype("<f4")


def _records(params: ModelParams) -> Iterator[bytes]:
    tensors = params.named_tensors()
    yield _U32.pack(len(tensors))
    for name, tensor in tensors.items():
        encoded = name.encode("utf-8")
        array = tensor.cpu().numpy().astype(_PAYLOAD_DTYPE, copy=False)
        yield _U16.pack(len(encoded)) + encoded
        yield _U8.pack(array.ndim)
        yield b"".join(_U32.pack(d) for d in array.shape)
        yield np.ascontiguousarray(array).tobytes()


def save_params(params: ModelParams, path: Path | str) -> None:
    """Write ``params`` as an OCTAUNW1 checkpoint, replacing ``path``."""
    config = json.dumps(params.config.to_dict(), sort_keys=True).encode("utf-8")
    chunks = [MAGIC, _U32.pack(len(config)), config, *_records(params)]
    write_atomic(path, chunks)
    logger.info("Saved %d tensors to %s", len(params.named_tensors()), path)


class _Reader:
    """Sequential reader raising :class:`TruncatedFile` on short input."""

    def __init__(self, raw: bytes) -> None:
        self.raw = raw
        self.offset = 0

    def take(self, size: int) -> bytes:
        end = self.offset + size
        if end > len(self.raw):
            raise TruncatedFile(
                f"need {size} bytes, {len(self.raw) - self.offset} left",
                offset=len(self.raw),
            )
        chunk = self.raw[self.offset : end]
        self.offset = end
        return chunk

    def unpack(self, fmt: struct.Struct) -> int:
        return int(fmt.unpack(self.take(fmt.size))[0])


def load_params(path: Path | str) -> ModelParams:
    """Read an OCTAUNW1 checkpoint bit-exactly.

    Raises:
        BadMagic: The file is not an OCTAUNW1 checkpoint.
        TruncatedFile: A record ends early.
        ConfigError: The embedded config is invalid.
        ShapeMismatch: Tensor names or shapes disagree with the config.

    """
    reader = _Reader(read_bytes(path))
    if reader.raw[: len(MAGIC)] != MAGIC:
        raise BadMagic(f"{path}: not an OCTAUNW1 checkpoint", offset=0)
    reader.take(len(MAGIC))
    config_raw = reader.take(reader.unpack(_U32))
    try:
        mapping = json.loads(config_raw.decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise ConfigError(f"{path}: unreadable network config") from exc
    cfg = config_from_mapping(UNetConfig, mapping)

    loaded: dict[str, torch.Tensor] = {}
    for _ in range(reader.unpack(_U32)):
        name = reader.take(reader.unpack(_U16)).decode("utf-8")
        ndim = reader.unpack(_U8)
        shape = tuple(reader.unpack(_U32) for _ in range(ndim))
        count = int(np.prod(shape, dtype=np.int64))
        payload = reader.take(count * _PAYLOAD_DTYPE.itemsize)
        array = np.frombuffer(payload, dtype=_PAYLOAD_DTYPE).reshape(shape)
        loaded[name] = torch.from_numpy(array.astype(np.float32))
    if reader.offset != len(reader.raw):
        trailing = len(reader.raw) - reader.offset
        logger.warning("%s: %d trailing bytes ignored", path, trailing)

    params = ModelParams(cfg, DenseUNet(cfg))
    state = params.network.state_dict()
    expected = set(params.named_tensors())
    if set(loaded) != expected:
        raise ShapeMismatch(
            f"{path}: tensor names differ from the config "
            f"(missing {sorted(expected - set(loaded))}, "
            f"extra {sorted(set(loaded) - expected)})"
        )
    with torch.no_grad():
        for name, tensor in loaded.items():
            if tuple(state[name].shape) != tuple(tensor.shape):
                raise ShapeMismatch(
                    f"{path}: {name} has shape {tuple(tensor.shape)}, "
                    f"expected {tuple(state[name].shape)}"
                )
            state[name].copy_(tensor)
    params.shape_audit()
    params.network.eval()
    return params


__all__ = ["MAGIC", "load_params", "save_params"]
