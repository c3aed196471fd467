"""Byte-level file helpers shared by the binary formats."""

from __future__ import annotations

import os
import tempfile
from collections.abc import Iterable
from pathlib import Path

from .errors import IoFailure


def read_bytes(path: Path | str) -> bytes:
    """Read a whole file, reporting OS failures as :class:`IoFailure`."""
    target = Path(path)
    try:
        return target.read_bytes()
    except OSError as exc:
        raise IoFailure(target, exc.strerror or str(exc)) from exc


def write_atomic(path: Path | str, chunks: Iterable[bytes]) -> None:
    """Write ``chunks`` to a sibling temp file and move it over ``path``."""
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        fd, tmp_name = tempfile.mkstemp(dir=target.parent, prefix=f".{target.name}.")
        try:
            with os.fdopen(fd, "wb") as handle:
                for chunk in chunks:
                    handle.write(chunk)
            os.replace(tmp_name, target)
        except BaseException:
            Path(tmp_name).unlink(missing_ok=True)
            raise
    except OSError as exc:
        raise IoFailure(target, exc.strerror or str(exc)) from exc


__all__ = ["read_bytes", "write_atomic"]
