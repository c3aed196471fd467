"""8-bit PNG export of projections."""

from __future__ import annotations

import logging
from pathlib import Path

import imageio.v3 as iio
import numpy as np

from .errors import IoFailure, ShapeMismatch

logger = logging.getLogger(__name__)


def to_uint8(image: np.ndarray) -> np.ndarray:
    """Map values in ``[0, 1]`` to ``0..255`` (out-of-range values are clipped)."""
    scaled = np.clip(np.asarray(image, dtype=np.float64), 0.0, 1.0) * 255.0
    return np.rint(scaled).astype(np.uint8)


def write_png(image: np.ndarray, path: Path | str) -> Path:
    """Write a grayscale (H, W) or RGB (H, W, 3) image.

    Float images are treated as ``[0, 1]`` intensities; ``uint8`` images are
    written as they are.
    """
    array = np.asarray(image)
    if not (array.ndim == 2 or (array.ndim == 3 and array.shape[2] == 3)):
        raise ShapeMismatch(f"PNG needs (H, W) or (H, W, 3), got {array.shape}")
    if array.dtype != np.uint8:
        array = to_uint8(array)
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        iio.imwrite(target, array, extension=".png")
    except OSError as exc:
        raise IoFailure(target, exc.strerror or str(exc)) from exc
    logger.debug("Wrote %s image to %s", array.shape, target)
    return target


__all__ = ["to_uint8", "write_png"]
