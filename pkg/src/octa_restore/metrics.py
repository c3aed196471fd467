"""Image similarity metrics and en-face projections."""

from __future__ import annotations

import enum
import json
import logging
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import numpy as np
from scipy import ndimage

from .config import config_to_dict
from .errors import ConfigError, ImageTooSmall, InvalidBounds, ShapeMismatch
from .fileio import read_bytes, write_atomic
from .volume import Volume

logger = logging.getLogger(__name__)


def _pair(a: np.ndarray, b: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    left = np.asarray(a, dtype=np.float64)
    right = np.asarray(b, dtype=np.float64)
    if left.shape != right.shape:
        raise ShapeMismatch(f"shapes differ: {left.shape} vs {right.shape}")
    return left, right


def mae(a: np.ndarray, b: np.ndarray) -> float:
    """Mean absolute error."""
    left, right = _pair(a, b)
    return float(np.mean(np.abs(left - right)))


def mse(a: np.ndarray, b: np.ndarray) -> float:
    """Mean squared error."""
    left, right = _pair(a, b)
    return float(np.mean((left - right) ** 2))


@dataclass(slots=True, frozen=True)
class SsimConfig:
    """Gaussian-window SSIM constants."""

    window: int = 11
    sigma: float = 1.5
    k1: float = 0.01
    k2: float = 0.03
    data_range: float = 1.0

    def validate(self) -> None:
        """Raise :class:`ConfigError` for unusable constants."""
        if self.window < 1 or self.window % 2 == 0:
            raise ConfigError(f"SSIM window must be odd, got {self.window}")
        if self.sigma <= 0 or self.k1 <= 0 or self.k2 <= 0 or self.data_range <= 0:
            raise ConfigError("SSIM sigma, k1, k2 and data_range must be > 0")

    def kernel(self) -> np.ndarray:
        """Normalised 1-D Gaussian of length ``window``."""
        radius = self.window // 2
        offsets = np.arange(-radius, radius + 1, dtype=np.float64)
        weights = np.exp(-(offsets**2) / (2.0 * self.sigma**2))
        return weights / weights.sum()

    def to_dict(self) -> dict[str, Any]:
        """Convert the config to a JSON-compatible dictionary."""
        return config_to_dict(self)


def _gaussian_valid(image: np.ndarray, kernel: np.ndarray) -> np.ndarray:
    radius = kernel.shape[0] // 2
    blurred = ndimage.correlate1d(image, kernel, axis=0, mode="reflect")
    blurred = ndimage.correlate1d(blurred, kernel, axis=1, mode="reflect")
    return blurred[radius : image.shape[0] - radius, radius : image.shape[1] - radius]


def ssim_map(a: np.ndarray, b: np.ndarray, cfg: SsimConfig | None = None) -> np.ndarray:
    """Local SSIM over the valid interior of two 2-D images.

    Raises:
        ShapeMismatch: If the images differ in shape or are not 2-D.
        ImageTooSmall: If either side is shorter than the window.

    """
    cfg = cfg or SsimConfig()
    cfg.validate()
    x, y = _pair(a, b)
    if x.ndim != 2:
        raise ShapeMismatch(f"SSIM needs 2-D images, got {x.shape}")
    if min(x.shape) < cfg.window:
        raise ImageTooSmall(
            f"image {x.shape} is smaller than the {cfg.window}px window"
        )
    kernel = cfg.kernel()
    c1 = (cfg.k1 * cfg.data_range) ** 2
    c2 = (cfg.k2 * cfg.data_range) ** 2
    mu_x = _gaussian_valid(x, kernel)
    mu_y = _gaussian_valid(y, kernel)
    var_x = _gaussian_valid(x * x, kernel) - mu_x * mu_x
    var_y = _gaussian_valid(y * y, kernel) - mu_y * mu_y
    cov = _gaussian_valid(x * y, kernel) - mu_x * mu_y
    numerator = (2 * mu_x * mu_y + c1) * (2 * cov + c2)
    denominator = (mu_x**2 + mu_y**2 + c1) * (var_x + var_y + c2)
    return numerator / denominator


def ssim(a: np.ndarray, b: np.ndarray, cfg: SsimConfig | None = None) -> float:
    """Mean structural similarity of two 2-D images."""
    return float(ssim_map(a, b, cfg).mean())


@dataclass(slots=True, frozen=True)
class LayerBounds:
    """Per A-scan axial bounds ``[upper, lower)`` of the segmented slab.

    Both arrays have shape (n_scans, n_lateral).
    """

    upper: np.ndarray
    lower: np.ndarray

    def __post_init__(self) -> None:
        """Store the bounds as read-only integer arrays."""
        for name in ("upper", "lower"):
            array = np.array(getattr(self, name), dtype=np.int64)
            array.flags.writeable = False
            object.__setattr__(self, name, array)

    @classmethod
    def flat(cls, n_scans: int, n_lateral: int, upper: int, lower: int) -> LayerBounds:
        """Same bounds for every A-scan."""
        shape = (n_scans, n_lateral)
        return cls(np.full(shape, upper), np.full(shape, lower))

    @classmethod
    def full(cls, volume: Volume) -> LayerBounds:
        """Bounds covering the whole axial extent of ``volume``."""
        return cls.flat(volume.n_scans, volume.n_lateral, 0, volume.n_axial)

    def validate(self, volume: Volume) -> None:
        """Raise :class:`InvalidBounds` unless ``0 <= upper < lower <= n_axial``."""
        expected = (volume.n_scans, volume.n_lateral)
        if self.upper.shape != expected or self.lower.shape != expected:
            raise InvalidBounds(
                f"bounds of shape {self.upper.shape}/{self.lower.shape}, "
                f"volume needs {expected}"
            )
        bad = (
            (self.upper < 0)
            | (self.upper >= self.lower)
            | (self.lower > volume.n_axial)
        )
        if bad.any():
            scan, column = (int(v) for v in np.argwhere(bad)[0])
            raise InvalidBounds(
                f"bounds at scan {scan}, column {column} are "
                f"[{int(self.upper[scan, column])}, {int(self.lower[scan, column])}) "
                f"for {volume.n_axial} axial rows"
            )

    def mask(self, n_axial: int) -> np.ndarray:
        """Boolean (n_scans, n_axial, n_lateral) mask of the slab."""
        rows = np.arange(n_axial)[None, :, None]
        return (rows >= self.upper[:, None, :]) & (rows < self.lower[:, None, :])

    def to_dict(self) -> dict[str, Any]:
        """Per-scan ``[[upper, lower], ...]`` lists."""
        pairs = np.stack((self.upper, self.lower), axis=-1)
        return {"scans": pairs.tolist()}


def load_bounds(path: Path | str, n_scans: int, n_lateral: int) -> LayerBounds:
    """Read a bounds file.

    The file holds either ``{"constant": [upper, lower]}`` applied to every A-scan
    or ``{"scans": [[[upper, lower], ...], ...]}`` indexed (scan, lateral).
    """
    try:
        data = json.loads(read_bytes(path).decode("utf-8"))
    except (UnicodeDecodeError, json.JSONDecodeError) as exc:
        raise InvalidBounds(f"{path}: unreadable bounds file") from exc
    if not isinstance(data, dict):
        raise InvalidBounds(f"{path}: expected a JSON object")
    if "constant" in data:
        pair = data["constant"]
        if not isinstance(pair, list) or len(pair) != 2:
            raise InvalidBounds(f"{path}: constant bounds must be [upper, lower]")
        return LayerBounds.flat(n_scans, n_lateral, int(pair[0]), int(pair[1]))
    if "scans" in data:
        pairs = np.asarray(data["scans"], dtype=np.int64)
        if pairs.shape != (n_scans, n_lateral, 2):
            raise InvalidBounds(
                f"{path}: scans bounds have shape {pairs.shape}, "
                f"expected {(n_scans, n_lateral, 2)}"
            )
        return LayerBounds(pairs[..., 0], pairs[..., 1])
    raise InvalidBounds(f"{path}: expected a 'constant' or 'scans' entry")


def save_bounds(bounds: LayerBounds, path: Path | str) -> None:
    """Write ``bounds`` in the per-scan form."""
    write_atomic(path, [json.dumps(bounds.to_dict()).encode("utf-8")])


class ProjectionStatistic(enum.StrEnum):
    """Reduction applied along the axial axis."""

    MEAN = "mean"
    SUM = "sum"
    MAX = "max"


def enface_projection(
    volume: Volume,
    bounds: LayerBounds | None = None,
    statistic: ProjectionStatistic = ProjectionStatistic.MEAN,
    normalize: bool = True,
) -> np.ndarray:
    """Collapse ``volume`` along the axial axis into an (n_scans, n_lateral) image.

    Args:
        volume: Volume to project.
        bounds: Slab to reduce over; the full axial extent when omitted.
        statistic: Axial reduction.
        normalize: Divide the result by its maximum (all-zero images stay zero).

    Raises:
        InvalidBounds: If ``bounds`` do not fit ``volume``.

    """
    bounds = bounds or LayerBounds.full(volume)
    bounds.validate(volume)
    data = volume.data.astype(np.float64)
    mask = bounds.mask(volume.n_axial)
    if statistic is ProjectionStatistic.MAX:
        image = np.where(mask, data, -np.inf).max(axis=1)
    else:
        image = np.where(mask, data, 0.0).sum(axis=1)
        if statistic is ProjectionStatistic.MEAN:
            image = image / (bounds.lower - bounds.upper)
    if normalize:
        peak = image.max()
        if peak > 0:
            image = image / peak
    return image.astype(np.float32)


def local_variance(image: np.ndarray, size: int = 5) -> np.ndarray:
    """Variance inside a sliding ``size`` x ``size`` window around each pixel."""
    data = np.asarray(image, dtype=np.float64)
    mean = ndimage.uniform_filter(data, size=size, mode="reflect")
    mean_sq = ndimage.uniform_filter(data * data, size=size, mode="reflect")
    return np.clip(mean_sq - mean * mean, 0.0, None)


def mean_local_variance(
    image: np.ndarray, size: int = 5, mask: np.ndarray | None = None
) -> float:
    """Average of :func:`local_variance`, optionally over the pixels in ``mask``.

    Raises:
        ShapeMismatch: If ``mask`` and ``image`` differ in shape.
        ConfigError: If ``mask`` selects no pixel.

    """
    variance = local_variance(image, size)
    if mask is None:
        return float(variance.mean())
    selected = np.asarray(mask, dtype=bool)
    if selected.shape != variance.shape:
        raise ShapeMismatch(
            f"mask {selected.shape} does not match image {variance.shape}"
        )
    if not selected.any():
        raise ConfigError("mask selects no pixels")
    return float(variance[selected].mean())


def _scores(a: np.ndarray, b: np.ndarray, cfg: SsimConfig) -> dict[str, float]:
    return {"mae": mae(a, b), "mse": mse(a, b), "ssim": ssim(a, b, cfg)}


def evaluate(
    reference: Volume,
    generated: Volume,
    bounds: LayerBounds | None = None,
    intact: Sequence[int] | None = None,
    cfg: SsimConfig | None = None,
) -> dict[str, Any]:
    """Compare two volumes the way the repair results are reported.

    Returns a mapping with a ``bscans`` row (metrics averaged over the B-scans
    listed in ``intact``, all scans by default), a ``projection`` row for the
    unsegmented projections and, when ``bounds`` are given, a
    ``segmented_projection`` row.

    Raises:
        ShapeMismatch: If the volumes differ in shape.

    """
    cfg = cfg or SsimConfig()
    if reference.dims != generated.dims:
        raise ShapeMismatch(f"volumes differ: {reference.dims} vs {generated.dims}")
    indices = list(range(reference.n_scans)) if intact is None else list(intact)
    if not indices:
        raise ConfigError("no B-scans selected for evaluation")
    rows = [_scores(reference.scan(i), generated.scan(i), cfg) for i in indices]
    report: dict[str, Any] = {
        "bscans": {
            key: float(np.mean([row[key] for row in rows]))
            for key in ("mae", "mse", "ssim")
        }
        | {"count": len(indices)},
        "projection": _scores(
            enface_projection(reference), enface_projection(generated), cfg
        ),
    }
    if bounds is not None:
        report["segmented_projection"] = _scores(
            enface_projection(reference, bounds),
            enface_projection(generated, bounds),
            cfg,
        )
    logger.info("Evaluated %d B-scans: %s", len(indices), report["bscans"])
    return report


__all__ = [
    "LayerBounds",
    "ProjectionStatistic",
    "SsimConfig",
    "enface_projection",
    "evaluate",
    "load_bounds",
    "local_variance",
    "mae",
    "mean_local_variance",
    "mse",
    "save_bounds",
    "ssim",
    "ssim_map",
]
