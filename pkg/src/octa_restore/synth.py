"""Synthetic paired OCT / OCTA phantoms with known vessels, layers and defects."""

from __future__ import annotations

import enum
import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np
from scipy import ndimage

from .config import config_to_dict
from .errors import ConfigError, IndexOutOfRange
from .metrics import LayerBounds
from .volume import Volume

logger = logging.getLogger(__name__)

MIN_DIMS = (16, 32, 32)


class PhantomDefect(enum.StrEnum):
    """Per-scan ground-truth defect label."""

    NONE = "none"
    BLINK = "blink"
    MOTION = "motion"


@dataclass(slots=True, frozen=True)
class PhantomConfig:
    """Geometry and noise of a phantom volume.

    Depths and thicknesses are fractions of ``n_axial``. The vascular band spans
    the first ``vascular_layers`` layers below the surface; its limits are the
    layer bounds reported in :class:`PhantomTruth`.
    """

    dims: tuple[int, int, int] = (128, 64, 64)
    surface_depth: float = 0.25
    surface_amplitude: float = 0.05
    surface_smoothness: float = 8.0
    layer_thickness: tuple[float, ...] = (0.08, 0.12, 0.1, 0.15)
    layer_reflectivity: tuple[float, ...] = (0.9, 0.5, 0.7, 0.4)
    vascular_layers: int = 2
    background: float = 0.05
    vessels: int = 6
    radius_range: tuple[float, float] = (1.0, 2.5)
    lateral_step: float = 0.4
    vessel_intensity: float = 0.8
    hyper_reflectivity: float = 0.3
    shadow: float = 0.5
    speckle: float = 0.3
    octa_background: float = 0.08
    octa_noise: float = 0.02
    seed: int = 0

    def validate(self) -> None:
        """Raise :class:`ConfigError` for geometry that cannot be rasterised."""
        too_small = any(d < m for d, m in zip(self.dims, MIN_DIMS, strict=False))
        if len(self.dims) != 3 or too_small:
            raise ConfigError(f"phantom dims must be >= {MIN_DIMS}, got {self.dims}")
        if len(self.layer_thickness) != len(self.layer_reflectivity):
            raise ConfigError("layer_thickness and layer_reflectivity differ in length")
        if not 1 <= self.vascular_layers <= len(self.layer_thickness):
            raise ConfigError(f"vascular_layers out of range: {self.vascular_layers}")
        bottom = self.surface_depth + self.surface_amplitude + sum(self.layer_thickness)
        if bottom >= 1.0:
            raise ConfigError(
                f"layers reach below the volume ({bottom:.2f} of n_axial)"
            )
        if self.surface_depth - self.surface_amplitude <= 0:
            raise ConfigError("surface touches the top of the volume")
        low, high = self.radius_range
        if low < 1 or high < low:
            raise ConfigError(
                f"radius_range must satisfy 1 <= low <= high, got {self.radius_range}"
            )
        if self.vessels < 0:
            raise ConfigError(f"vessels must be >= 0, got {self.vessels}")
        if not 0.0 <= self.speckle < 1.0:
            raise ConfigError(f"speckle must be in [0, 1), got {self.speckle}")
        if not 0.0 <= self.shadow <= 1.0:
            raise ConfigError(f"shadow must be in [0, 1], got {self.shadow}")

    def to_dict(self) -> dict[str, Any]:
        """Convert the config to a JSON-compatible dictionary."""
        return config_to_dict(self)


@dataclass(slots=True)
class PhantomTruth:
    """Ground truth of a phantom: vessel mask, layer bounds and defect labels."""

    vessels: np.ndarray
    bounds: LayerBounds
    defects: list[PhantomDefect] = field(default_factory=list)

    @property
    def defect_mask(self) -> list[bool]:
        """``True`` for every scan carrying an injected defect."""
        return [kind is not PhantomDefect.NONE for kind in self.defects]

    def defect_indices(self, kind: PhantomDefect | None = None) -> list[int]:
        """Indices of injected defects, optionally of one kind only."""
        return [
            index
            for index, label in enumerate(self.defects)
            if label is not PhantomDefect.NONE and (kind is None or label is kind)
        ]

    def to_dict(self) -> dict[str, Any]:
        """Serialise labels and bounds; the vessel mask is summarised."""
        return {
            "defects": [kind.value for kind in self.defects],
            "vessel_voxels": int(self.vessels.sum()),
            "bounds": self.bounds.to_dict(),
        }


def _surface(cfg: PhantomConfig, rng: np.random.Generator) -> np.ndarray:
    n_scans, n_axial, n_lateral = cfg.dims
    field_ = ndimage.gaussian_filter(
        rng.standard_normal((n_scans, n_lateral)), cfg.surface_smoothness, mode="wrap"
    )
    peak = np.abs(field_).max()
    if peak > 0:
        field_ = field_ / peak
    depth = (cfg.surface_depth + cfg.surface_amplitude * field_) * n_axial
    return np.rint(depth).astype(np.int64)


def _centerlines(
    cfg: PhantomConfig, upper: np.ndarray, lower: np.ndarray, rng: np.random.Generator
) -> tuple[np.ndarray, np.ndarray]:
    """Random-walk tubes running across all scans; returns seeds and radii."""
    n_scans, n_axial, n_lateral = cfg.dims
    seeds = np.zeros(cfg.dims, dtype=bool)
    radii = np.zeros(cfg.dims, dtype=np.float64)
    steps_per_scan = 4
    t = np.arange(n_scans * steps_per_scan) / steps_per_scan
    for _ in range(cfg.vessels):
        radius = float(rng.uniform(*cfg.radius_range))
        drift = rng.normal(0.0, cfg.lateral_step, t.shape[0])
        drift = ndimage.gaussian_filter1d(drift, 2.0 * steps_per_scan, mode="nearest")
        lateral = rng.uniform(0.15, 0.85) * (n_lateral - 1) + np.cumsum(drift)
        lateral = np.clip(lateral, 0, n_lateral - 1)
        depth_frac = rng.uniform(0.35, 0.65)
        scans = np.clip(np.rint(t).astype(np.int64), 0, n_scans - 1)
        cols = np.rint(lateral).astype(np.int64)
        top = upper[scans, cols]
        bottom = lower[scans, cols]
        rows = np.rint(top + depth_frac * (bottom - top)).astype(np.int64)
        seeds[scans, rows, cols] = True
        radii[scans, rows, cols] = radius
    return seeds, radii


def _rasterise(seeds: np.ndarray, radii: np.ndarray) -> np.ndarray:
    if not seeds.any():
        return np.zeros(seeds.shape, dtype=bool)
    distance, nearest = ndimage.distance_transform_edt(~seeds, return_indices=True)
    return distance <= radii[tuple(nearest)]


def generate_phantom(
    cfg: PhantomConfig | None = None,
) -> tuple[Volume, Volume, PhantomTruth]:
    """Render a phantom OCT / OCTA pair with its ground truth.

    OCT shows reflective layer bands under a smooth surface, vessels are slightly
    hyper-reflective and shadow the tissue below them. OCTA is bright inside
    vessels over a weak tissue background. Both carry multiplicative uniform
    speckle and are normalised to ``[0, 1]``. The result is a pure function of
    ``cfg``.
    """
    cfg = cfg or PhantomConfig()
    cfg.validate()
    rng = np.random.default_rng(cfg.seed)
    n_scans, n_axial, n_lateral = cfg.dims

    surface = _surface(cfg, rng)
    thickness = np.maximum(np.rint(np.asarray(cfg.layer_thickness) * n_axial), 1)
    offsets = np.concatenate(([0], np.cumsum(thickness))).astype(np.int64)
    edges = surface[..., None] + offsets
    upper = surface
    lower = edges[..., cfg.vascular_layers]
    bounds = LayerBounds(upper, lower)

    rows = np.arange(n_axial)[None, :, None]
    oct_clean = np.full(cfg.dims, cfg.background, dtype=np.float64)
    for layer, reflectivity in enumerate(cfg.layer_reflectivity):
        top = edges[:, None, :, layer]
        inside = (rows >= top) & (rows < edges[:, None, :, layer + 1])
        oct_clean[inside] = reflectivity
    tissue = (rows >= edges[:, None, :, 0]) & (rows < edges[:, None, :, -1])

    seeds, radii = _centerlines(cfg, upper, lower, rng)
    vessels = _rasterise(seeds, radii)
    below = np.logical_or.accumulate(vessels, axis=1) & ~vessels
    oct_clean[vessels] += cfg.hyper_reflectivity
    oct_clean[below] *= 1.0 - cfg.shadow

    octa_clean = np.where(tissue, cfg.octa_background, 0.0)
    octa_clean[vessels] = cfg.vessel_intensity

    def speckled(clean: np.ndarray) -> np.ndarray:
        if cfg.speckle == 0:
            return clean
        return clean * rng.uniform(1.0 - cfg.speckle, 1.0 + cfg.speckle, clean.shape)

    oct_data = speckled(oct_clean)
    octa_data = speckled(octa_clean)
    if cfg.octa_noise > 0:
        octa_data = octa_data + rng.uniform(0.0, cfg.octa_noise, octa_data.shape)

    oct_data /= oct_data.max()
    octa_data /= octa_data.max()
    meta = {"source": "phantom", "seed": str(cfg.seed)}
    truth = PhantomTruth(vessels, bounds, [PhantomDefect.NONE] * n_scans)
    logger.debug(
        "Generated phantom %s with %d vessel voxels", cfg.dims, int(vessels.sum())
    )
    return (
        Volume(oct_data.astype(np.float32), meta),
        Volume(octa_data.astype(np.float32), meta),
        truth,
    )


def inject_defects(
    octa: Volume,
    scans: Iterable[tuple[int, PhantomDefect | str]],
    motion_gain: float = 3.0,
    *,
    truth: PhantomTruth | None = None,
    seed: int = 0,
) -> tuple[Volume, PhantomTruth]:
    """Corrupt whole B-scans of an OCTA volume.

    ``blink`` zeroes the scan. ``motion`` fills it with uniform noise whose mean
    is ``motion_gain`` times the volume's mean scan level, clipped to 1.

    Raises:
        IndexOutOfRange: For indices outside the volume or given twice.

    """
    requested = [(int(index), PhantomDefect(kind)) for index, kind in scans]
    seen: set[int] = set()
    for index, kind in requested:
        if not 0 <= index < octa.n_scans:
            raise IndexOutOfRange(f"scan {index} outside [0, {octa.n_scans})")
        if index in seen:
            raise IndexOutOfRange(f"scan {index} listed twice")
        if kind is PhantomDefect.NONE:
            raise ConfigError(f"scan {index}: 'none' is not an injectable defect")
        seen.add(index)

    if truth is None:
        truth = PhantomTruth(
            np.zeros(octa.dims, dtype=bool),
            LayerBounds.full(octa),
            [PhantomDefect.NONE] * octa.n_scans,
        )
    labels = list(truth.defects)
    if len(labels) != octa.n_scans:
        raise IndexOutOfRange(
            f"truth has {len(labels)} labels for {octa.n_scans} scans"
        )
    if not requested:
        return octa, PhantomTruth(truth.vessels, truth.bounds, labels)

    rng = np.random.default_rng(seed)
    data = octa.data.copy()
    level = float(octa.data.mean(dtype=np.float64))
    for index, kind in requested:
        if kind is PhantomDefect.BLINK:
            data[index] = 0.0
        else:
            noise = rng.uniform(0.0, 2.0 * motion_gain * level, data[index].shape)
            data[index] = np.minimum(noise, 1.0)
        labels[index] = kind
    logger.debug("Injected %d defects", len(requested))
    return octa.replace(data), PhantomTruth(truth.vessels, truth.bounds, labels)


def spaced_defects(
    n_scans: int,
    n_blink: int,
    n_motion: int,
    seed: int = 0,
    spacing: int = 12,
    margin: int = 8,
) -> list[tuple[int, PhantomDefect]]:
    """Draw isolated defect positions ``margin + offset + k * spacing``.

    The offset is random in ``[0, 3]`` (limited by the available slack) and the
    defect kinds are shuffled over the positions.
    """
    count = n_blink + n_motion
    if count == 0:
        return []
    last = margin + spacing * (count - 1)
    slack = n_scans - 1 - margin - last
    if slack < 0:
        raise ConfigError(
            f"{count} defects with spacing {spacing} do not fit into {n_scans} scans"
        )
    rng = np.random.default_rng(seed)
    offset = int(rng.integers(0, min(3, slack) + 1))
    kinds: Sequence[PhantomDefect] = [PhantomDefect.BLINK] * n_blink + [
        PhantomDefect.MOTION
    ] * n_motion
    order = rng.permutation(count)
    return [(margin + offset + spacing * k, kinds[int(order[k])]) for k in range(count)]


def parse_defects(text: str) -> list[tuple[int, PhantomDefect]]:
    """Parse ``"7:blink,12:motion"`` into defect requests."""
    result: list[tuple[int, PhantomDefect]] = []
    for item in filter(None, (part.strip() for part in text.split(","))):
        index, _, kind = item.partition(":")
        try:
            result.append((int(index), PhantomDefect(kind.strip().lower())))
        except ValueError as exc:
            raise ConfigError(
                f"bad defect spec {item!r}, expected 'index:blink|motion'"
            ) from exc
    return result


__all__ = [
    "MIN_DIMS",
    "PhantomConfig",
    "PhantomDefect",
    "PhantomTruth",
    "generate_phantom",
    "inject_defects",
    "parse_defects",
    "spaced_defects",
]
