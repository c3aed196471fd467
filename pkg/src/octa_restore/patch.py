"""Patch extraction for training and overlapping-patch stitching for inference."""

from __future__ import annotations

import logging
import math
from collections.abc import Sequence
from dataclasses import dataclass, field
from typing import Any

import numpy as np

from .errors import (
    ConfigError,
    DimMismatch,
    EmptyDataset,
    InsufficientOverlap,
    PlanMismatch,
    ScanTooNarrow,
    ShapeMismatch,
)

logger = logging.getLogger(__name__)

DEFAULT_PATCH_WIDTH = 128
DEFAULT_PATCH_COUNT = 5
DEFAULT_TRIM = 8
DEFAULT_TISSUE_THRESHOLD = 0.1
RETRY_FACTOR = 10


@dataclass(slots=True, frozen=True)
class Patch:
    """Lateral slice of a B-scan covering the full (padded) axial extent."""

    pixels: np.ndarray
    origin: int
    scan_index: int = 0

    @property
    def height(self) -> int:
        """Axial size ``H``."""
        return int(self.pixels.shape[0])

    @property
    def width(self) -> int:
        """Lateral size ``w``."""
        return int(self.pixels.shape[1])


@dataclass(slots=True, frozen=True)
class StitchPlan:
    """Patch origins and per-column ownership for stitched inference."""

    width: int
    patch_width: int
    starts: tuple[int, ...]
    owner: np.ndarray = field(repr=False)
    trim: int = DEFAULT_TRIM

    @property
    def count(self) -> int:
        """Number of patches ``k``."""
        return len(self.starts)

    def ranges(self) -> list[tuple[int, int]]:
        """Inclusive ``(first, last)`` output column owned by each patch."""
        result: list[tuple[int, int]] = []
        for index in range(self.count):
            columns = np.flatnonzero(self.owner == index)
            if columns.size:
                result.append((int(columns[0]), int(columns[-1])))
            else:
                result.append((-1, -1))
        return result

    def boundaries(self) -> list[tuple[int, int]]:
        """Adjacent ``(last, first)`` column pairs where ownership changes."""
        changes = np.flatnonzero(np.diff(self.owner)) + 1
        return [(int(c) - 1, int(c)) for c in changes]

    def to_dict(self) -> dict[str, Any]:
        """Convert the plan to a JSON-compatible dictionary."""
        return {
            "width": self.width,
            "patch_width": self.patch_width,
            "count": self.count,
            "trim": self.trim,
            "starts": list(self.starts),
            "ownership": [list(r) for r in self.ranges()],
            "boundaries": [list(b) for b in self.boundaries()],
        }


@dataclass(slots=True)
class PatchDataset:
    """Stacks of co-located OCT / OCTA / smoothed-OCTA patches, shape (N, H, w)."""

    oct: np.ndarray
    octa: np.ndarray
    octa_smoothed: np.ndarray

    def __post_init__(self) -> None:
        """Check that all stacks agree in shape."""
        if not (self.oct.shape == self.octa.shape == self.octa_smoothed.shape):
            raise ShapeMismatch(
                f"patch stacks differ: {self.oct.shape}, {self.octa.shape}, "
                f"{self.octa_smoothed.shape}"
            )
        if self.oct.ndim != 3:
            raise ShapeMismatch(f"patch stacks must be (N, H, w), got {self.oct.shape}")

    def __len__(self) -> int:
        return int(self.oct.shape[0])

    def subset(self, indices: np.ndarray) -> PatchDataset:
        """Return the patches at ``indices``."""
        return PatchDataset(
            self.oct[indices], self.octa[indices], self.octa_smoothed[indices]
        )


def reject_margin_cropped(
    patch: Patch,
    tissue_threshold: float = DEFAULT_TISSUE_THRESHOLD,
    unpadded_height: int | None = None,
) -> bool:
    """Return ``True`` when tissue touches the top or bottom image margin.

    Args:
        patch: OCT patch to check.
        tissue_threshold: Value above which a pixel counts as depicted tissue.
        unpadded_height: Axial extent before zero padding; the bottom margin is
            row ``unpadded_height - 1``. Defaults to the patch height.

    """
    bottom = (unpadded_height or patch.height) - 1
    top_row = patch.pixels[0]
    bottom_row = patch.pixels[bottom]
    edges = np.concatenate((top_row, bottom_row))
    return bool((edges > tissue_threshold).any())


def sample_training_patches(
    oct_scan: np.ndarray,
    octa_scan: np.ndarray,
    n: int = 100,
    rng_seed: int | np.random.Generator = 0,
    *,
    patch_width: int = DEFAULT_PATCH_WIDTH,
    tissue_threshold: float = DEFAULT_TISSUE_THRESHOLD,
    unpadded_height: int | None = None,
    scan_index: int = 0,
) -> list[tuple[Patch, Patch]]:
    """Draw up to ``n`` OCT/OCTA patch pairs with identical random origins.

    Origins are uniform on ``[0, W - w]``. Pairs whose OCT patch is margin-cropped
    are redrawn; after ``10 n`` attempts fewer pairs are returned.

    Raises:
        DimMismatch: If the two scans differ in shape.
        ScanTooNarrow: If the scans are narrower than ``patch_width``.

    """
    if oct_scan.shape != octa_scan.shape:
        raise DimMismatch(f"OCT {oct_scan.shape} and OCTA {octa_scan.shape} differ")
    width = int(oct_scan.shape[1])
    if width < patch_width:
        raise ScanTooNarrow(f"scan width {width} < patch width {patch_width}")
    rng = (
        rng_seed
        if isinstance(rng_seed, np.random.Generator)
        else np.random.default_rng(rng_seed)
    )
    pairs: list[tuple[Patch, Patch]] = []
    attempts = 0
    while len(pairs) < n and attempts < RETRY_FACTOR * n:
        attempts += 1
        origin = int(rng.integers(0, width - patch_width + 1))
        columns = slice(origin, origin + patch_width)
        oct_patch = Patch(oct_scan[:, columns], origin, scan_index)
        if reject_margin_cropped(oct_patch, tissue_threshold, unpadded_height):
            continue
        pairs.append((oct_patch, Patch(octa_scan[:, columns], origin, scan_index)))
    if len(pairs) < n:
        logger.debug(
            "Scan %d: kept %d of %d patches after %d attempts",
            scan_index,
            len(pairs),
            n,
            attempts,
        )
    return pairs


def _round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def plan_stitch(
    width: int,
    patch_width: int = DEFAULT_PATCH_WIDTH,
    count: int = DEFAULT_PATCH_COUNT,
    trim: int = DEFAULT_TRIM,
) -> StitchPlan:
    """Place ``count`` patches across ``width`` columns and assign ownership.

    ``starts[i] = round(i (W - w) / (k - 1))``; each output column belongs to the
    patch whose centre is nearest (ties go to the lower index).

    Raises:
        ScanTooNarrow: If ``width < patch_width``.
        InsufficientOverlap: If the trim margins cannot be honoured.

    """
    if count < 2:
        raise ConfigError(f"patch count must be >= 2, got {count}")
    if trim < 0:
        raise ConfigError(f"trim must be >= 0, got {trim}")
    if width < patch_width:
        raise ScanTooNarrow(f"scan width {width} < patch width {patch_width}")
    span = width - patch_width
    stride = math.ceil(span / (count - 1))
    overlap = patch_width - stride
    if overlap < 2 * trim:
        raise InsufficientOverlap(
            f"overlap {overlap} < 2 x trim {trim} for width {width}, "
            f"patch {patch_width}, count {count}"
        )
    starts = tuple(_round_half_up(i * span / (count - 1)) for i in range(count))
    centers = np.asarray(starts, dtype=np.float64) + patch_width / 2
    columns = np.arange(width, dtype=np.float64)
    owner = np.argmin(np.abs(columns[:, None] - centers[None, :]), axis=1)

    local = np.arange(width) - np.asarray(starts)[owner]
    trimmed = (local >= trim) & (local < patch_width - trim)
    at_edge = (np.arange(width) < trim) | (np.arange(width) >= width - trim)
    if not np.all(trimmed | at_edge):
        bad = int(np.flatnonzero(~(trimmed | at_edge))[0])
        raise InsufficientOverlap(
            f"column {bad} would come from the trimmed margin "
            f"of patch {int(owner[bad])}"
        )
    owner.flags.writeable = False
    return StitchPlan(width, patch_width, starts, owner, trim)


def extract_patches(
    scan: np.ndarray, plan: StitchPlan, scan_index: int = 0
) -> list[Patch]:
    """Cut the inference patches of ``plan`` out of a B-scan."""
    if scan.shape[1] != plan.width:
        raise PlanMismatch(
            f"scan width {scan.shape[1]} differs from plan width {plan.width}"
        )
    return [
        Patch(scan[:, start : start + plan.patch_width], start, scan_index)
        for start in plan.starts
    ]


def stitch(outputs: Sequence[Patch | np.ndarray], plan: StitchPlan) -> np.ndarray:
    """Compose patch outputs into one B-scan by copying owned columns.

    Raises:
        PlanMismatch: If the patches do not line up with the plan.

    """
    if len(outputs) != plan.count:
        raise PlanMismatch(f"{len(outputs)} patches for a plan of {plan.count}")
    arrays: list[np.ndarray] = []
    for index, item in enumerate(outputs):
        if isinstance(item, Patch):
            if item.origin != plan.starts[index]:
                raise PlanMismatch(
                    f"patch {index} origin {item.origin} "
                    f"!= plan start {plan.starts[index]}"
                )
            arrays.append(np.asarray(item.pixels))
        else:
            arrays.append(np.asarray(item))
    height = arrays[0].shape[0]
    for index, array in enumerate(arrays):
        if array.ndim != 2 or array.shape != (height, plan.patch_width):
            raise PlanMismatch(
                f"patch {index} has shape {array.shape}, "
                f"expected ({height}, {plan.patch_width})"
            )
    result = np.empty((height, plan.width), dtype=arrays[0].dtype)
    for index, (start, array) in enumerate(zip(plan.starts, arrays, strict=True)):
        columns = np.flatnonzero(plan.owner == index)
        result[:, columns] = array[:, columns - start]
    return result


def split_dataset(
    dataset: PatchDataset, validation_fraction: float, seed: int = 0
) -> tuple[PatchDataset, PatchDataset | None]:
    """Split patches into training and validation parts at random."""
    if not 0.0 <= validation_fraction < 1.0:
        raise ConfigError(
            f"validation_fraction must be in [0, 1), got {validation_fraction}"
        )
    if len(dataset) == 0:
        raise EmptyDataset("cannot split an empty patch dataset")
    n_val = int(round(len(dataset) * validation_fraction))
    if n_val == 0:
        return dataset, None
    order = np.random.default_rng(seed).permutation(len(dataset))
    return dataset.subset(order[n_val:]), dataset.subset(order[:n_val])


__all__ = [
    "DEFAULT_PATCH_COUNT",
    "DEFAULT_PATCH_WIDTH",
    "DEFAULT_TISSUE_THRESHOLD",
    "DEFAULT_TRIM",
    "Patch",
    "PatchDataset",
    "StitchPlan",
    "extract_patches",
    "plan_stitch",
    "reject_margin_cropped",
    "sample_training_patches",
    "split_dataset",
    "stitch",
]
