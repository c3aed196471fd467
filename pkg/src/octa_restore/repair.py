"""Detect defective OCTA scans and replace them with generated ones."""

from __future__ import annotations

import asyncio
import enum
import logging
from collections.abc import Sequence
from concurrent.futures import ThreadPoolExecutor

import numpy as np

from .config import DEFAULT_JOBS
from .detect import (
    DefectKind,
    DetectorConfig,
    ScanLabel,
    defect_indices,
    detect_defects,
)
from .errors import DimMismatch, PlanMismatch
from .event_bus import REPAIR_DETECTED, REPAIR_DONE, REPAIR_SCAN_REPLACED, EventBus
from .metrics import LayerBounds, enface_projection
from .model import ModelParams, infer_bscan
from .patch import StitchPlan
from .volume import Volume, normalize

logger = logging.getLogger(__name__)

BAND_ROWS = 4
DEFECT_COLOR = (255, 0, 0)
INTACT_COLOR = (0, 255, 0)


class RepairMode(enum.StrEnum):
    """Which detector verdicts trigger replacement."""

    LOW = "low"
    HIGH = "high"
    BOTH = "both"

    @property
    def kinds(self) -> tuple[DefectKind, ...]:
        """Defect kinds replaced in this mode."""
        if self is RepairMode.LOW:
            return (DefectKind.LOW,)
        if self is RepairMode.HIGH:
            return (DefectKind.HIGH,)
        return (DefectKind.LOW, DefectKind.HIGH)


async def repair_volume_async(
    oct_volume: Volume,
    octa_volume: Volume,
    params: ModelParams,
    dcfg: DetectorConfig | None,
    plan: StitchPlan,
    mode: RepairMode = RepairMode.BOTH,
    *,
    jobs: int | None = None,
    bus: EventBus | None = None,
) -> tuple[Volume, list[ScanLabel]]:
    """Async variant of :func:`repair_volume`.

    Generated scans are computed on a thread pool of ``jobs`` workers and merged
    into a copy of ``octa_volume`` once all of them are done.
    """
    if oct_volume.dims != octa_volume.dims:
        raise DimMismatch(f"OCT {oct_volume.dims} and OCTA {octa_volume.dims} differ")
    if plan.width != octa_volume.n_lateral:
        raise PlanMismatch(
            f"plan width {plan.width} differs from volume width {octa_volume.n_lateral}"
        )
    labels = detect_defects(octa_volume, dcfg)
    targets = defect_indices(labels, mode.kinds)
    if bus is not None:
        await bus.publish(
            REPAIR_DETECTED,
            {"n_scans": octa_volume.n_scans, "indices": targets, "mode": mode.value},
        )
    if not targets:
        logger.info("No %s defects detected; volume left unchanged", mode.value)
        if bus is not None:
            await bus.publish(REPAIR_DONE, {"replaced": 0})
        return octa_volume, labels

    oct_input = normalize(oct_volume)
    loop = asyncio.get_running_loop()

    with ThreadPoolExecutor(max_workers=jobs or DEFAULT_JOBS) as pool:

        async def generate(index: int) -> tuple[int, np.ndarray]:
            scan = await loop.run_in_executor(
                pool, infer_bscan, params, oct_input.scan(index), plan
            )
            if bus is not None:
                await bus.publish(
                    REPAIR_SCAN_REPLACED,
                    {
                        "index": index,
                        "kind": labels[index].kind.value,
                        "total": len(targets),
                    },
                )
            return index, scan

        generated = await asyncio.gather(*(generate(index) for index in targets))

    data = octa_volume.data.copy()
    for index, scan in generated:
        data[index] = scan
    logger.info("Replaced %d of %d scans", len(targets), octa_volume.n_scans)
    if bus is not None:
        await bus.publish(REPAIR_DONE, {"replaced": len(targets)})
    return octa_volume.replace(data), labels


def repair_volume(
    oct_volume: Volume,
    octa_volume: Volume,
    params: ModelParams,
    dcfg: DetectorConfig | None,
    plan: StitchPlan,
    mode: RepairMode = RepairMode.BOTH,
    *,
    jobs: int | None = None,
    bus: EventBus | None = None,
) -> tuple[Volume, list[ScanLabel]]:
    """Replace every detected defect scan by a B-scan generated from OCT.

    Intact scans are copied bit-exactly. The OCT volume is normalised before
    inference; the OCTA volume is expected in ``[0, 1]``.

    Args:
        oct_volume: Structural volume; its scans at defect positions must be intact.
        octa_volume: Angiography volume to repair.
        params: Trained network.
        dcfg: Detector configuration (defaults when ``None``).
        plan: Stitch plan for the scan width.
        mode: Which defect kinds to replace.
        jobs: Worker threads for inference.
        bus: Optional progress bus.

    Returns:
        The repaired volume and the detector labels of ``octa_volume``.

    Raises:
        DimMismatch: If the volumes differ in shape.

    """
    return asyncio.run(
        repair_volume_async(
            oct_volume, octa_volume, params, dcfg, plan, mode, jobs=jobs, bus=bus
        )
    )


def annotated_projection(
    repaired: Volume,
    labels: Sequence[ScanLabel],
    bounds: LayerBounds | None = None,
) -> np.ndarray:
    """RGB en-face projection with a red / green defect marker band on top.

    Scans run along the image columns: column ``s`` shows scan ``s`` and its
    band is red when the scan was labelled defective. The result has shape
    ``(n_lateral + 4, n_scans, 3)`` and dtype ``uint8``.
    """
    if len(labels) != repaired.n_scans:
        raise DimMismatch(f"{len(labels)} labels for {repaired.n_scans} scans")
    projection = enface_projection(repaired, bounds)
    gray = np.rint(np.clip(projection.T, 0.0, 1.0) * 255.0).astype(np.uint8)
    image = np.empty((BAND_ROWS + gray.shape[0], gray.shape[1], 3), dtype=np.uint8)
    image[BAND_ROWS:] = gray[..., None]
    defective = np.array([label.is_defect for label in labels])
    image[:BAND_ROWS, defective] = DEFECT_COLOR
    image[:BAND_ROWS, ~defective] = INTACT_COLOR
    return image


__all__ = [
    "BAND_ROWS",
    "DEFECT_COLOR",
    "INTACT_COLOR",
    "RepairMode",
    "annotated_projection",
    "repair_volume",
    "repair_volume_async",
]
