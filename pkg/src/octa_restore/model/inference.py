"""Patch-wise generation of OCTA B-scans from OCT B-scans."""

from __future__ import annotations

import logging
from collections.abc import Iterable

import numpy as np
import torch

from octa_restore.errors import DimMismatch, IndexOutOfRange
from octa_restore.patch import StitchPlan, extract_patches, stitch
from octa_restore.volume import Volume, crop_axial, pad_axial

from .params import Mode, ModelParams, forward

logger = logging.getLogger(__name__)


def infer_bscan(
    params: ModelParams, oct_scan: np.ndarray, plan: StitchPlan
) -> np.ndarray:
    """Translate one normalised OCT B-scan into an OCTA B-scan.

    The scan is cut into the patches of ``plan``, every patch is run through the
    network in eval mode and the outputs are stitched back together. Axial
    heights not divisible by ``2 ** levels`` are zero padded for the forward pass
    and cropped afterwards.

    Args:
        params: Trained network.
        oct_scan: (axial, lateral) array with values in [0, 1].
        plan: Stitch plan for the scan width.

    Returns:
        float32 array of the same shape as ``oct_scan``.

    """
    scan = np.asarray(oct_scan, dtype=np.float32)
    height = scan.shape[0]
    multiple = params.config.spatial_multiple
    padded_height = -(-height // multiple) * multiple
    if padded_height != height:
        scan = np.pad(scan, ((0, padded_height - height), (0, 0)))
    patches = extract_patches(scan, plan)
    batch = torch.from_numpy(np.stack([p.pixels for p in patches])).unsqueeze(1)
    with torch.no_grad():
        output = forward(params, batch, Mode.EVAL)
    result = stitch(list(output.squeeze(1).cpu().numpy()), plan)
    return np.ascontiguousarray(result[:height], dtype=np.float32)


def infer_volume(
    params: ModelParams,
    oct_volume: Volume,
    plan: StitchPlan,
    scans: Iterable[int] | None = None,
) -> Volume:
    """Generate OCTA B-scans for ``scans`` (all by default); others are zero.

    The volume is padded axially once to a height the network accepts and the
    result is cropped back to ``oct_volume.n_axial``.
    """
    if oct_volume.n_lateral != plan.width:
        raise DimMismatch(
            f"volume width {oct_volume.n_lateral} differs from plan width {plan.width}"
        )
    indices = list(range(oct_volume.n_scans)) if scans is None else list(scans)
    for index in indices:
        if not 0 <= index < oct_volume.n_scans:
            raise IndexOutOfRange(f"scan {index} outside [0, {oct_volume.n_scans})")
    multiple = params.config.spatial_multiple
    padded = pad_axial(oct_volume, -(-oct_volume.n_axial // multiple) * multiple)
    data = np.zeros(padded.dims, dtype=np.float32)
    for index in indices:
        data[index] = infer_bscan(params, padded.scan(index), plan)
    logger.info("Generated %d B-scans", len(indices))
    return crop_axial(padded.replace(data), oct_volume.n_axial)


__all__ = ["infer_bscan", "infer_volume"]
