"""Target smoothing for the first training epochs."""

from __future__ import annotations

from scipy import ndimage

from octa_restore.volume import Volume


def median_filter_3(volume: Volume) -> Volume:
    """Replace every voxel by the median of its 3x3x3 neighbourhood.

    Borders replicate the outermost voxel (clamped indices), across scan, axial
    and lateral axes alike.
    """
    return volume.replace(ndimage.median_filter(volume.data, size=3, mode="nearest"))


__all__ = ["median_filter_3"]
