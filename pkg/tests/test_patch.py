"""Tests for patch sampling, margin rejection and stitched inference plans."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from octa_restore.errors import (
    ConfigError,
    DimMismatch,
    EmptyDataset,
    InsufficientOverlap,
    PlanMismatch,
    ScanTooNarrow,
)
from octa_restore.patch import (
    Patch,
    PatchDataset,
    extract_patches,
    plan_stitch,
    reject_margin_cropped,
    sample_training_patches,
    split_dataset,
    stitch,
)


def _retina_scan(
    height: int = 64, width: int = 200, top: int = 10, bottom: int = 40
) -> np.ndarray:
    scan = np.zeros((height, width), dtype=np.float32)
    scan[top:bottom] = 0.6
    return scan


def test_reject_margin_cropped_examples() -> None:
    """Only margin-row pixels above the tissue threshold cause rejection."""

    empty = Patch(np.zeros((16, 8), dtype=np.float32), origin=0)
    assert reject_margin_cropped(empty) is False
    top = np.zeros((16, 8), dtype=np.float32)
    top[0, 3] = 0.5
    assert reject_margin_cropped(Patch(top, origin=0)) is True
    faint = np.zeros((16, 8), dtype=np.float32)
    faint[0] = 0.09
    faint[-1] = 0.09
    faint[5] = 1.0
    assert reject_margin_cropped(Patch(faint, origin=0)) is False


def test_reject_uses_unpadded_bottom_row() -> None:
    """The bottom margin is the last row before axial zero padding."""

    pixels = np.zeros((16, 8), dtype=np.float32)
    pixels[11] = 0.8
    patch = Patch(pixels, origin=0)
    assert reject_margin_cropped(patch) is False
    assert reject_margin_cropped(patch, unpadded_height=12) is True


def test_sampling_is_deterministic_and_paired() -> None:
    """Fixed seeds reproduce the same origins; OCT and OCTA share them."""

    oct_scan = _retina_scan()
    octa_scan = np.random.default_rng(1).random(oct_scan.shape, dtype=np.float32)
    first = sample_training_patches(oct_scan, octa_scan, 100, 7, patch_width=32)
    second = sample_training_patches(oct_scan, octa_scan, 100, 7, patch_width=32)
    assert len(first) == 100
    assert [a.origin for a, _ in first] == [a.origin for a, _ in second]
    for oct_patch, octa_patch in first:
        assert oct_patch.origin == octa_patch.origin
        assert 0 <= oct_patch.origin <= 200 - 32
        np.testing.assert_array_equal(
            octa_patch.pixels, octa_scan[:, oct_patch.origin : oct_patch.origin + 32]
        )


def test_sampling_full_width_origins_are_zero() -> None:
    """When the scan is exactly one patch wide every origin is 0."""

    scan = _retina_scan(width=32)
    pairs = sample_training_patches(scan, scan, 10, 0, patch_width=32)
    assert {oct_patch.origin for oct_patch, _ in pairs} == {0}


def test_sampling_gives_up_on_cropped_retina() -> None:
    """Tissue touching the top margin everywhere yields no pairs."""

    scan = _retina_scan(top=0)
    assert sample_training_patches(scan, scan, 5, 0, patch_width=32) == []


def test_sampling_errors() -> None:
    """Mismatched or narrow scans are rejected."""

    with pytest.raises(DimMismatch):
        sample_training_patches(
            np.zeros((8, 40)), np.zeros((8, 41)), 1, 0, patch_width=32
        )
    with pytest.raises(ScanTooNarrow):
        sample_training_patches(
            np.zeros((8, 16)), np.zeros((8, 16)), 1, 0, patch_width=32
        )


def test_plan_for_width_500() -> None:
    """Default plan: five starts 93 apart, ownership split at centre midpoints."""

    plan = plan_stitch(500)
    assert plan.starts == (0, 93, 186, 279, 372)
    assert plan.ranges() == [(0, 110), (111, 203), (204, 296), (297, 389), (390, 499)]
    assert plan.boundaries() == [(110, 111), (203, 204), (296, 297), (389, 390)]
    payload = plan.to_dict()
    assert payload["starts"] == [0, 93, 186, 279, 372]
    assert payload["ownership"][0] == [0, 110]


def test_plan_single_patch_width_ties_to_first() -> None:
    """Two patches at the same start: patch 0 owns every column."""

    plan = plan_stitch(128, count=2)
    assert plan.starts == (0, 0)
    assert plan.ranges() == [(0, 127), (-1, -1)]
    assert plan.boundaries() == []


def test_plan_errors() -> None:
    """Too few patches, narrow scans and too little overlap are rejected."""

    with pytest.raises(ConfigError):
        plan_stitch(500, count=1)
    with pytest.raises(ScanTooNarrow):
        plan_stitch(100)
    with pytest.raises(InsufficientOverlap):
        plan_stitch(1000)
    with pytest.raises(InsufficientOverlap):
        plan_stitch(20, patch_width=20, count=2, trim=11)


@settings(max_examples=100, deadline=None)
@given(width=st.integers(128, 640), count=st.integers(2, 8), trim=st.integers(0, 16))
def test_plan_partition_and_trim(width: int, count: int, trim: int) -> None:
    """Valid plans own every column once and never read a trimmed inner margin."""

    try:
        plan = plan_stitch(width, 128, count, trim)
    except InsufficientOverlap:
        return
    assert plan.starts[0] == 0
    assert plan.starts[-1] == width - 128
    assert list(plan.starts) == sorted(plan.starts)
    assert plan.owner.shape == (width,)
    columns = np.arange(width)
    local = columns - np.asarray(plan.starts)[plan.owner]
    assert np.all((local >= 0) & (local < 128))
    inner = (columns >= trim) & (columns < width - trim)
    assert np.all((local[inner] >= trim) & (local[inner] < 128 - trim))


@pytest.mark.parametrize(
    ("width", "patch_width", "count", "trim"),
    [(500, 128, 5, 8), (256, 128, 5, 8), (192, 128, 5, 8), (64, 32, 5, 2)],
)
def test_stitch_of_extracted_patches_is_identity(
    width: int, patch_width: int, count: int, trim: int
) -> None:
    """Stitching the unmodified patches of 50 random scans reproduces each exactly."""

    rng = np.random.default_rng(width)
    plan = plan_stitch(width, patch_width, count, trim)
    for _ in range(50):
        scan = rng.random((48, width), dtype=np.float32)
        patches = extract_patches(scan, plan)
        assert [p.origin for p in patches] == list(plan.starts)
        np.testing.assert_array_equal(stitch(patches, plan), scan)


def test_stitch_is_piecewise_constant_on_ownership() -> None:
    """Distinct constant patches paint exactly their owned column ranges."""

    plan = plan_stitch(500)
    outputs = [np.full((4, 128), float(k), dtype=np.float32) for k in range(plan.count)]
    result = stitch(outputs, plan)
    for k, (first, last) in enumerate(plan.ranges()):
        assert np.all(result[:, first : last + 1] == k)
    constant = stitch([np.full((4, 128), 0.3, dtype=np.float32)] * plan.count, plan)
    assert np.all(constant == np.float32(0.3))


def test_stitch_rejects_misaligned_patches() -> None:
    """Wrong count, origin or shape raise PlanMismatch."""

    plan = plan_stitch(500)
    scan = np.zeros((8, 500), dtype=np.float32)
    patches = extract_patches(scan, plan)
    with pytest.raises(PlanMismatch):
        stitch(patches[:-1], plan)
    shifted = [Patch(p.pixels, p.origin + 1) for p in patches]
    with pytest.raises(PlanMismatch):
        stitch(shifted, plan)
    with pytest.raises(PlanMismatch):
        stitch([np.zeros((8, 127), dtype=np.float32)] * plan.count, plan)
    with pytest.raises(PlanMismatch):
        extract_patches(np.zeros((8, 499), dtype=np.float32), plan)


def test_split_dataset() -> None:
    """Validation share is drawn without overlap; zero share keeps all patches."""

    stack = np.arange(10 * 4 * 4, dtype=np.float32).reshape(10, 4, 4)
    dataset = PatchDataset(stack, stack.copy(), stack.copy())
    train_part, validation = split_dataset(dataset, 0.3, seed=1)
    assert validation is not None
    assert len(train_part) == 7
    assert len(validation) == 3
    seen = {float(p[0, 0]) for p in train_part.oct}
    seen |= {float(p[0, 0]) for p in validation.oct}
    assert len(seen) == 10
    same, none = split_dataset(dataset, 0.0)
    assert same is dataset
    assert none is None
    with pytest.raises(ConfigError):
        split_dataset(dataset, 1.0)
    empty = np.zeros((0, 4, 4), dtype=np.float32)
    with pytest.raises(EmptyDataset):
        split_dataset(PatchDataset(empty, empty, empty), 0.5)
