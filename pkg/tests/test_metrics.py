"""Tests for error metrics, SSIM, layer bounds and en-face projections."""

from __future__ import annotations

import json
from pathlib import Path

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays
from skimage.metrics import structural_similarity

from octa_restore.errors import ConfigError, ImageTooSmall, InvalidBounds, ShapeMismatch
from octa_restore.metrics import (
    LayerBounds,
    ProjectionStatistic,
    SsimConfig,
    enface_projection,
    evaluate,
    load_bounds,
    local_variance,
    mae,
    mean_local_variance,
    mse,
    save_bounds,
    ssim,
    ssim_map,
)
from octa_restore.volume import Volume


def test_mae_mse_examples() -> None:
    """Identical inputs score zero; a constant 0.25 gap gives 0.25 and 0.0625."""

    a = np.full((4, 4), 0.5, dtype=np.float32)
    b = np.full((4, 4), 0.25, dtype=np.float32)
    assert mae(a, a) == 0.0
    assert mse(a, a) == 0.0
    assert mae(a, b) == pytest.approx(0.25)
    assert mse(a, b) == pytest.approx(0.0625)
    with pytest.raises(ShapeMismatch):
        mae(a, b[:3])


def test_ssim_identity_and_extremes() -> None:
    """SSIM is 1 for identical images and C1 / (1 + C1) for zeros against ones."""

    image = np.random.default_rng(0).random((16, 16))
    assert ssim(image, image) == pytest.approx(1.0)
    assert ssim(np.zeros((16, 16)), np.ones((16, 16))) == pytest.approx(0.0001 / 1.0001)


@pytest.mark.parametrize("seed", range(20))
def test_ssim_matches_reference_implementation(seed: int) -> None:
    """Random 64x64 pairs agree with scikit-image's Gaussian SSIM within 1e-6."""

    rng = np.random.default_rng(seed)
    a = rng.random((64, 64))
    b = np.clip(a + rng.normal(0.0, 0.1, a.shape), 0.0, 1.0)
    reference = structural_similarity(
        a,
        b,
        gaussian_weights=True,
        sigma=1.5,
        use_sample_covariance=False,
        data_range=1.0,
    )
    assert ssim(a, b) == pytest.approx(reference, abs=1e-6)


_IMAGES = arrays(np.float64, (16, 16), elements=st.floats(0.0, 1.0))


@settings(max_examples=40, deadline=None)
@given(a=_IMAGES, b=_IMAGES)
def test_metrics_are_symmetric_and_ssim_is_bounded(
    a: np.ndarray, b: np.ndarray
) -> None:
    """Swapping the images changes no score; SSIM stays within [-1, 1]."""

    assert mae(a, b) == mae(b, a)
    assert mse(a, b) == mse(b, a)
    score = ssim(a, b)
    assert score == pytest.approx(ssim(b, a), abs=1e-12)
    assert -1.0 - 1e-12 <= score <= 1.0 + 1e-12


def test_ssim_map_shape_and_errors() -> None:
    """The map covers the valid interior; small or 3-D inputs are rejected."""

    image = np.zeros((20, 30))
    assert ssim_map(image, image).shape == (10, 20)
    with pytest.raises(ImageTooSmall):
        ssim(np.zeros((10, 40)), np.zeros((10, 40)))
    with pytest.raises(ShapeMismatch):
        ssim(np.zeros((2, 16, 16)), np.zeros((2, 16, 16)))
    assert SsimConfig().to_dict()["window"] == 11


def _slab_volume() -> tuple[Volume, LayerBounds]:
    data = np.zeros((4, 20, 10), dtype=np.float32)
    data[:, 5:15, :] = 0.1
    data[2, 8:10, 5] = 1.0
    # Outside the slab; must not show up in the segmented projection.
    data[1, 18, 3] = 5.0
    return Volume(data), LayerBounds.flat(4, 10, 5, 15)


def test_projection_matches_column_mean_oracle() -> None:
    """The segmented mean projection equals a per-column loop over the slab."""

    volume, bounds = _slab_volume()
    image = enface_projection(volume, bounds, normalize=False)
    oracle = np.zeros((4, 10))
    for s in range(4):
        for column in range(10):
            upper, lower = bounds.upper[s, column], bounds.lower[s, column]
            oracle[s, column] = volume.data[s, upper:lower, column].mean()
    np.testing.assert_allclose(image, oracle, rtol=1e-6)
    normalised = enface_projection(volume, bounds)
    assert normalised[2, 5] == 1.0
    assert normalised[2, 5] > normalised[2, 4]
    assert normalised.shape == (4, 10)
    assert normalised.dtype == np.float32


def test_projection_statistics_and_full_bounds() -> None:
    """Full bounds reproduce the unsegmented image; sum and max reduce as named."""

    volume, bounds = _slab_volume()
    unsegmented = enface_projection(volume)
    full = enface_projection(volume, LayerBounds.full(volume))
    np.testing.assert_array_equal(full, unsegmented)
    assert unsegmented[1, 3] == 1.0
    sums = enface_projection(volume, bounds, ProjectionStatistic.SUM, normalize=False)
    assert sums[0, 0] == pytest.approx(1.0)
    peaks = enface_projection(volume, bounds, ProjectionStatistic.MAX, normalize=False)
    assert peaks[2, 5] == 1.0
    assert peaks[1, 3] == pytest.approx(0.1)


@pytest.mark.parametrize(("c", "expected"), [(0.4, 1.0), (0.0, 0.0)])
def test_projection_of_constant_slab(c: float, expected: float) -> None:
    """A constant slab projects to a constant image, normalised to 1 unless zero."""

    volume = Volume(np.full((3, 8, 5), c, dtype=np.float32))
    image = enface_projection(volume, LayerBounds.flat(3, 5, 2, 6))
    assert np.all(image == expected)


@pytest.mark.parametrize(
    "statistic", [ProjectionStatistic.MEAN, ProjectionStatistic.SUM]
)
@pytest.mark.parametrize(("a", "b"), [(1.0, 1.0), (0.5, 2.0), (3.0, -1.0)])
def test_projection_is_linear(
    statistic: ProjectionStatistic, a: float, b: float
) -> None:
    """Unnormalised mean and sum projections commute with linear combinations."""

    rng = np.random.default_rng(4)
    first = rng.random((5, 12, 7), dtype=np.float32)
    second = rng.random((5, 12, 7), dtype=np.float32)
    bounds = LayerBounds.flat(5, 7, 3, 10)
    combined = Volume((a * first + b * second).astype(np.float32))
    image = enface_projection(combined, bounds, statistic, normalize=False)
    expected = a * enface_projection(
        Volume(first), bounds, statistic, normalize=False
    ) + b * enface_projection(Volume(second), bounds, statistic, normalize=False)
    np.testing.assert_allclose(image, expected, rtol=1e-5, atol=1e-4)


def test_bounds_validation() -> None:
    """Bounds must fit the volume and keep upper strictly above lower."""

    volume = Volume(np.zeros((2, 8, 3), dtype=np.float32))
    with pytest.raises(InvalidBounds):
        enface_projection(volume, LayerBounds.flat(2, 3, 4, 4))
    with pytest.raises(InvalidBounds):
        enface_projection(volume, LayerBounds.flat(2, 3, 0, 9))
    with pytest.raises(InvalidBounds):
        enface_projection(volume, LayerBounds.flat(2, 4, 0, 8))


def test_bounds_files(tmp_path: Path) -> None:
    """Per-scan files round-trip; constant files expand to every A-scan."""

    bounds = LayerBounds(np.array([[1, 2], [3, 4]]), np.array([[5, 6], [7, 8]]))
    path = tmp_path / "bounds.json"
    save_bounds(bounds, path)
    loaded = load_bounds(path, 2, 2)
    np.testing.assert_array_equal(loaded.upper, bounds.upper)
    np.testing.assert_array_equal(loaded.lower, bounds.lower)
    constant = tmp_path / "constant.json"
    constant.write_text(json.dumps({"constant": [2, 9]}), encoding="utf-8")
    flat = load_bounds(constant, 3, 4)
    assert flat.upper.shape == (3, 4)
    assert np.all(flat.lower == 9)
    with pytest.raises(InvalidBounds):
        load_bounds(path, 3, 2)
    wrong = tmp_path / "wrong.json"
    wrong.write_text("[1, 2]", encoding="utf-8")
    with pytest.raises(InvalidBounds):
        load_bounds(wrong, 2, 2)


def test_mean_local_variance() -> None:
    """Flat images have no local variance; noise has some."""

    assert mean_local_variance(np.full((8, 8), 0.3)) == pytest.approx(0.0, abs=1e-12)
    noisy = np.random.default_rng(0).random((16, 16))
    assert mean_local_variance(noisy) > 0.01


def test_masked_local_variance() -> None:
    """A mask restricts the average to the selected pixels."""

    image = np.zeros((12, 12))
    image[:, 6:] = np.random.default_rng(1).random((12, 6))
    variance = local_variance(image)
    assert variance.shape == image.shape
    assert np.all(variance >= 0.0)
    left = np.zeros(image.shape, dtype=bool)
    left[:, :3] = True
    assert mean_local_variance(image, mask=left) == pytest.approx(0.0, abs=1e-12)
    assert mean_local_variance(image, mask=~left) > 0.0
    with pytest.raises(ShapeMismatch):
        mean_local_variance(image, mask=left[:5])
    with pytest.raises(ConfigError):
        mean_local_variance(image, mask=np.zeros(image.shape, dtype=bool))


def test_evaluate_rows() -> None:
    """Identical volumes score perfectly in every row; intact selection is counted."""

    data = np.random.default_rng(0).random((12, 16, 16), dtype=np.float32)
    volume = Volume(data)
    bounds = LayerBounds.flat(12, 16, 2, 14)
    report = evaluate(volume, volume, bounds=bounds, intact=[0, 2])
    assert report["bscans"]["count"] == 2
    assert report["bscans"]["mae"] == 0.0
    assert report["bscans"]["ssim"] == pytest.approx(1.0)
    assert report["projection"]["mse"] == 0.0
    assert report["segmented_projection"]["ssim"] == pytest.approx(1.0)
    noisy = Volume(np.clip(data + 0.1, 0.0, 1.0))
    assert evaluate(volume, noisy)["bscans"]["mae"] > 0.0
    with pytest.raises(ConfigError):
        evaluate(volume, volume, intact=[])
    with pytest.raises(ShapeMismatch):
        evaluate(volume, Volume(data[:11]))


def test_bounds_to_dict_pairs() -> None:
    """Serialised bounds pair upper and lower per A-scan."""

    _, bounds = _slab_volume()
    assert bounds.to_dict()["scans"][0][0] == [5, 15]
    assert bounds.mask(20)[0, :, 0].sum() == 10
