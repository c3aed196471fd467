"""Tests for local statistics, defect labelling and threshold calibration."""

from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from conftest import STRICT_DETECTOR
from octa_restore.detect import (
    DefectKind,
    DetectionScores,
    DetectorConfig,
    ScanLabel,
    SpreadMode,
    calibrate_detector,
    defect_indices,
    detect_defects,
    detection_scores,
    flow_sums,
    label_sums,
    local_stats,
)
from octa_restore.errors import ConfigError, IndexOutOfRange, WindowTooLarge
from octa_restore.synth import (
    PhantomConfig,
    generate_phantom,
    inject_defects,
    spaced_defects,
)
from octa_restore.volume import Volume


def _uniform_volume(n_scans: int, level: float = 25.0) -> np.ndarray:
    return np.full((n_scans, 2, 2), level, dtype=np.float32)


def test_flow_sums() -> None:
    """Sums cover the whole B-scan and are equal for identical scans."""

    data = np.zeros((3, 2, 2), dtype=np.float32)
    data[0] = [[0.1, 0.2], [0.3, 0.4]]
    data[2] = data[0]
    sums = flow_sums(Volume(data))
    assert sums.dtype == np.float64
    assert sums[0] == pytest.approx(1.0)
    assert sums[1] == 0.0
    assert sums[0] == sums[2]


def test_local_stats_single_dropout() -> None:
    """Fifteen scans of 100 plus one zero give mean 93.75, std about 24.206."""

    s = [100.0] * 16
    s[10] = 0.0
    mean, spread = local_stats(s, 10, 16)
    assert mean == pytest.approx(93.75)
    assert spread == pytest.approx(24.2061, abs=1e-4)
    _, variance = local_stats(s, 10, 16, SpreadMode.VARIANCE)
    assert variance == pytest.approx(spread**2)


def test_local_stats_boundary_window_is_shifted() -> None:
    """At the end of the sequence the window keeps its size."""

    mean, spread = local_stats([100.0, 100.0, 100.0, 100.0, 1000.0], 4, 5)
    assert mean == pytest.approx(280.0)
    assert spread == pytest.approx(360.0)
    # A shrunken window would only see the last three values.
    assert local_stats(list(range(10)), 9, 4)[0] == pytest.approx(7.5)


@settings(max_examples=50, deadline=None)
@given(
    c=st.floats(0, 1e6, allow_nan=False),
    n=st.integers(2, 40),
    data=st.data(),
)
def test_local_stats_constant_sequence(c: float, n: int, data: st.DataObject) -> None:
    """Constant sequences have mean ``c`` and zero spread everywhere."""

    x = data.draw(st.integers(1, n))
    i = data.draw(st.integers(0, n - 1))
    mean, spread = local_stats([c] * n, i, x)
    assert mean == pytest.approx(c)
    assert spread == pytest.approx(0.0, abs=1e-9 * max(c, 1.0))


def test_local_stats_rejects_large_window() -> None:
    """A window longer than the sequence is an error."""

    with pytest.raises(WindowTooLarge):
        local_stats([1.0, 2.0], 0, 3)


def _decided(label: ScanLabel, tolerance: float) -> bool:
    margin = min(abs(label.s - label.theta_l), abs(label.s - label.theta_u))
    return margin > tolerance


_SUMS = st.lists(st.integers(0, 1000), min_size=16, max_size=40)


@settings(max_examples=50, deadline=None)
@given(s=_SUMS, c=st.integers(1, 10_000))
def test_labels_ignore_an_additive_constant(s: list[int], c: int) -> None:
    """Adding a constant to every sum shifts both limits and keeps every label."""

    cfg = DetectorConfig()
    base = label_sums(s, cfg)
    shifted = label_sums([value + c for value in s], cfg)
    tolerance = 1e-9 * (1 + max(s) + c)
    for before, after in zip(base, shifted, strict=True):
        assert after.theta_l == pytest.approx(before.theta_l + c, abs=tolerance)
        assert after.theta_u == pytest.approx(before.theta_u + c, abs=tolerance)
        if _decided(before, tolerance):
            assert after.kind is before.kind


@settings(max_examples=50, deadline=None)
@given(s=_SUMS, k=st.floats(0.01, 100.0))
def test_labels_ignore_positive_scaling(s: list[int], k: float) -> None:
    """With standard deviations as spread, rescaling the sums keeps every label."""

    cfg = DetectorConfig(spread_mode=SpreadMode.STD_DEV)
    base = label_sums(s, cfg)
    scaled = label_sums([value * k for value in s], cfg)
    tolerance = 1e-9 * (1 + max(s))
    for before, after in zip(base, scaled, strict=True):
        assert after.theta_l == pytest.approx(k * before.theta_l, abs=k * tolerance)
        if _decided(before, tolerance):
            assert after.kind is before.kind


@settings(max_examples=50, deadline=None)
@given(s=st.lists(st.integers(0, 1000), min_size=24, max_size=48), k=st.integers(1, 8))
def test_interior_labels_follow_a_shift(s: list[int], k: int) -> None:
    """Dropping the first k scans moves every unclamped verdict k places down."""

    cfg = DetectorConfig()
    whole = label_sums(s, cfg)
    tail = label_sums(s[k:], cfg)
    n = len(s) - k
    for index, label in enumerate(tail):
        unclamped = all(
            index - (x - 1) // 2 >= 0 and index - (x - 1) // 2 + x <= n
            for x in (cfg.window_l, cfg.window_u)
        )
        if not unclamped:
            continue
        original = whole[index + k]
        assert label.s == original.s
        assert label.theta_l == pytest.approx(original.theta_l, rel=1e-12, abs=1e-9)
        assert label.theta_u == pytest.approx(original.theta_u, rel=1e-12, abs=1e-9)
        if _decided(original, 1e-6):
            assert label.kind is original.kind


def test_local_stats_rejects_out_of_range_index() -> None:
    """Indices outside the sequence are a data error."""

    with pytest.raises(IndexOutOfRange):
        local_stats([1.0, 2.0, 3.0], 3, 2)
    with pytest.raises(IndexOutOfRange):
        local_stats([1.0, 2.0, 3.0], -1, 2)


@settings(max_examples=50, deadline=None)
@given(
    s=st.lists(st.floats(0, 1e4, allow_nan=False), min_size=16, max_size=40),
)
def test_label_sums_match_local_stats(s: list[float]) -> None:
    """Vectorised thresholds agree with the scalar neighbourhood oracle."""

    cfg = DetectorConfig()
    for label in label_sums(s, cfg):
        mean_l, spread_l = local_stats(s, label.index, cfg.window_l)
        mean_u, spread_u = local_stats(s, label.index, cfg.window_u)
        expected_l = mean_l - cfg.tau_l * spread_l
        expected_u = mean_u + cfg.tau_u * spread_u
        assert label.theta_l == pytest.approx(expected_l, rel=1e-9, abs=1e-6)
        assert label.theta_u == pytest.approx(expected_u, rel=1e-9, abs=1e-6)


def test_constant_sums_are_intact() -> None:
    """Zero spread makes both strict comparisons fail."""

    labels = detect_defects(Volume(_uniform_volume(20)))
    assert all(label.kind is DefectKind.INTACT for label in labels)


def test_single_blink_is_low_with_defaults() -> None:
    """One dark scan among bright ones falls below theta_l of about 93.05."""

    data = _uniform_volume(16)
    data[10] = 0.0
    labels = detect_defects(Volume(data))
    assert labels[10].kind is DefectKind.LOW
    assert labels[10].theta_l == pytest.approx(93.05, abs=0.01)
    assert labels[10].to_dict()["label"] == "low"


def test_ties_stay_intact_and_low_wins() -> None:
    """Equality with a threshold is intact; low takes precedence over high."""

    cfg = DetectorConfig(tau_l=1.0, tau_u=1.0, window_l=2, window_u=2)
    # Window of two equal values: theta_l == theta_u == s.
    kinds = [label.kind for label in label_sums([5.0, 5.0], cfg)]
    assert kinds == [DefectKind.INTACT] * 2
    both = DetectorConfig(tau_l=0.5, tau_u=0.5, window_l=6, window_u=2)
    first = label_sums([1.0, 0.0, 10.0, 10.0, 10.0, 10.0], both)[0]
    assert first.s < first.theta_l
    assert first.s > first.theta_u
    assert first.kind is DefectKind.LOW


def test_detector_config_validation() -> None:
    """Non-positive coefficients, tiny windows and oversized windows are rejected."""

    with pytest.raises(ConfigError):
        DetectorConfig(tau_l=0.0).validate()
    with pytest.raises(ConfigError):
        DetectorConfig(window_u=1).validate()
    with pytest.raises(WindowTooLarge):
        detect_defects(Volume(_uniform_volume(8)))


def test_defect_indices_filters_kinds() -> None:
    """Low and high scans can be selected separately."""

    data = _uniform_volume(32)
    data[8] = 0.0
    data[20] = 100.0
    labels = detect_defects(Volume(data), STRICT_DETECTOR)
    assert defect_indices(labels, [DefectKind.LOW]) == [8]
    assert defect_indices(labels, [DefectKind.HIGH]) == [20]
    assert defect_indices(labels) == [8, 20]


def test_detection_scores() -> None:
    """Precision, recall and F1 follow their definitions; empty sets score 1."""

    labels = label_sums([100.0] * 16 + [0.0] + [100.0] * 15, STRICT_DETECTOR)
    truth = [False] * 32
    truth[16] = True
    truth[3] = True
    scores = detection_scores(labels, truth)
    assert scores == DetectionScores(1, 0, 1)
    assert scores.precision == 1.0
    assert scores.recall == 0.5
    assert scores.f1 == pytest.approx(2 / 3)
    assert DetectionScores(0, 0, 0).recall == 1.0
    with pytest.raises(ConfigError):
        detection_scores(labels, truth[:-1])


def test_phantom_defects_are_found() -> None:
    """Five blinks and five motion scans are all flagged with the strict detector."""

    cfg = PhantomConfig(dims=(128, 32, 32), seed=5)
    oct_volume, octa, truth = generate_phantom(cfg)
    assert oct_volume.dims == octa.dims
    requests = spaced_defects(128, 5, 5, seed=5)
    corrupted, truth = inject_defects(octa, requests, truth=truth)
    labels = detect_defects(corrupted, STRICT_DETECTOR)
    scores = detection_scores(labels, truth.defect_mask)
    assert scores.recall >= 0.95
    for index in truth.defect_indices():
        blinked = corrupted.data[index].sum() == 0
        expected = DefectKind.LOW if blinked else DefectKind.HIGH
        assert labels[index].kind is expected


def test_calibration_picks_largest_separating_coefficients() -> None:
    """Outliers on a flat background are separated by tau_l 3.75 and tau_u 1.95."""

    sums = np.full(64, 100.0)
    truth = [False] * 64
    for index in (12, 40):
        sums[index] = 0.0
        truth[index] = True
    sums[26] = 300.0
    truth[26] = True
    cfg, scores = calibrate_detector([(sums, truth), (sums.copy(), list(truth))])
    assert scores.f1 == 1.0
    assert (cfg.tau_l, cfg.tau_u) == (3.75, 1.95)
    assert cfg.window_l == 16
    with pytest.raises(ConfigError):
        calibrate_detector([])
