"""Defect scan detection with local adaptive thresholds on summed flow."""

from __future__ import annotations

import enum
import itertools
import logging
from collections.abc import Iterable, Sequence
from dataclasses import dataclass, replace
from typing import Any

import numpy as np
from numpy.lib.stride_tricks import sliding_window_view

from .errors import ConfigError, IndexOutOfRange, WindowTooLarge
from .volume import Volume

logger = logging.getLogger(__name__)


class SpreadMode(enum.StrEnum):
    """Statistic used as the spread term of a threshold."""

    STD_DEV = "stddev"
    VARIANCE = "variance"


class DefectKind(enum.StrEnum):
    """Per-scan classification produced by the detector."""

    INTACT = "intact"
    LOW = "low"
    HIGH = "high"

    @property
    def is_defect(self) -> bool:
        """``True`` for both defect kinds."""
        return self is not DefectKind.INTACT


@dataclass(slots=True, frozen=True)
class DetectorConfig:
    """Threshold coefficients and neighbourhood sizes.

    The default coefficients are calibration-sensitive: with small ``tau`` values
    any scan below (above) its local mean crosses the lower (upper) limit. Use
    :func:`calibrate_detector` to fit them to a corpus.
    """

    tau_l: float = 0.029
    tau_u: float = 0.0255
    window_l: int = 16
    window_u: int = 5
    spread_mode: SpreadMode = SpreadMode.STD_DEV

    def validate(self, n_scans: int | None = None) -> None:
        """Check coefficient signs and window sizes.

        Raises:
            ConfigError: For non-positive coefficients or windows below 2.
            WindowTooLarge: If a window exceeds ``n_scans``.

        """
        if self.tau_l <= 0 or self.tau_u <= 0:
            raise ConfigError(
                f"tau_l and tau_u must be > 0, got {self.tau_l}, {self.tau_u}"
            )
        if self.window_l < 2 or self.window_u < 2:
            raise ConfigError(
                f"windows must be >= 2, got {self.window_l}, {self.window_u}"
            )
        if n_scans is not None and max(self.window_l, self.window_u) > n_scans:
            raise WindowTooLarge(
                f"window {max(self.window_l, self.window_u)} exceeds {n_scans} scans"
            )

    def to_dict(self) -> dict[str, Any]:
        """Convert the config to a JSON-compatible dictionary."""
        return {
            "tau_l": self.tau_l,
            "tau_u": self.tau_u,
            "window_l": self.window_l,
            "window_u": self.window_u,
            "spread_mode": self.spread_mode.value,
        }


@dataclass(slots=True, frozen=True)
class ScanLabel:
    """Detector verdict for one B-scan together with the evaluated limits."""

    index: int
    kind: DefectKind
    s: float
    theta_l: float
    theta_u: float

    @property
    def is_defect(self) -> bool:
        """``True`` when the scan was labelled low or high."""
        return self.kind.is_defect

    def to_dict(self) -> dict[str, Any]:
        """Convert the label to a JSON-compatible dictionary."""
        return {
            "index": self.index,
            "label": self.kind.value,
            "s": self.s,
            "theta_l": self.theta_l,
            "theta_u": self.theta_u,
        }


@dataclass(slots=True, frozen=True)
class DetectionScores:
    """Precision and recall of defect labels against a known truth."""

    true_positives: int
    false_positives: int
    false_negatives: int

    @property
    def precision(self) -> float:
        """Fraction of flagged scans that are real defects (1.0 if none flagged)."""
        flagged = self.true_positives + self.false_positives
        return self.true_positives / flagged if flagged else 1.0

    @property
    def recall(self) -> float:
        """Fraction of real defects that were flagged (1.0 if there are none)."""
        actual = self.true_positives + self.false_negatives
        return self.true_positives / actual if actual else 1.0

    @property
    def f1(self) -> float:
        """Harmonic mean of precision and recall."""
        p, r = self.precision, self.recall
        return 2 * p * r / (p + r) if p + r else 0.0

    def __add__(self, other: DetectionScores) -> DetectionScores:
        return DetectionScores(
            self.true_positives + other.true_positives,
            self.false_positives + other.false_positives,
            self.false_negatives + other.false_negatives,
        )

    def to_dict(self) -> dict[str, Any]:
        """Convert the scores to a JSON-compatible dictionary."""
        return {
            "true_positives": self.true_positives,
            "false_positives": self.false_positives,
            "false_negatives": self.false_negatives,
            "precision": self.precision,
            "recall": self.recall,
            "f1": self.f1,
        }


def flow_sums(volume: Volume) -> np.ndarray:
    """Return the summed flow signal of every B-scan (float64, length n_scans)."""
    return volume.data.sum(axis=(1, 2), dtype=np.float64)


def _window_start(i: int, x: int, n: int) -> int:
    # x - 1 nearest neighbours: the extra one goes after i for even x.
    start = i - (x - 1) // 2
    return min(max(start, 0), n - x)


def local_stats(
    s: Sequence[float] | np.ndarray,
    i: int,
    x: int,
    spread_mode: SpreadMode = SpreadMode.STD_DEV,
) -> tuple[float, float]:
    """Mean and spread over the ``x`` scans nearest to ``i`` (self included).

    The window is symmetric around ``i`` and shifted, not shrunk, at the sequence
    boundaries so that it always holds exactly ``x`` samples.

    Raises:
        WindowTooLarge: If ``x`` exceeds ``len(s)``.
        IndexOutOfRange: If ``i`` is not an index of ``s``.

    """
    values = np.asarray(s, dtype=np.float64)
    n = values.shape[0]
    if x > n:
        raise WindowTooLarge(f"window {x} exceeds sequence length {n}")
    if x < 1:
        raise ConfigError(f"window must be >= 1, got {x}")
    if not 0 <= i < n:
        raise IndexOutOfRange(f"scan index {i} outside [0, {n})")
    start = _window_start(i, x, n)
    window = values[start : start + x]
    mean = float(window.mean())
    variance = float(np.mean((window - mean) ** 2))
    if spread_mode is SpreadMode.VARIANCE:
        return mean, variance
    return mean, float(np.sqrt(variance))


def _rolling_stats(
    values: np.ndarray, x: int, spread_mode: SpreadMode
) -> tuple[np.ndarray, np.ndarray]:
    """Vectorised :func:`local_stats` for every index."""
    n = values.shape[0]
    if x > n:
        raise WindowTooLarge(f"window {x} exceeds {n} scans")
    windows = sliding_window_view(values, x)
    starts = np.clip(np.arange(n) - (x - 1) // 2, 0, n - x)
    chosen = windows[starts]
    means = chosen.mean(axis=1)
    variances = np.mean((chosen - means[:, None]) ** 2, axis=1)
    spreads = variances if spread_mode is SpreadMode.VARIANCE else np.sqrt(variances)
    return means, spreads


def label_sums(s: Sequence[float] | np.ndarray, cfg: DetectorConfig) -> list[ScanLabel]:
    """Classify a sequence of flow sums; see :func:`detect_defects`."""
    values = np.asarray(s, dtype=np.float64)
    cfg.validate(values.shape[0])
    mean_l, spread_l = _rolling_stats(values, cfg.window_l, cfg.spread_mode)
    mean_u, spread_u = _rolling_stats(values, cfg.window_u, cfg.spread_mode)
    theta_l = mean_l - cfg.tau_l * spread_l
    theta_u = mean_u + cfg.tau_u * spread_u
    labels: list[ScanLabel] = []
    for index, value in enumerate(values):
        # Strict comparisons: ties stay intact; low wins when both fire.
        if value < theta_l[index]:
            kind = DefectKind.LOW
        elif value > theta_u[index]:
            kind = DefectKind.HIGH
        else:
            kind = DefectKind.INTACT
        labels.append(
            ScanLabel(
                index=index,
                kind=kind,
                s=float(value),
                theta_l=float(theta_l[index]),
                theta_u=float(theta_u[index]),
            )
        )
    return labels


def detect_defects(
    volume: Volume, cfg: DetectorConfig | None = None
) -> list[ScanLabel]:
    """Label every B-scan of an OCTA volume as intact, low or high.

    Neighbour statistics are computed in one pass over the raw sums; defective
    neighbours are not excluded.

    Args:
        volume: OCTA volume.
        cfg: Detector configuration, defaults to :class:`DetectorConfig`.

    Returns:
        One :class:`ScanLabel` per scan in scan order.

    """
    cfg = cfg or DetectorConfig()
    labels = label_sums(flow_sums(volume), cfg)
    defects = sum(1 for label in labels if label.is_defect)
    logger.info("Detected %d defective of %d scans", defects, len(labels))
    return labels


def defect_indices(
    labels: Iterable[ScanLabel], kinds: Iterable[DefectKind] | None = None
) -> list[int]:
    """Indices of scans whose label is in ``kinds`` (both defect kinds by default)."""
    wanted = set(kinds) if kinds is not None else {DefectKind.LOW, DefectKind.HIGH}
    return [label.index for label in labels if label.kind in wanted]


def detection_scores(
    labels: Sequence[ScanLabel], truth: Sequence[bool]
) -> DetectionScores:
    """Compare defect labels with a per-scan ground-truth flag sequence."""
    if len(labels) != len(truth):
        raise ConfigError(f"{len(labels)} labels for {len(truth)} truth entries")
    tp = fp = fn = 0
    for label, actual in zip(labels, truth, strict=True):
        if label.is_defect and actual:
            tp += 1
        elif label.is_defect:
            fp += 1
        elif actual:
            fn += 1
    return DetectionScores(tp, fp, fn)


DEFAULT_TAU_L_GRID = tuple(round(0.25 * k, 2) for k in range(1, 17))
DEFAULT_TAU_U_GRID = tuple(round(0.05 * k, 2) for k in range(4, 40))


def calibrate_detector(
    corpus: Iterable[tuple[np.ndarray, Sequence[bool]]],
    base: DetectorConfig | None = None,
    tau_l_grid: Sequence[float] = DEFAULT_TAU_L_GRID,
    tau_u_grid: Sequence[float] = DEFAULT_TAU_U_GRID,
) -> tuple[DetectorConfig, DetectionScores]:
    """Grid-search ``tau_l`` and ``tau_u`` maximising F1 on a labelled corpus.

    Windows and spread mode are taken from ``base``. Ties in F1 keep the larger
    coefficients, which flag fewer intact scans.

    Args:
        corpus: Pairs of per-scan flow sums and per-scan defect truth.
        base: Config providing windows and spread mode.
        tau_l_grid: Candidate lower coefficients.
        tau_u_grid: Candidate upper coefficients.

    Returns:
        The best config and its pooled scores over the corpus.

    """
    base = base or DetectorConfig()
    items = [(np.asarray(s, dtype=np.float64), list(t)) for s, t in corpus]
    if not items:
        raise ConfigError("calibration corpus is empty")
    best: tuple[float, float, float] | None = None
    best_cfg = base
    best_scores = DetectionScores(0, 0, 0)
    for tau_l, tau_u in itertools.product(sorted(tau_l_grid), sorted(tau_u_grid)):
        cfg = replace(base, tau_l=tau_l, tau_u=tau_u)
        pooled = DetectionScores(0, 0, 0)
        for sums, truth in items:
            pooled = pooled + detection_scores(label_sums(sums, cfg), truth)
        key = (pooled.f1, tau_l, tau_u)
        if best is None or key >= best:
            best, best_cfg, best_scores = key, cfg, pooled
    logger.info(
        "Calibrated tau_l=%.3f tau_u=%.3f (precision %.3f, recall %.3f)",
        best_cfg.tau_l,
        best_cfg.tau_u,
        best_scores.precision,
        best_scores.recall,
    )
    return best_cfg, best_scores


__all__ = [
    "DEFAULT_TAU_L_GRID",
    "DEFAULT_TAU_U_GRID",
    "DefectKind",
    "DetectionScores",
    "DetectorConfig",
    "ScanLabel",
    "SpreadMode",
    "calibrate_detector",
    "defect_indices",
    "detect_defects",
    "detection_scores",
    "flow_sums",
    "label_sums",
    "local_stats",
]
