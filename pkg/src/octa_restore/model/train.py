"""Training set assembly and the L2 training loop."""

from __future__ import annotations

import csv
import logging
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any

import numpy as np
import torch
from torch.utils.data import DataLoader, TensorDataset

from octa_restore.config import config_to_dict
from octa_restore.detect import DetectorConfig, detect_defects
from octa_restore.errors import (
    ConfigError,
    DimMismatch,
    EmptyDataset,
    IoFailure,
    ShapeMismatch,
)
from octa_restore.event_bus import TRAIN_EPOCH, EventBus
from octa_restore.patch import (
    DEFAULT_PATCH_WIDTH,
    DEFAULT_TISSUE_THRESHOLD,
    PatchDataset,
    sample_training_patches,
    split_dataset,
)
from octa_restore.volume import NormalizeScope, Volume, normalize, pad_axial

from .params import Mode, ModelParams, build_params, forward, loss_l2
from .smoothing import median_filter_3
from .unet import UNetConfig

logger = logging.getLogger(__name__)


@dataclass(slots=True, frozen=True)
class TrainConfig:
    """Optimiser and schedule settings.

    The first ``smoothing_epochs`` epochs fit median-smoothed targets, the rest
    fit the raw OCTA patches. The learning rate follows a cosine curve from
    ``learning_rate`` down to ``min_lr_ratio * learning_rate`` in the last
    epoch; the default ratio of 1 keeps it constant.
    """

    epochs: int = 30
    smoothing_epochs: int = 5
    batch_size: int = 8
    learning_rate: float = 1e-3
    min_lr_ratio: float = 1.0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8
    seed: int = 0
    validation_fraction: float = 0.0

    def validate(self) -> None:
        """Raise :class:`ConfigError` for inconsistent settings."""
        if self.epochs < 0:
            raise ConfigError(f"epochs must be >= 0, got {self.epochs}")
        if not 0 <= self.smoothing_epochs <= self.epochs:
            raise ConfigError(
                f"smoothing_epochs must be in [0, epochs={self.epochs}], "
                f"got {self.smoothing_epochs}"
            )
        if self.batch_size < 1:
            raise ConfigError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.learning_rate <= 0:
            raise ConfigError(f"learning_rate must be > 0, got {self.learning_rate}")
        if not 0.0 < self.min_lr_ratio <= 1.0:
            raise ConfigError(
                f"min_lr_ratio must be in (0, 1], got {self.min_lr_ratio}"
            )
        if not (0.0 <= self.beta1 < 1.0 and 0.0 <= self.beta2 < 1.0):
            raise ConfigError("Adam betas must lie in [0, 1)")
        if self.eps <= 0:
            raise ConfigError(f"eps must be > 0, got {self.eps}")
        if not 0.0 <= self.validation_fraction < 1.0:
            raise ConfigError(
                f"validation_fraction must be in [0, 1), got {self.validation_fraction}"
            )

    def to_dict(self) -> dict[str, Any]:
        """Convert the config to a JSON-compatible dictionary."""
        return config_to_dict(self)


@dataclass(slots=True, frozen=True)
class EpochLog:
    """Mean losses of one epoch and the learning rate it ran with."""

    epoch: int
    loss: float
    val_loss: float | None = None
    smoothed: bool = False
    learning_rate: float | None = None

    def to_dict(self) -> dict[str, Any]:
        """Convert the entry to a JSON-compatible dictionary."""
        return {
            "epoch": self.epoch,
            "loss": self.loss,
            "val_loss": self.val_loss,
            "smoothed": self.smoothed,
            "learning_rate": self.learning_rate,
        }


@dataclass(slots=True)
class TrainResult:
    """Trained parameters together with the per-epoch loss log."""

    params: ModelParams
    log: list[EpochLog] = field(default_factory=list)


def _round_up(value: int, multiple: int) -> int:
    return -(-value // multiple) * multiple


def build_training_set(
    oct_volumes: Sequence[Volume],
    octa_volumes: Sequence[Volume],
    *,
    dcfg: DetectorConfig | None = None,
    patches_per_scan: int = 100,
    patch_width: int = DEFAULT_PATCH_WIDTH,
    tissue_threshold: float = DEFAULT_TISSUE_THRESHOLD,
    seed: int = 0,
    pad_to: int | None = None,
    spatial_multiple: int = 4,
    scope: NormalizeScope = NormalizeScope.VOLUME,
) -> PatchDataset:
    """Collect OCT / OCTA / smoothed-OCTA patch triples from intact scans.

    Each pair is normalised, the OCTA volume is median-smoothed as a whole and
    scans the detector flags are skipped. Volumes are zero padded axially to
    ``pad_to``, a height shared by every pair (default: the tallest volume rounded
    up to a multiple of ``spatial_multiple``).

    Raises:
        DimMismatch: If a pair differs in shape or the sequences differ in length.
        ConfigError: If ``pad_to`` is not a multiple of ``spatial_multiple``.
        AxialTooLarge: If a volume is taller than ``pad_to``.

    """
    if len(oct_volumes) != len(octa_volumes):
        raise DimMismatch(
            f"{len(oct_volumes)} OCT volumes for {len(octa_volumes)} OCTA"
        )
    if pad_to is None:
        tallest = max((volume.n_axial for volume in oct_volumes), default=0)
        height = _round_up(tallest, spatial_multiple)
    elif pad_to % spatial_multiple:
        raise ConfigError(f"pad_to {pad_to} is not a multiple of {spatial_multiple}")
    else:
        height = pad_to
    rng = np.random.default_rng(seed)
    oct_stack: list[np.ndarray] = []
    octa_stack: list[np.ndarray] = []
    smooth_stack: list[np.ndarray] = []
    for number, (oct_volume, octa_volume) in enumerate(
        zip(oct_volumes, octa_volumes, strict=True)
    ):
        if oct_volume.dims != octa_volume.dims:
            raise DimMismatch(
                f"pair {number}: OCT {oct_volume.dims} "
                f"and OCTA {octa_volume.dims} differ"
            )
        oct_norm = normalize(oct_volume, scope)
        octa_norm = normalize(octa_volume, scope)
        smoothed = median_filter_3(octa_norm)
        labels = detect_defects(octa_norm, dcfg)
        unpadded = oct_norm.n_axial
        oct_padded = pad_axial(oct_norm, height)
        octa_padded = pad_axial(octa_norm, height)
        smooth_padded = pad_axial(smoothed, height)
        for label in labels:
            if label.is_defect:
                continue
            pairs = sample_training_patches(
                oct_padded.scan(label.index),
                octa_padded.scan(label.index),
                patches_per_scan,
                rng,
                patch_width=patch_width,
                tissue_threshold=tissue_threshold,
                unpadded_height=unpadded,
                scan_index=label.index,
            )
            smooth_scan = smooth_padded.scan(label.index)
            for oct_patch, octa_patch in pairs:
                oct_stack.append(oct_patch.pixels)
                octa_stack.append(octa_patch.pixels)
                smooth_stack.append(
                    smooth_scan[:, oct_patch.origin : oct_patch.origin + patch_width]
                )
    if not oct_stack:
        empty = np.zeros((0, height, patch_width), dtype=np.float32)
        return PatchDataset(empty, empty.copy(), empty.copy())
    dataset = PatchDataset(
        np.stack(oct_stack).astype(np.float32),
        np.stack(octa_stack).astype(np.float32),
        np.stack(smooth_stack).astype(np.float32),
    )
    logger.info("Built training set with %d patches", len(dataset))
    return dataset


def _as_batch(stack: np.ndarray) -> torch.Tensor:
    return torch.from_numpy(np.ascontiguousarray(stack, dtype=np.float32)).unsqueeze(1)


def _validation_loss(
    params: ModelParams, dataset: PatchDataset, batch_size: int
) -> float:
    total = 0.0
    with torch.no_grad():
        for start in range(0, len(dataset), batch_size):
            x = _as_batch(dataset.oct[start : start + batch_size])
            y = _as_batch(dataset.octa[start : start + batch_size])
            total += float(loss_l2(forward(params, x, Mode.EVAL), y)) * x.shape[0]
    return total / len(dataset)


def train(
    dataset: PatchDataset,
    ucfg: UNetConfig,
    tcfg: TrainConfig,
    *,
    bus: EventBus | None = None,
) -> TrainResult:
    """Fit a freshly initialised network to OCT -> OCTA patch pairs with Adam.

    Args:
        dataset: Patch stacks of identical shape (N, H, w).
        ucfg: Network architecture.
        tcfg: Optimiser and schedule.
        bus: Optional bus receiving a ``train.epoch`` event after every epoch.

    Returns:
        The trained parameters and one :class:`EpochLog` per epoch.

    Raises:
        EmptyDataset: If ``dataset`` holds no patches.
        ShapeMismatch: If patch sizes are not divisible by ``2 ** levels``.

    """
    tcfg.validate()
    if len(dataset) == 0:
        raise EmptyDataset("no training patches")
    multiple = ucfg.spatial_multiple
    _, height, width = dataset.oct.shape
    if height % multiple or width % multiple:
        raise ShapeMismatch(
            f"patch size {height}x{width} is not divisible by {multiple}"
        )

    params = build_params(ucfg, tcfg.seed)
    result = TrainResult(params)
    if tcfg.epochs == 0:
        return result

    train_set, val_set = split_dataset(dataset, tcfg.validation_fraction, tcfg.seed)
    tensors = TensorDataset(
        _as_batch(train_set.oct),
        _as_batch(train_set.octa),
        _as_batch(train_set.octa_smoothed),
    )
    generator = torch.Generator().manual_seed(tcfg.seed)
    loader = DataLoader(
        tensors, batch_size=tcfg.batch_size, shuffle=True, generator=generator
    )
    optimizer = torch.optim.Adam(
        params.network.parameters(),
        lr=tcfg.learning_rate,
        betas=(tcfg.beta1, tcfg.beta2),
        eps=tcfg.eps,
    )
    scheduler = torch.optim.lr_scheduler.CosineAnnealingLR(
        optimizer,
        T_max=max(tcfg.epochs - 1, 1),
        eta_min=tcfg.learning_rate * tcfg.min_lr_ratio,
    )
    logger.info(
        "Training on %d patches (%d held out) for %d epochs",
        len(train_set),
        len(val_set) if val_set is not None else 0,
        tcfg.epochs,
    )
    for epoch in range(tcfg.epochs):
        smoothed = epoch < tcfg.smoothing_epochs
        learning_rate = float(optimizer.param_groups[0]["lr"])
        total = 0.0
        for x, y, y_smooth in loader:
            target = y_smooth if smoothed else y
            optimizer.zero_grad(set_to_none=True)
            loss = loss_l2(forward(params, x, Mode.TRAIN), target)
            loss.backward()
            optimizer.step()
            total += float(loss.detach()) * x.shape[0]
        entry = EpochLog(
            epoch=epoch + 1,
            loss=total / len(train_set),
            val_loss=(
                _validation_loss(params, val_set, tcfg.batch_size) if val_set else None
            ),
            smoothed=smoothed,
            learning_rate=learning_rate,
        )
        scheduler.step()
        result.log.append(entry)
        logger.debug("Epoch %d: loss %.6f", entry.epoch, entry.loss)
        if bus is not None:
            bus.emit(TRAIN_EPOCH, entry.to_dict() | {"epochs": tcfg.epochs})
    params.network.eval()
    return result


def write_loss_csv(log: Sequence[EpochLog], path: Path | str) -> Path:
    """Write the loss log as ``epoch,loss,val_loss,smoothed`` rows."""
    target = Path(path)
    try:
        target.parent.mkdir(parents=True, exist_ok=True)
        with target.open("w", newline="", encoding="utf-8") as handle:
            writer = csv.writer(handle)
            writer.writerow(["epoch", "loss", "val_loss", "smoothed"])
            for entry in log:
                writer.writerow(
                    [
                        entry.epoch,
                        repr(entry.loss),
                        "" if entry.val_loss is None else repr(entry.val_loss),
                        int(entry.smoothed),
                    ]
                )
    except OSError as exc:
        raise IoFailure(target, exc.strerror or str(exc)) from exc
    return target


__all__ = [
    "EpochLog",
    "TrainConfig",
    "TrainResult",
    "build_training_set",
    "train",
    "write_loss_csv",
]
