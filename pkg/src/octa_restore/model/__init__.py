"""Network definition, training, checkpoints and inference."""

from __future__ import annotations

from .checkpoint import load_params, save_params
from .inference import infer_bscan, infer_volume
from .params import Mode, ModelParams, backward, build_params, forward, loss_l2
from .smoothing import median_filter_3
from .train import (
    EpochLog,
    TrainConfig,
    TrainResult,
    build_training_set,
    train,
    write_loss_csv,
)
from .unet import ConvSpec, DenseUNet, UNetConfig, channel_plan

__all__ = [
    "ConvSpec",
    "DenseUNet",
    "EpochLog",
    "Mode",
    "ModelParams",
    "TrainConfig",
    "TrainResult",
    "UNetConfig",
    "backward",
    "build_params",
    "build_training_set",
    "channel_plan",
    "forward",
    "infer_bscan",
    "infer_volume",
    "load_params",
    "median_filter_3",
    "save_params",
    "train",
    "write_loss_csv",
]
