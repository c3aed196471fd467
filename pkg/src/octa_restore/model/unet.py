"""Dense-block U-Net translating OCT patches into OCTA patches."""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Any

import torch
import torch.nn.functional as F
from torch import nn

from octa_restore.config import config_to_dict
from octa_restore.errors import ConfigError, ShapeMismatch


@dataclass(slots=True, frozen=True)
class UNetConfig:
    """Architecture hyperparameters; every tensor shape follows from them.

    ``decoder_channels`` lists the residual width of each decoding level from the
    deepest upwards. ``None`` mirrors the encoder transitions.
    """

    in_channels: int = 1
    initial_channels: int = 16
    growth: int = 16
    dense_per_level: int = 2
    levels: int = 2
    compression: float = 0.5
    decoder_channels: tuple[int, ...] | None = None
    kernel_size: int = 3
    leaky_slope: float = 0.1
    upsample_factor: int = 2

    def validate(self) -> None:
        """Reject configurations that cannot build a network."""
        positive = {
            "in_channels": self.in_channels,
            "initial_channels": self.initial_channels,
            "growth": self.growth,
            "dense_per_level": self.dense_per_level,
            "levels": self.levels,
        }
        for name, value in positive.items():
            if value < 1:
                raise ConfigError(f"{name} must be >= 1, got {value}")
        if not 0.0 < self.compression <= 1.0:
            raise ConfigError(f"compression must be in (0, 1], got {self.compression}")
        if self.kernel_size < 1 or self.kernel_size % 2 == 0:
            raise ConfigError(f"kernel_size must be odd, got {self.kernel_size}")
        if self.upsample_factor != 2:
            raise ConfigError("only x2 upsampling mirrors the 2x2 pooling")
        if self.decoder_channels is not None:
            if len(self.decoder_channels) != self.levels:
                raise ConfigError(
                    f"decoder_channels needs {self.levels} entries, "
                    f"got {len(self.decoder_channels)}"
                )
            if min(self.decoder_channels) < 1:
                raise ConfigError("decoder_channels must be positive")
        plan = channel_plan(self)
        if min(spec.out_channels for spec in plan.values()) < 1:
            raise ConfigError("compression leaves a transition with zero channels")

    @property
    def spatial_multiple(self) -> int:
        """Input height and width must be divisible by this number."""
        return int(2**self.levels)

    def to_dict(self) -> dict[str, Any]:
        """Convert the config to a JSON-compatible dictionary."""
        return config_to_dict(self)


@dataclass(slots=True, frozen=True)
class ConvSpec:
    """Channel arithmetic of one convolution."""

    in_channels: int
    out_channels: int
    kernel_size: int


def channel_plan(cfg: UNetConfig) -> dict[str, ConvSpec]:
    """Derive every convolution's channel counts, keyed by module path.

    The keys match the module names of :class:`DenseUNet`, so ``key + ".weight"``
    names the kernel tensor.
    """
    k = cfg.kernel_size
    plan: dict[str, ConvSpec] = {
        "stem.conv": ConvSpec(cfg.in_channels, cfg.initial_channels, k)
    }
    channels = cfg.initial_channels
    skips: list[int] = []
    transitions: list[int] = []
    for level in range(cfg.levels):
        for d in range(cfg.dense_per_level):
            key = f"encoder.{level}.dense.{d}.unit.conv"
            plan[key] = ConvSpec(channels, cfg.growth, k)
            channels += cfg.growth
        skips.append(channels)
        reduced = int(math.floor(channels * cfg.compression))
        plan[f"encoder.{level}.transition.unit.conv"] = ConvSpec(channels, reduced, 1)
        transitions.append(reduced)
        channels = reduced
    widths = cfg.decoder_channels or tuple(reversed(transitions))
    for level, width in enumerate(widths):
        prefix = f"decoder.{level}"
        plan[f"{prefix}.residual.first.conv"] = ConvSpec(channels, width, k)
        plan[f"{prefix}.residual.second.conv"] = ConvSpec(width, width, k)
        if channels != width:
            plan[f"{prefix}.residual.shortcut"] = ConvSpec(channels, width, 1)
        plan[f"{prefix}.up.unit.conv"] = ConvSpec(width, width, k)
        channels = width + skips[cfg.levels - 1 - level]
    plan["head.conv"] = ConvSpec(channels, 1, 1)
    return plan


class ConvUnit(nn.Module):
    """Convolution followed by leaky ReLU and batch normalisation."""

    def __init__(self, spec: ConvSpec, slope: float) -> None:
        super().__init__()
        self.conv = nn.Conv2d(
            spec.in_channels,
            spec.out_channels,
            spec.kernel_size,
            padding=spec.kernel_size // 2,
        )
        self.act = nn.LeakyReLU(slope)
        self.bn = nn.BatchNorm2d(spec.out_channels)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.bn(self.act(self.conv(x)))


class DenseLayer(nn.Module):
    """Concatenates its input with the output of one convolution unit."""

    def __init__(self, spec: ConvSpec, slope: float) -> None:
        super().__init__()
        self.unit = ConvUnit(spec, slope)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.cat((x, self.unit(x)), dim=1)


class TransitionBlock(nn.Module):
    """1x1 convolution unit and 2x2 average pooling."""

    def __init__(self, spec: ConvSpec, slope: float) -> None:
        super().__init__()
        self.unit = ConvUnit(spec, slope)
        self.pool = nn.AvgPool2d(kernel_size=2, stride=2)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.pool(self.unit(x))


class EncoderLevel(nn.Module):
    """Dense layers followed by a transition; exposes pre-transition features."""

    def __init__(
        self, dense: list[ConvSpec], transition: ConvSpec, slope: float
    ) -> None:
        super().__init__()
        self.dense = nn.Sequential(*(DenseLayer(spec, slope) for spec in dense))
        self.transition = TransitionBlock(transition, slope)

    def forward(self, x: torch.Tensor) -> tuple[torch.Tensor, torch.Tensor]:
        features = self.dense(x)
        return self.transition(features), features


class ResidualBlock(nn.Module):
    """Two convolution units with an identity or 1x1-projected shortcut."""

    def __init__(
        self, first: ConvSpec, second: ConvSpec, shortcut: ConvSpec | None, slope: float
    ) -> None:
        super().__init__()
        self.first = ConvUnit(first, slope)
        self.second = ConvUnit(second, slope)
        self.shortcut: nn.Module = (
            nn.Conv2d(shortcut.in_channels, shortcut.out_channels, 1)
            if shortcut is not None
            else nn.Identity()
        )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.second(self.first(x)) + self.shortcut(x)


class UpsampleConv(nn.Module):
    """Nearest-neighbour x2 interpolation followed by a convolution unit."""

    def __init__(self, spec: ConvSpec, slope: float, factor: int = 2) -> None:
        super().__init__()
        self.factor = factor
        self.unit = ConvUnit(spec, slope)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return self.unit(F.interpolate(x, scale_factor=self.factor, mode="nearest"))


class DecoderLevel(nn.Module):
    """Residual block, upsampling convolution and skip concatenation."""

    def __init__(
        self,
        first: ConvSpec,
        second: ConvSpec,
        shortcut: ConvSpec | None,
        up: ConvSpec,
        slope: float,
    ) -> None:
        super().__init__()
        self.residual = ResidualBlock(first, second, shortcut, slope)
        self.up = UpsampleConv(up, slope)

    def forward(self, x: torch.Tensor, skip: torch.Tensor) -> torch.Tensor:
        return torch.cat((self.up(self.residual(x)), skip), dim=1)


class OutputHead(nn.Module):
    """1x1 convolution to one channel with a sigmoid."""

    def __init__(self, spec: ConvSpec) -> None:
        super().__init__()
        self.conv = nn.Conv2d(spec.in_channels, spec.out_channels, 1)

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        return torch.sigmoid(self.conv(x))


class DenseUNet(nn.Module):
    """U-Net with dense-block encoder and residual nearest-neighbour decoder."""

    def __init__(self, cfg: UNetConfig) -> None:
        super().__init__()
        cfg.validate()
        self.cfg = cfg
        plan = channel_plan(cfg)
        slope = cfg.leaky_slope
        self.stem = ConvUnit(plan["stem.conv"], slope)
        self.encoder = nn.ModuleList(
            EncoderLevel(
                [
                    plan[f"encoder.{level}.dense.{d}.unit.conv"]
                    for d in range(cfg.dense_per_level)
                ],
                plan[f"encoder.{level}.transition.unit.conv"],
                slope,
            )
            for level in range(cfg.levels)
        )
        self.decoder = nn.ModuleList(
            DecoderLevel(
                plan[f"decoder.{level}.residual.first.conv"],
                plan[f"decoder.{level}.residual.second.conv"],
                plan.get(f"decoder.{level}.residual.shortcut"),
                plan[f"decoder.{level}.up.unit.conv"],
                slope,
            )
            for level in range(cfg.levels)
        )
        self.head = OutputHead(plan["head.conv"])

    def check_input(self, x: torch.Tensor) -> None:
        """Raise :class:`ShapeMismatch` unless ``x`` is a (N, C_in, H, W) batch.

        H and W must be multiples of ``2 ** levels``.
        """
        multiple = self.cfg.spatial_multiple
        if x.ndim != 4 or x.shape[1] != self.cfg.in_channels:
            raise ShapeMismatch(
                f"expected (N, {self.cfg.in_channels}, H, W) input, "
                f"got {tuple(x.shape)}"
            )
        if x.shape[2] % multiple or x.shape[3] % multiple:
            raise ShapeMismatch(
                f"input {tuple(x.shape[2:])} is not divisible by {multiple}"
            )

    def forward(self, x: torch.Tensor) -> torch.Tensor:
        self.check_input(x)
        h = self.stem(x)
        skips: list[torch.Tensor] = []
        for level in self.encoder:
            h, features = level(h)
            skips.append(features)
        for level, skip in zip(self.decoder, reversed(skips), strict=True):
            h = level(h, skip)
        return self.head(h)


__all__ = [
    "ConvSpec",
    "ConvUnit",
    "DecoderLevel",
    "DenseLayer",
    "DenseUNet",
    "EncoderLevel",
    "OutputHead",
    "ResidualBlock",
    "TransitionBlock",
    "UNetConfig",
    "UpsampleConv",
    "channel_plan",
]
