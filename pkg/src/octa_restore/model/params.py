"""Named parameter container and the forward / loss / backward operations."""

from __future__ import annotations

import copy
import enum
import logging
import math
from collections import OrderedDict
from dataclasses import dataclass

import torch
import torch.nn.functional as F
from torch import nn

from octa_restore.errors import ShapeMismatch

from .unet import DenseUNet, UNetConfig, channel_plan

logger = logging.getLogger(__name__)

# Integer step counter kept by BatchNorm; not a learnable or running statistic.
_SKIPPED_BUFFERS = ("num_batches_tracked",)


class Mode(enum.StrEnum):
    """Batch-normalisation regime for a forward pass."""

    TRAIN = "train"
    EVAL = "eval"


@dataclass(slots=True)
class ModelParams:
    """All tensors of a :class:`DenseUNet` together with its config.

    Learnable tensors are the convolution kernels, biases and batch-norm
    scale/shift; running means and variances are carried but never receive
    gradients.
    """

    config: UNetConfig
    network: DenseUNet

    def named_tensors(self) -> OrderedDict[str, torch.Tensor]:
        """Every persisted tensor in module order, detached."""
        return OrderedDict(
            (name, tensor.detach())
            for name, tensor in self.network.state_dict().items()
            if not name.endswith(_SKIPPED_BUFFERS)
        )

    def learnable_names(self) -> list[str]:
        """Names of tensors that receive gradients."""
        return [name for name, _ in self.network.named_parameters()]

    @staticmethod
    def layer_of(name: str) -> str:
        """Module path of a tensor, e.g. ``"stem.conv"`` for ``"stem.conv.weight"``."""
        return name.rsplit(".", 1)[0]

    def expected_shapes(self) -> dict[str, tuple[int, ...]]:
        """Tensor shapes implied by the config's channel arithmetic."""
        shapes: dict[str, tuple[int, ...]] = {}
        for layer, spec in channel_plan(self.config).items():
            k = spec.kernel_size
            shapes[f"{layer}.weight"] = (spec.out_channels, spec.in_channels, k, k)
            shapes[f"{layer}.bias"] = (spec.out_channels,)
            if layer.endswith(".conv") and not layer.startswith("head"):
                bn = layer[: -len(".conv")] + ".bn"
                for suffix in ("weight", "bias", "running_mean", "running_var"):
                    shapes[f"{bn}.{suffix}"] = (spec.out_channels,)
        return shapes

    def shape_audit(self) -> None:
        """Raise :class:`ShapeMismatch` if any tensor deviates from the config."""
        expected = self.expected_shapes()
        actual = {name: tuple(t.shape) for name, t in self.named_tensors().items()}
        if set(expected) != set(actual):
            missing = sorted(set(expected) - set(actual))
            extra = sorted(set(actual) - set(expected))
            raise ShapeMismatch(
                f"tensor names differ: missing {missing}, extra {extra}"
            )
        for name, shape in expected.items():
            if actual[name] != shape:
                raise ShapeMismatch(f"{name}: expected {shape}, got {actual[name]}")

    def clone(self) -> ModelParams:
        """Deep copy, e.g. to keep a snapshot while training continues."""
        return ModelParams(self.config, copy.deepcopy(self.network))


def _init_conv(conv: nn.Conv2d) -> None:
    fan_in = conv.in_channels * conv.kernel_size[0] * conv.kernel_size[1]
    bound = 1.0 / math.sqrt(fan_in)
    nn.init.uniform_(conv.weight, -bound, bound)
    if conv.bias is not None:
        nn.init.uniform_(conv.bias, -bound, bound)


def build_params(cfg: UNetConfig, seed: int = 0) -> ModelParams:
    """Create freshly initialised parameters, deterministic in ``seed``.

    Convolutions draw from ``U(-1/sqrt(fan_in), 1/sqrt(fan_in))``; batch norm
    starts with scale 1 and shift 0. The global torch RNG is left untouched.
    """
    cfg.validate()
    with torch.random.fork_rng(devices=[]):
        torch.manual_seed(seed)
        network = DenseUNet(cfg)
        for module in network.modules():
            if isinstance(module, nn.Conv2d):
                _init_conv(module)
            elif isinstance(module, nn.BatchNorm2d):
                nn.init.ones_(module.weight)
                nn.init.zeros_(module.bias)
    params = ModelParams(cfg, network)
    params.shape_audit()
    return params


def forward(
    params: ModelParams, x: torch.Tensor, mode: Mode = Mode.EVAL
) -> torch.Tensor:
    """Run the network on a (N, 1, H, W) batch.

    ``TRAIN`` normalises with batch statistics and updates the running
    statistics; ``EVAL`` uses the running statistics. Gradients are tracked as
    usual; wrap the call in :func:`torch.no_grad` for pure inference.
    """
    params.shape_audit()
    params.network.train(mode is Mode.TRAIN)
    return params.network(x)


def loss_l2(pred: torch.Tensor, target: torch.Tensor) -> torch.Tensor:
    """Mean squared difference over every pixel of the batch."""
    if pred.shape != target.shape:
        raise ShapeMismatch(
            f"prediction {tuple(pred.shape)} vs target {tuple(target.shape)}"
        )
    return F.mse_loss(pred, target, reduction="mean")


def backward(
    params: ModelParams,
    x: torch.Tensor,
    target: torch.Tensor,
    mode: Mode = Mode.TRAIN,
) -> OrderedDict[str, torch.Tensor]:
    """Gradient of :func:`loss_l2` with respect to every learnable tensor.

    Running batch-norm statistics are restored afterwards, so the call has no
    side effect on ``params``.
    """
    if x.shape[0] != target.shape[0]:
        raise ShapeMismatch(f"batch sizes differ: {x.shape[0]} vs {target.shape[0]}")
    buffers = {name: b.clone() for name, b in params.network.named_buffers()}
    was_training = params.network.training
    params.network.zero_grad(set_to_none=True)
    try:
        with torch.enable_grad():
            loss = loss_l2(forward(params, x, mode), target)
            loss.backward()
        grads = OrderedDict(
            (name, torch.zeros_like(p) if p.grad is None else p.grad.detach().clone())
            for name, p in params.network.named_parameters()
        )
    finally:
        with torch.no_grad():
            for name, b in params.network.named_buffers():
                b.copy_(buffers[name])
        params.network.zero_grad(set_to_none=True)
        params.network.train(was_training)
    return grads


__all__ = [
    "Mode",
    "ModelParams",
    "backward",
    "build_params",
    "forward",
    "loss_l2",
]
