"""Finite-difference checks of every layer type and of end-to-end gradients."""

from __future__ import annotations

from collections.abc import Callable

import pytest
import torch
from torch import nn
from torch.autograd import gradcheck

from conftest import TINY_UNET
from octa_restore.model import (
    Mode,
    ModelParams,
    backward,
    build_params,
    forward,
    loss_l2,
)
from octa_restore.model.unet import (
    ConvSpec,
    ConvUnit,
    DenseLayer,
    OutputHead,
    ResidualBlock,
    TransitionBlock,
    UpsampleConv,
)


def _double_input(shape: tuple[int, ...], seed: int = 0) -> torch.Tensor:
    generator = torch.Generator().manual_seed(seed)
    x = torch.rand(shape, generator=generator, dtype=torch.float64)
    return x.requires_grad_(True)


LAYERS: dict[str, Callable[[], nn.Module]] = {
    "conv_unit": lambda: ConvUnit(ConvSpec(3, 4, 3), 0.1),
    "dense_layer": lambda: DenseLayer(ConvSpec(3, 2, 3), 0.1),
    "transition": lambda: TransitionBlock(ConvSpec(3, 2, 1), 0.1),
    "residual": lambda: ResidualBlock(
        ConvSpec(3, 4, 3), ConvSpec(4, 4, 3), ConvSpec(3, 4, 1), 0.1
    ),
    "upsample": lambda: UpsampleConv(ConvSpec(3, 3, 3), 0.1),
    "head": lambda: OutputHead(ConvSpec(3, 1, 1)),
}


@pytest.mark.parametrize("mode", [Mode.TRAIN, Mode.EVAL])
@pytest.mark.parametrize("name", sorted(LAYERS))
def test_layer_input_gradients(name: str, mode: Mode) -> None:
    """Analytic input gradients of each layer agree with finite differences."""

    torch.manual_seed(0)
    layer = LAYERS[name]().double()
    layer.train(mode is Mode.TRAIN)
    x = _double_input((2, 3, 6, 6))
    assert gradcheck(layer, (x,), eps=1e-6, atol=1e-5, rtol=1e-3)


def test_network_input_gradients() -> None:
    """The whole network passes gradcheck on an 8x8 float64 batch."""

    params = build_params(TINY_UNET, seed=0)
    params.network.double()
    x = _double_input((2, 1, 8, 8), seed=7)
    assert gradcheck(
        lambda t: forward(params, t, Mode.TRAIN), (x,), eps=1e-6, atol=1e-5
    )


def _learnable_by_layer() -> dict[str, list[str]]:
    layers: dict[str, list[str]] = {}
    for name in build_params(TINY_UNET).learnable_names():
        layers.setdefault(ModelParams.layer_of(name), []).append(name)
    return layers


LEARNABLE = _learnable_by_layer()


def test_layer_of_groups_tensors_by_module() -> None:
    """Weight and bias of one module share a layer; batch norm is its own layer."""

    assert ModelParams.layer_of("stem.conv.weight") == "stem.conv"
    assert ModelParams.layer_of("stem.bn.bias") == "stem.bn"
    assert LEARNABLE["head.conv"] == ["head.conv.weight", "head.conv.bias"]
    assert sum(len(names) for names in LEARNABLE.values()) == len(
        build_params(TINY_UNET).learnable_names()
    )


@pytest.mark.parametrize("layer", sorted(LEARNABLE))
def test_parameter_gradients_match_finite_differences(layer: str) -> None:
    """Gradients returned by ``backward`` match central differences of the loss."""

    params = build_params(TINY_UNET, seed=1)
    params.network.double()
    x = _double_input((2, 1, 8, 8), seed=3).detach()
    target = _double_input((2, 1, 8, 8), seed=4).detach()
    grads = backward(params, x, target, Mode.TRAIN)
    tensors = dict(params.network.named_parameters())
    h = 1e-6
    for name in LEARNABLE[layer]:
        flat = tensors[name].data.view(-1)
        positions = sorted({0, flat.numel() // 2, flat.numel() - 1})
        for position in positions:
            original = float(flat[position])
            with torch.no_grad():
                flat[position] = original + h
                upper = float(loss_l2(forward(params, x, Mode.TRAIN), target))
                flat[position] = original - h
                lower = float(loss_l2(forward(params, x, Mode.TRAIN), target))
                flat[position] = original
            numeric = (upper - lower) / (2 * h)
            analytic = float(grads[name].view(-1)[position])
            assert analytic == pytest.approx(numeric, rel=1e-4, abs=1e-8), name


def test_zero_residual_gives_zero_gradients() -> None:
    """With frozen batch norm and target equal to the prediction nothing moves."""

    params = build_params(TINY_UNET, seed=2)
    x = _double_input((2, 1, 8, 8), seed=5).detach().float()
    with torch.no_grad():
        target = forward(params, x, Mode.EVAL)
    grads = backward(params, x, target, Mode.EVAL)
    assert torch.count_nonzero(grads["head.conv.weight"]) == 0
    assert all(torch.count_nonzero(grad) == 0 for grad in grads.values())
