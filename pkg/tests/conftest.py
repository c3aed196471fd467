"""Pytest configuration: import path, markers and shared phantom fixtures.

Coroutine tests marked ``@pytest.mark.asyncio`` run through pytest-asyncio.
"""

from __future__ import annotations

import sys
from pathlib import Path

import numpy as np
import pytest

ROOT = Path(__file__).resolve().parents[1]
SRC = ROOT / "src"
if SRC.exists() and str(SRC) not in sys.path:
    sys.path.insert(0, str(SRC))

from octa_restore.detect import DetectorConfig  # noqa: E402
from octa_restore.model import (  # noqa: E402
    TrainConfig,
    TrainResult,
    UNetConfig,
    build_training_set,
    train,
)
from octa_restore.synth import PhantomConfig, generate_phantom  # noqa: E402

# Strict thresholds for isolated defects; default coefficients flag far more scans.
STRICT_DETECTOR = DetectorConfig(tau_l=3.5, tau_u=1.9)
DESK_PHANTOM = PhantomConfig(dims=(32, 64, 64), seed=11)
DESK_UNET = UNetConfig(initial_channels=4, growth=4)
TINY_UNET = UNetConfig(initial_channels=2, growth=2)


def pytest_configure(config: pytest.Config) -> None:
    """Register custom markers used across the test suite."""

    config.addinivalue_line(
        "markers", "slow: desk-scale benchmarks taking seconds to minutes"
    )


@pytest.fixture(scope="session")
def desk_phantom():
    """Small clean phantom pair with its truth."""

    return generate_phantom(DESK_PHANTOM)


@pytest.fixture(scope="session")
def desk_model() -> TrainResult:
    """Network trained on 200 patches (64x32) of two phantoms, shared by slow tests."""

    pairs = [generate_phantom(PhantomConfig(dims=(32, 64, 64), seed=s)) for s in (1, 2)]
    dataset = build_training_set(
        [oct_volume for oct_volume, _, _ in pairs],
        [octa_volume for _, octa_volume, _ in pairs],
        dcfg=STRICT_DETECTOR,
        patches_per_scan=4,
        patch_width=32,
        seed=0,
    )
    corpus = dataset.subset(np.arange(min(200, len(dataset))))
    tcfg = TrainConfig(epochs=30, smoothing_epochs=5, seed=0, min_lr_ratio=0.05)
    return train(corpus, DESK_UNET, tcfg)
