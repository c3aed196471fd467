"""Turns pipeline progress events into log lines."""

from __future__ import annotations

import logging
from collections.abc import Callable, Mapping
from dataclasses import dataclass
from typing import Any

from octa_restore.event_bus import (
    REPAIR_DETECTED,
    REPAIR_DONE,
    REPAIR_SCAN_REPLACED,
    TRAIN_EPOCH,
    Event,
    EventBus,
)

logger = logging.getLogger(__name__)


def _epoch_line(payload: Mapping[str, Any]) -> str:
    text = (
        f"epoch {payload.get('epoch')}/{payload.get('epochs', '?')} "
        f"loss {payload.get('loss', float('nan')):.6f}"
    )
    if payload.get("val_loss") is not None:
        text += f" val {payload['val_loss']:.6f}"
    if payload.get("learning_rate") is not None:
        text += f" lr {payload['learning_rate']:.2e}"
    if payload.get("smoothed"):
        text += " (smoothed targets)"
    return text


def _detected_line(payload: Mapping[str, Any]) -> str:
    indices = payload.get("indices", [])
    return (
        f"detected {len(indices)} {payload.get('mode', 'both')} defect scans "
        f"of {payload.get('n_scans', '?')}: {indices}"
    )


FORMATTERS: dict[str, Callable[[Mapping[str, Any]], str]] = {
    TRAIN_EPOCH: _epoch_line,
    REPAIR_DETECTED: _detected_line,
    REPAIR_SCAN_REPLACED: lambda p: f"replaced scan {p.get('index')} ({p.get('kind')})",
    REPAIR_DONE: lambda p: f"repair finished, {p.get('replaced', 0)} scans replaced",
}


@dataclass(slots=True)
class ProgressReporter:
    """Logs training and repair progress published on the bus."""

    bus: EventBus

    def __post_init__(self) -> None:
        """Subscribe to every topic with a formatter."""
        self.bus.subscribe(tuple(FORMATTERS), self.handle)

    def handle(self, event: Event) -> None:
        """Log one progress event at INFO level."""
        formatter = FORMATTERS.get(event.name)
        if formatter is not None:
            logger.info("%s", formatter(event.payload))


__all__ = ["FORMATTERS", "ProgressReporter"]
