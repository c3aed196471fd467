"""Progress events published by the long-running pipeline stages."""

from __future__ import annotations

import asyncio
import inspect
import itertools
import logging
from collections import defaultdict
from collections.abc import Awaitable, Callable, Iterable, Mapping
from dataclasses import dataclass, field
from typing import Any

logger = logging.getLogger(__name__)

TRAIN_EPOCH = "train.epoch"
REPAIR_DETECTED = "repair.detected"
REPAIR_SCAN_REPLACED = "repair.scan_replaced"
REPAIR_DONE = "repair.done"
ANY_TOPIC = "*"


@dataclass(slots=True, frozen=True)
class Event:
    """One progress notification.

    ``sequence`` numbers the events of a bus in delivery order, so that lines
    logged by concurrent scan replacements can be put back in order.
    """

    name: str
    payload: dict[str, Any] = field(default_factory=dict)
    sequence: int = 0

    def to_dict(self) -> dict[str, Any]:
        """Convert the event to a JSON-compatible dictionary."""
        return {
            "name": self.name,
            "sequence": self.sequence,
            "payload": dict(self.payload),
        }


EventHandler = Callable[[Event], Awaitable[None] | None]


class EventBus:
    """Delivers progress events to sync and async subscribers.

    A failing handler is logged and never reaches the stage that published the
    event. Subscribers of :data:`ANY_TOPIC` receive every event.
    """

    def __init__(self) -> None:
        """Initialise subscriber storage and the event counter."""
        self._subscribers: dict[str, list[EventHandler]] = defaultdict(list)
        self._sequence = itertools.count(1)

    def subscribe(self, topics: str | Iterable[str], handler: EventHandler) -> None:
        """Register ``handler`` for one topic or several."""
        names = [topics] if isinstance(topics, str) else list(topics)
        if not names:
            raise ValueError("at least one topic is required")
        for name in names:
            self._subscribers[name].append(handler)
        label = getattr(handler, "__qualname__", repr(handler))
        logger.debug("Subscribed %s to %s", label, names)

    def unsubscribe(self, topic: str, handler: EventHandler) -> bool:
        """Remove ``handler`` from ``topic``; ``False`` if it was not registered."""
        handlers = self._subscribers.get(topic, [])
        if handler not in handlers:
            return False
        handlers.remove(handler)
        return True

    def _deliver(
        self, topic: str, payload: Mapping[str, Any] | None
    ) -> list[Awaitable[None]]:
        event = Event(topic, dict(payload or {}), next(self._sequence))
        handlers = [
            *self._subscribers.get(topic, ()),
            *self._subscribers.get(ANY_TOPIC, ()),
        ]
        if not handlers:
            logger.debug("No subscribers for %s", topic)
        pending: list[Awaitable[None]] = []
        for handler in handlers:
            try:
                result = handler(event)
            except Exception:
                logger.exception("Progress handler %s failed on %s", handler, topic)
                continue
            if inspect.isawaitable(result):
                pending.append(result)
        return pending

    async def publish(
        self, topic: str, payload: Mapping[str, Any] | None = None
    ) -> None:
        """Deliver an event and await the coroutine subscribers concurrently."""
        pending = self._deliver(topic, payload)
        if not pending:
            return
        for outcome in await asyncio.gather(*pending, return_exceptions=True):
            if isinstance(outcome, Exception):
                logger.error("Async progress handler failed on %s: %s", topic, outcome)

    def emit(self, topic: str, payload: Mapping[str, Any] | None = None) -> None:
        """Deliver an event from synchronous code such as the training loop.

        Coroutine subscribers cannot be awaited here; they are closed unawaited.
        """
        for pending in self._deliver(topic, payload):
            if inspect.iscoroutine(pending):
                pending.close()
            logger.debug("Skipped async subscriber of %s during sync emit", topic)


__all__ = [
    "ANY_TOPIC",
    "REPAIR_DETECTED",
    "REPAIR_DONE",
    "REPAIR_SCAN_REPLACED",
    "TRAIN_EPOCH",
    "Event",
    "EventBus",
    "EventHandler",
]
