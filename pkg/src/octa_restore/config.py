"""JSON configuration loading with command-line overrides."""

from __future__ import annotations

import dataclasses
import enum
import json
import os
import types
import typing
from collections.abc import Mapping
from pathlib import Path
from typing import Any, TypeVar

from .errors import ConfigError, IoFailure

T = TypeVar("T")

DEFAULT_JOBS = int(os.getenv("OCTA_RESTORE_JOBS", "0")) or (os.cpu_count() or 1)


def load_json(path: Path | str) -> dict[str, Any]:
    """Read a JSON object from ``path``.

    Raises:
        IoFailure: If the file cannot be read.
        ConfigError: If the content is not a JSON object.

    """
    target = Path(path)
    try:
        text = target.read_text(encoding="utf-8")
    except OSError as exc:
        raise IoFailure(target, exc.strerror or str(exc)) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigError(f"{target}: invalid JSON ({exc.msg})") from exc
    if not isinstance(data, dict):
        raise ConfigError(f"{target}: expected a JSON object")
    return data


def _coerce(value: Any, annotation: Any, key: str) -> Any:
    if isinstance(annotation, type) and issubclass(annotation, enum.Enum):
        if isinstance(value, annotation):
            return value
        try:
            return annotation(value)
        except ValueError as exc:
            allowed = ", ".join(str(m.value) for m in annotation)
            raise ConfigError(f"{key}: {value!r} is not one of: {allowed}") from exc
    origin = typing.get_origin(annotation)
    if origin in (typing.Union, types.UnionType):
        if value is None:
            return None
        options = [arg for arg in typing.get_args(annotation) if arg is not type(None)]
        return _coerce(value, options[0], key) if len(options) == 1 else value
    if origin is tuple:
        if not isinstance(value, list | tuple):
            raise ConfigError(f"{key}: expected a list, got {value!r}")
        args = typing.get_args(annotation)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(item, args[0], key) for item in value)
        if args and len(args) != len(value):
            raise ConfigError(f"{key}: expected {len(args)} values, got {len(value)}")
        if not args:
            return tuple(value)
        return tuple(
            _coerce(item, arg, key) for item, arg in zip(value, args, strict=True)
        )
    # bool is an int subclass; JSON true/false must not pass as numbers.
    if annotation is float:
        if isinstance(value, int | float) and not isinstance(value, bool):
            return float(value)
        raise ConfigError(f"{key}: expected a number, got {value!r}")
    if annotation is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected an integer, got {value!r}")
    if annotation in (bool, str) and not isinstance(value, annotation):
        raise ConfigError(f"{key}: expected {annotation.__name__}, got {value!r}")
    return value


def config_from_mapping(cls: type[T], mapping: Mapping[str, Any]) -> T:
    """Build the dataclass ``cls`` from a plain mapping.

    Unknown keys and values of the wrong JSON type raise :class:`ConfigError`,
    as does a failing ``validate()``. Enums and tuples are coerced from their
    JSON representation.
    """
    if not dataclasses.is_dataclass(cls):
        raise TypeError(f"{cls!r} is not a dataclass")
    hints = typing.get_type_hints(cls)
    known = {f.name for f in dataclasses.fields(cls) if f.init}
    unknown = sorted(set(mapping) - known)
    if unknown:
        raise ConfigError(f"unknown {cls.__name__} keys: {', '.join(unknown)}")
    kwargs = {key: _coerce(value, hints[key], key) for key, value in mapping.items()}
    try:
        instance = cls(**kwargs)
        validate = getattr(instance, "validate", None)
        if callable(validate):
            validate()
    except (TypeError, ValueError) as exc:
        raise ConfigError(f"invalid {cls.__name__}: {exc}") from exc
    return instance


def load_config(
    cls: type[T],
    path: Path | str | None = None,
    overrides: Mapping[str, Any] | None = None,
) -> T:
    """Merge a JSON config file with explicit overrides; overrides win.

    ``None`` override values are ignored so that unset CLI flags fall through to
    the file or the dataclass defaults.
    """
    values: dict[str, Any] = load_json(path) if path is not None else {}
    for key, value in (overrides or {}).items():
        if value is not None:
            values[key] = value
    return config_from_mapping(cls, values)


def config_to_dict(instance: Any) -> dict[str, Any]:
    """Serialise a config dataclass into JSON-compatible values."""
    result: dict[str, Any] = {}
    for f in dataclasses.fields(instance):
        value = getattr(instance, f.name)
        if isinstance(value, enum.Enum):
            value = value.value
        elif isinstance(value, tuple):
            value = list(value)
        result[f.name] = value
    return result


__all__ = [
    "DEFAULT_JOBS",
    "config_from_mapping",
    "config_to_dict",
    "load_config",
    "load_json",
]
