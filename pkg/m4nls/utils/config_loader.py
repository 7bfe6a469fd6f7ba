"""
Run configuration loader.
Flat JSON objects with dotted keys are unflattened into nested sections and
validated as a RunConfig; every failure is reported as a ConfigError naming the key.
"""

import json
from pathlib import Path
from typing import Any, Union

from pydantic import ValidationError

from m4nls.models.schemas import RunConfig
from m4nls.utils.errors import ConfigError
from m4nls.utils.logger import logger


def _reject_duplicates(pairs: list[tuple[str, Any]]) -> dict[str, Any]:
    result: dict[str, Any] = {}
    for key, value in pairs:
        if key in result:
            raise ConfigError(f"duplicate key '{key}'", key=key)
        result[key] = value
    return result


def unflatten(flat: dict[str, Any]) -> dict[str, Any]:
    """{"solver.tol": 1e-8} -> {"solver": {"tol": 1e-8}}."""
    nested: dict[str, Any] = {}
    for key, value in flat.items():
        parts = key.split(".")
        if any(not part for part in parts):
            raise ConfigError(f"malformed key '{key}'", key=key)
        node = nested
        for depth, part in enumerate(parts[:-1]):
            child = node.setdefault(part, {})
            if not isinstance(child, dict):
                raise ConfigError(f"key '{key}' conflicts with '{'.'.join(parts[:depth + 1])}'", key=key)
            node = child
        leaf = parts[-1]
        if leaf in node and (isinstance(node[leaf], dict) or isinstance(value, dict)):
            if isinstance(node[leaf], dict) and isinstance(value, dict):
                node[leaf].update(value)
                continue
            raise ConfigError(f"key '{key}' conflicts with a section of the same name", key=key)
        node[leaf] = value
    return nested


def _error_key(error: dict) -> str:
    location = ".".join(str(part) for part in error.get("loc", ()))
    return location or "config"


def parse_config(path: Union[str, Path]) -> RunConfig:
    """
    Load and validate a run configuration.

    Args:
        path: JSON file, UTF-8, flat object with dotted keys

    Returns:
        RunConfig with defaults filled; relative paths resolved against the file's directory

    Raises:
        ConfigError: missing file, invalid JSON, duplicate or unknown key, bad value
    """
    path = Path(path)
    if not path.is_file():
        raise ConfigError(f"config file not found: {path}")
    try:
        with open(path, "r", encoding="utf-8") as f:
            raw = json.load(f, object_pairs_hook=_reject_duplicates)
    except json.JSONDecodeError as e:
        raise ConfigError(f"invalid JSON in {path}: {e}") from e
    if not isinstance(raw, dict):
        raise ConfigError("configuration must be a JSON object")

    data = unflatten(raw)
    for key in ("input_field", "output_dir"):
        value = data.get(key)
        if isinstance(value, str) and not Path(value).is_absolute():
            data[key] = str(path.parent / value)

    try:
        config = RunConfig.model_validate(data)
    except ValidationError as e:
        first = e.errors()[0]
        key = _error_key(first)
        raise ConfigError(f"{key}: {first['msg']}", key=key) from e

    logger.info(f"Loaded configuration {path} (command={config.command})")
    return config
