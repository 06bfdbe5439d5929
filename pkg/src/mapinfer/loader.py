# Copyright (c) 2025 Hermann Agossou
# Licensed under the MIT License. See the LICENSE file for details.

"""Configuration loading, overrides and atomic artifact writes."""

import json
import os
import tempfile
from pathlib import Path
from typing import Any, Iterable, Mapping

import yaml
from pydantic import ValidationError

from mapinfer.exceptions import ConfigError, DataError
from mapinfer.logging import get_logger
from mapinfer.models import RunConfig


logger = get_logger("loader")


def load_config(filepath: Path) -> RunConfig:
    """Load and validate a configuration file.

    ``.yml``/``.yaml`` files hold a nested mapping; any other file is read as
    flat ``section.key=value`` lines.

    Args:
        filepath: Path to the configuration file

    Returns:
        Validated RunConfig

    Raises:
        ConfigError: If the file doesn't exist or cannot be parsed
        DataError: If the data doesn't match the schema
    """
    if not filepath.exists():
        raise ConfigError(f"Config file not found: {filepath}")

    logger.debug(f"Loading config from {filepath}")
    text = filepath.read_text(encoding="utf-8")
    if filepath.suffix in (".yml", ".yaml"):
        try:
            data = yaml.safe_load(text)
        except yaml.YAMLError as e:
            raise ConfigError(f"Invalid YAML in {filepath}: {e}") from e
        if data is None:
            data = {}
        if not isinstance(data, dict):
            raise ConfigError(f"Expected a mapping in {filepath}, got {type(data)}")
    else:
        data = parse_flat_config(text, str(filepath))

    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise DataError(f"Validation failed for {filepath}: {e}") from e


def parse_scalar(raw: str) -> Any:
    """Parse one config value the way YAML reads a plain scalar."""
    try:
        return yaml.safe_load(raw) if raw.strip() else None
    except yaml.YAMLError as e:
        raise ConfigError(f"Cannot parse value {raw!r}: {e}") from e


def parse_flat_config(text: str, source: str = "<config>") -> dict[str, dict[str, Any]]:
    """Turn ``section.key=value`` lines into a nested mapping."""
    data: dict[str, dict[str, Any]] = {}
    for line_number, raw in enumerate(text.splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        dotted, sep, value = line.partition("=")
        section, dot, key = dotted.strip().partition(".")
        if not sep or not dot or not section or not key:
            raise ConfigError(
                f"{source}: line {line_number}: expected 'section.key=value', got {raw!r}"
            )
        data.setdefault(section, {})[key.strip()] = parse_scalar(value.strip())
    return data


def parse_assignments(assignments: Iterable[str]) -> dict[str, Any]:
    """Parse ``--set key=value`` arguments."""
    overrides: dict[str, Any] = {}
    for item in assignments:
        dotted, sep, value = item.partition("=")
        if not sep:
            raise ConfigError(f"Expected key=value, got {item!r}")
        overrides[dotted.strip()] = parse_scalar(value.strip())
    return overrides


def apply_overrides(config: RunConfig, overrides: Mapping[str, Any]) -> RunConfig:
    """Return a new config with dotted keys replaced.

    Raises:
        ConfigError: If a key is unknown or a value fails validation
    """
    data = config.model_dump()
    for dotted, value in overrides.items():
        section, _, key = dotted.partition(".")
        if section not in data or key not in data[section]:
            raise ConfigError(f"Unknown config key: {dotted}")
        data[section][key] = value
    try:
        return RunConfig.model_validate(data)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration override: {e}") from e


def _format_value(value: Any) -> str:
    if value is None:
        return "null"
    if isinstance(value, bool):
        return "true" if value else "false"
    if isinstance(value, float):
        return repr(value)
    if isinstance(value, str) and parse_scalar(value) != value:
        return json.dumps(value)
    return str(value)


def dump_config(config: RunConfig) -> str:
    """Flat ``section.key=value`` text that loads back to an equal config."""
    lines = []
    for section, fields in config.model_dump(mode="json").items():
        for key, value in fields.items():
            lines.append(f"{section}.{key}={_format_value(value)}")
    return "\n".join(lines) + "\n"


def write_bytes_atomic(path: Path, data: bytes) -> None:
    """Write data to path through a temporary sibling file and a rename."""
    path.parent.mkdir(parents=True, exist_ok=True)
    fd, tmp_name = tempfile.mkstemp(dir=path.parent, prefix=f".{path.name}.", suffix=".tmp")
    try:
        with os.fdopen(fd, "wb") as f:
            f.write(data)
        os.replace(tmp_name, path)
    except BaseException:
        Path(tmp_name).unlink(missing_ok=True)
        raise


def write_text_atomic(path: Path, text: str) -> None:
    write_bytes_atomic(path, text.encode("utf-8"))
