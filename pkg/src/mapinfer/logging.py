# Copyright (c) 2025 Hermann Agossou
# Licensed under the MIT License. See the LICENSE file for details.

"""Logging for MapInfer.

Every pipeline stage logs through its own child of the ``mapinfer`` logger
(``mapinfer.tracer``, ``mapinfer.oracle``, ``mapinfer.skeleton``...), so a
run can turn the per-step tracer chatter up or down without touching the
metric or protocol records. Records go to stderr; stdout carries reports and
the decider protocol.
"""

import logging
import sys
from typing import Mapping, Optional

ROOT = "mapinfer"

logger = logging.getLogger(ROOT)


def get_logger(component: str) -> logging.Logger:
    """Return the logger of one pipeline stage, e.g. ``get_logger("tracer")``."""
    return logging.getLogger(f"{ROOT}.{component}")


def component_of(name: str) -> str:
    """Stage name shown in log lines: ``mapinfer.tracer`` gives ``tracer``."""
    if name.startswith(ROOT + "."):
        return name[len(ROOT) + 1 :]
    return "-" if name == ROOT else name


class _ComponentFilter(logging.Filter):
    def filter(self, record: logging.LogRecord) -> bool:
        record.component = component_of(record.name)
        return True


def parse_level(text: str) -> int:
    """Level from a name (``debug``) or a number (``10``)."""
    if text.isdigit():
        return int(text)
    level = logging.getLevelName(text.upper())
    if not isinstance(level, int):
        raise ValueError(f"unknown log level {text!r}")
    return level


def setup_logging(
    level: int = logging.INFO,
    log_file: Optional[str] = None,
    component_levels: Optional[Mapping[str, int]] = None,
) -> None:
    """Configure the ``mapinfer`` logger tree.

    Args:
        level: Level of the whole tree (default: logging.INFO)
        log_file: Optional path to log file
        component_levels: Per-stage overrides, e.g. ``{"tracer": logging.WARNING}``
    """
    logger.handlers.clear()
    logger.setLevel(level)

    # Stage levels from an earlier call must not leak into this one
    for name in list(logging.root.manager.loggerDict):
        if name.startswith(ROOT + "."):
            logging.getLogger(name).setLevel(logging.NOTSET)
    for component, component_level in (component_levels or {}).items():
        get_logger(component).setLevel(component_level)

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(logging.Formatter("%(levelname)s [%(component)s]: %(message)s"))
    console_handler.addFilter(_ComponentFilter())
    logger.addHandler(console_handler)

    if log_file:
        file_handler = logging.FileHandler(log_file)
        file_handler.setFormatter(
            logging.Formatter("%(asctime)s - %(component)s - %(levelname)s - %(message)s")
        )
        file_handler.addFilter(_ComponentFilter())
        logger.addHandler(file_handler)
