# Copyright (c) 2025 Hermann Agossou
# Licensed under the MIT License. See the LICENSE file for details.

"""Custom exceptions for MapInfer.

Every exception carries the process exit code the CLI uses for it.
"""


class MapInferError(Exception):
    """Base exception for all MapInfer errors."""

    exit_code = 1


class UsageError(MapInferError):
    """Raised when an operation is called with arguments it cannot accept."""

    exit_code = 1


class ConfigError(MapInferError):
    """Raised when there is an error loading or applying configuration."""

    exit_code = 1


class DataError(MapInferError):
    """Raised when an input artifact is malformed or fails validation."""

    exit_code = 2


class GraphFormatError(DataError):
    """Raised when a graph file line cannot be parsed."""

    def __init__(self, line_number: int, message: str) -> None:
        super().__init__(f"line {line_number}: {message}")
        self.line_number = line_number


class GraphValidationError(DataError):
    """Raised when a graph violates a structural invariant."""

    pass


class NoMatchError(MapInferError):
    """Raised when map-matching finds no candidate edge for a path vertex."""

    pass


class ProtocolError(MapInferError):
    """Raised when an external decider breaks the wire protocol."""

    exit_code = 3


class DivergenceError(MapInferError):
    """Raised when training produces a non-finite loss."""

    exit_code = 4


class TemplateError(MapInferError):
    """Raised when there is an error loading or rendering templates."""

    pass
