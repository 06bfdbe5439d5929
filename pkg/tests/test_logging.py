"""Tests for logging configuration."""

import logging
from pathlib import Path

import pytest

from mapinfer.logging import component_of, get_logger, logger, parse_level, setup_logging


def test_setup_logging_default_level() -> None:
    """Test logging setup with default INFO level."""
    setup_logging()
    assert logger.level == logging.INFO


def test_setup_logging_debug_level() -> None:
    """Test logging setup with DEBUG level."""
    setup_logging(level=logging.DEBUG)
    assert logger.level == logging.DEBUG
    setup_logging()


def test_logger_has_stream_handler() -> None:
    """Test that logger has a StreamHandler configured."""
    setup_logging()
    assert any(isinstance(h, logging.StreamHandler) for h in logger.handlers)


def test_stage_loggers_are_children() -> None:
    """Test that each stage logs under the package logger."""
    tracer_log = get_logger("tracer")
    assert logger.name == "mapinfer"
    assert tracer_log.name == "mapinfer.tracer"
    assert tracer_log.parent is logger
    assert component_of("mapinfer.tracer") == "tracer"
    assert component_of("mapinfer") == "-"


def test_setup_logging_idempotent() -> None:
    """Test that calling setup_logging multiple times doesn't add duplicate handlers."""
    setup_logging()
    initial_handler_count = len(logger.handlers)

    setup_logging()

    assert len(logger.handlers) == initial_handler_count


def test_stage_records_reach_file_with_stage_name(tmp_path: Path) -> None:
    """Test that a stage record lands in the log file tagged with its stage."""
    log_file = tmp_path / "run.log"
    setup_logging(log_file=str(log_file))
    get_logger("tracer").warning("seed skipped")
    for handler in logger.handlers:
        handler.flush()

    line = log_file.read_text().strip()
    assert " - tracer - WARNING - seed skipped" in line
    setup_logging()


def test_component_levels(tmp_path: Path) -> None:
    """Test that one stage can be quieted while the others stay verbose."""
    log_file = tmp_path / "run.log"
    setup_logging(level=logging.DEBUG, log_file=str(log_file), component_levels={"tracer": logging.WARNING})
    get_logger("tracer").debug("step 1: add")
    get_logger("oracle").debug("lattice break")
    for handler in logger.handlers:
        handler.flush()

    text = log_file.read_text()
    assert "lattice break" in text
    assert "step 1" not in text

    setup_logging()
    assert get_logger("tracer").level == logging.NOTSET


def test_console_line_names_stage(capsys: pytest.CaptureFixture[str]) -> None:
    """Test the stderr format."""
    setup_logging()
    get_logger("skeleton").info("Extended dead end 3")
    assert "INFO [skeleton]: Extended dead end 3" in capsys.readouterr().err


def test_parse_level() -> None:
    """Test level names and numbers."""
    assert parse_level("warning") == logging.WARNING
    assert parse_level("10") == logging.DEBUG
    with pytest.raises(ValueError, match="unknown log level"):
        parse_level("chatty")
