"""
DeVigNet Logging Utilities
Module loggers, per-run training log files and structlog setup for the
training event stream
"""

import logging
import logging.handlers
import sys
from contextlib import contextmanager
from pathlib import Path
from typing import Iterator, Optional, Sequence

import structlog

from config import app_config

LOG_FORMAT = "%(asctime)s - %(name)s - %(levelname)s - %(message)s"
DATE_FORMAT = "%Y-%m-%d %H:%M:%S"
EVENTS_LOGGER = "services.training_events"
RUN_LOG_NAME = "train.log"
RUN_LOG_SOURCES = ("services", "network")

_structlog_configured = False


def _formatter() -> logging.Formatter:
    return logging.Formatter(LOG_FORMAT, datefmt=DATE_FORMAT)


def setup_logger(name: str, level: Optional[str] = None) -> logging.Logger:
    """
    Set up a logger with consistent formatting and handlers

    Console output goes to stderr; stdout is reserved for CLI results.

    Args:
        name: Logger name (usually __name__)
        level: Log level override

    Returns:
        Configured logger
    """
    logger = logging.getLogger(name)
    logger.setLevel(getattr(logging, (level or app_config.log_level).upper()))

    if logger.handlers:
        return logger

    console_handler = logging.StreamHandler(sys.stderr)
    console_handler.setFormatter(_formatter())
    logger.addHandler(console_handler)

    if not app_config.testing:
        log_dir = app_config.log_directory
        log_dir.mkdir(parents=True, exist_ok=True)
        module_name = name.split('.')[-1]

        # Rotating file handler (10MB max, keep 5 files)
        file_handler = logging.handlers.RotatingFileHandler(
            log_dir / f"{module_name}.log", maxBytes=10 * 1024 * 1024, backupCount=5
        )
        file_handler.setFormatter(_formatter())
        logger.addHandler(file_handler)

    return logger


@contextmanager
def run_log(output_dir: Path, sources: Sequence[str] = RUN_LOG_SOURCES) -> Iterator[logging.Handler]:
    """Copy every service and network record into <output_dir>/train.log while active"""
    output_dir = Path(output_dir)
    output_dir.mkdir(parents=True, exist_ok=True)
    handler = logging.FileHandler(output_dir / RUN_LOG_NAME)
    handler.setFormatter(_formatter())
    parents = [logging.getLogger(name) for name in sources]
    for parent in parents:
        parent.addHandler(handler)
    try:
        yield handler
    finally:
        for parent in parents:
            parent.removeHandler(handler)
        handler.close()


def configure_structlog(json_output: Optional[bool] = None):
    """Route structlog events through a stdlib logger under `services`"""
    global _structlog_configured
    if _structlog_configured:
        return
    if json_output is None:
        json_output = app_config.log_json

    setup_logger(EVENTS_LOGGER)
    renderer = (
        structlog.processors.JSONRenderer()
        if json_output
        else structlog.processors.KeyValueRenderer(key_order=["event"], sort_keys=True)
    )
    structlog.configure(
        processors=[
            structlog.stdlib.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            renderer,
        ],
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )
    _structlog_configured = True


def log_error(logger: logging.Logger, context_id: str, error: Exception,
              context: Optional[dict] = None):
    """Log error with context"""
    context_str = f" - Context: {context}" if context else ""
    logger.error(f"[{context_id}] Error: {str(error)}{context_str}", exc_info=True)
