"""Structured Logging - Configured structlog for batch runs."""

import logging
import sys
from typing import Any

import structlog

# STF_LOG_LEVEL accepts the short "warn" spelling
_LEVEL_ALIASES = {
    "debug": "DEBUG",
    "info": "INFO",
    "warn": "WARNING",
    "warning": "WARNING",
    "error": "ERROR",
}


def resolve_level(log_level: str) -> int:
    """Translate a level name into a stdlib logging level.

    Args:
        log_level: Level name (debug, info, warn), case-insensitive.

    Returns:
        Numeric logging level.
    """
    name = _LEVEL_ALIASES.get(log_level.lower(), log_level.upper())
    return getattr(logging, name, logging.INFO)


def setup_logging(log_level: str = "info") -> None:
    """Configure structured logging with structlog.

    Events are rendered as one JSON object per line on stderr, leaving
    stdout for command results.

    Args:
        log_level: Logging level (debug, info, warn).
    """
    level = resolve_level(log_level)

    structlog.configure(
        processors=[
            structlog.contextvars.merge_contextvars,
            structlog.processors.add_log_level,
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            structlog.processors.JSONRenderer(),
        ],
        wrapper_class=structlog.make_filtering_bound_logger(level),
        context_class=dict,
        logger_factory=structlog.PrintLoggerFactory(file=sys.stderr),
        cache_logger_on_first_use=False,
    )

    logging.basicConfig(
        format="%(message)s",
        stream=sys.stderr,
        level=level,
    )


def get_logger(name: str) -> structlog.BoundLogger:
    """Get a structured logger instance.

    Args:
        name: Logger name (usually __name__).

    Returns:
        Bound structlog logger.
    """
    return structlog.get_logger(name)


def bind_run_context(**context: Any) -> None:
    """Attach key-value pairs to every event logged for the rest of the run.

    Args:
        **context: Context such as command name or experiment seed.
    """
    structlog.contextvars.bind_contextvars(**context)
