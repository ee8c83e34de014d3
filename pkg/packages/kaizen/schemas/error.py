"""Error envelope returned by the HTTP service."""

from __future__ import annotations

from typing import Any

from .base import BaseSchema


class ErrorPayload(BaseSchema):
    code: str
    message: str
    trace_id: str
    details: dict[str, Any] | list | None = None


class ErrorResponse(BaseSchema):
    error: ErrorPayload
