"""Pydantic schemas for the HTTP service."""

from .base import BaseSchema
from .error import ErrorPayload, ErrorResponse
from .health import HealthResponse, MetaResponse
from .metrics import MetricsRequest, MetricsResponse, TableRequest, TableResponse, TableRow

__all__ = [
    "BaseSchema",
    "ErrorPayload",
    "ErrorResponse",
    "HealthResponse",
    "MetaResponse",
    "MetricsRequest",
    "MetricsResponse",
    "TableRequest",
    "TableResponse",
    "TableRow",
]
