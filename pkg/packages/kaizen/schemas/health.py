"""Schemas for health and metadata endpoints."""

from __future__ import annotations

from .base import BaseSchema


class HealthResponse(BaseSchema):
    status: str
    service: str
    version: str


class MetaResponse(BaseSchema):
    """Service metadata plus the versions of the numeric stack."""

    service: str
    env: str
    version: str
    stack: dict[str, str]
