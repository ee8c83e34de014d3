"""Request and response bodies of the metrics endpoints."""

from __future__ import annotations

from pydantic import Field

from ..contracts.metrics import AccuracyMatrix, MetricsReport, MetricsSummary
from .base import BaseSchema


class MetricsRequest(BaseSchema):
    """One accuracy matrix per seed."""

    matrices: list[AccuracyMatrix] = Field(..., min_length=1)


class MetricsResponse(BaseSchema):
    reports: list[MetricsReport]
    summary: MetricsSummary


class TableRow(BaseSchema):
    strategy: str = Field(..., min_length=1)
    ssl_kind: str = Field(..., min_length=1)
    matrices: list[AccuracyMatrix] = Field(..., min_length=1)


class TableRequest(BaseSchema):
    rows: list[TableRow] = Field(..., min_length=1)
    digits: int = Field(default=3, ge=1, le=6)


class TableResponse(BaseSchema):
    table: str
