"""Metric computation over posted accuracy matrices.

Incomplete matrices raise :class:`MetricsError`, which the application maps
to a 422 error envelope.
"""

from __future__ import annotations

from fastapi import APIRouter

from packages.kaizen.contracts.metrics import TableEntry
from packages.kaizen.eval_metrics import build_report, render_table, summarize_reports
from packages.kaizen.schemas import (
    ErrorResponse,
    MetricsRequest,
    MetricsResponse,
    TableRequest,
    TableResponse,
)

router = APIRouter(
    prefix="/v1/metrics",
    tags=["metrics"],
    responses={422: {"model": ErrorResponse, "description": "Invalid or incomplete matrices"}},
)


@router.post("", summary="FA, CA, F and FT per seed plus their summary", response_model=MetricsResponse)
def compute_metrics(request: MetricsRequest) -> MetricsResponse:
    reports = [build_report(matrix) for matrix in request.matrices]
    return MetricsResponse(reports=reports, summary=summarize_reports(reports))


@router.post("/table", summary="Render the results table", response_model=TableResponse)
def compute_table(request: TableRequest) -> TableResponse:
    entries = [
        TableEntry(
            strategy=row.strategy,
            ssl_kind=row.ssl_kind,
            summary=summarize_reports([build_report(m) for m in row.matrices]),
        )
        for row in request.rows
    ]
    return TableResponse(table=render_table(entries, digits=request.digits))
