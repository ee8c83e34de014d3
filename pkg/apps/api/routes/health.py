"""Liveness endpoint."""

from __future__ import annotations

from fastapi import APIRouter

from packages.kaizen.schemas import HealthResponse
from packages.kaizen.services import MetaService

router = APIRouter()


@router.get("/healthz", summary="Health check", response_model=HealthResponse)
def health_check() -> HealthResponse:
    return MetaService().health()
