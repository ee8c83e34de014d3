"""Versioned metadata endpoints."""

from __future__ import annotations

from fastapi import APIRouter

from packages.kaizen.schemas import MetaResponse
from packages.kaizen.services import MetaService

router = APIRouter(prefix="/v1")


@router.get("/meta", summary="Service metadata and numeric-stack versions", response_model=MetaResponse)
def get_meta() -> MetaResponse:
    return MetaService().meta()
