"""Health and metadata answers for the HTTP service."""

from __future__ import annotations

from ..config import AppSettings, get_settings
from ..schemas import HealthResponse, MetaResponse
from ..version import environment_versions, get_version_info


class MetaService:
    """Builds the ``/healthz`` and ``/v1/meta`` bodies from settings and version info."""

    def __init__(self, settings: AppSettings | None = None) -> None:
        self._settings = settings or get_settings()

    def health(self) -> HealthResponse:
        return HealthResponse(
            status="ok", service=self._settings.name, version=get_version_info().version
        )

    def meta(self) -> MetaResponse:
        """Service identity plus the versions of the interpreter and numeric stack."""
        return MetaResponse(
            service=self._settings.name,
            env=self._settings.env,
            version=get_version_info().version,
            stack=environment_versions(),
        )
