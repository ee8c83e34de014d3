"""Service helpers used by the HTTP layer."""

from .meta_service import MetaService

__all__ = ["MetaService"]
