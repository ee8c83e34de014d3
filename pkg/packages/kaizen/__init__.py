"""Kaizen: continual self-supervised learning with knowledge integration."""

from .config import AppSettings, get_settings, reset_settings_cache
from .errors import KaizenError, build_error_response
from .logging import get_logger, trace_scope
from .version import VersionInfo, get_version_info

__all__ = [
    "AppSettings",
    "build_error_response",
    "get_logger",
    "get_settings",
    "get_version_info",
    "KaizenError",
    "reset_settings_cache",
    "trace_scope",
    "VersionInfo",
]
