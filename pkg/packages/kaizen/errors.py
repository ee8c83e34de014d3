"""Exception hierarchy and the standard error payload."""

from __future__ import annotations

import uuid
from typing import Any

from .logging import TRACE_ID_CTX_VAR

EXIT_OK = 0
EXIT_NO_COMMAND = 1
EXIT_USAGE = 2
EXIT_CONFIG = 3
EXIT_DATA = 4
EXIT_RUNTIME = 5


class KaizenError(Exception):
    """Base error carrying a machine-readable code and details."""

    code: str = "KAIZEN_ERROR"
    exit_code: int = EXIT_RUNTIME

    def __init__(self, message: str, *, details: dict[str, Any] | None = None):
        super().__init__(message)
        self.message = message
        self.details = dict(details or {})

    def to_payload(self) -> dict:
        return build_error_response(self.code, self.message, details=self.details)


class ConfigError(KaizenError, ValueError):
    """Invalid experiment configuration or refused run request."""

    code = "CONFIG_ERROR"
    exit_code = EXIT_CONFIG


class ArtifactExistsError(ConfigError):
    """A run directory for the same config hash already exists."""

    code = "ARTIFACT_EXISTS"


class DataError(KaizenError, ValueError):
    """Dataset, stream or input-file problems."""

    code = "DATA_ERROR"
    exit_code = EXIT_DATA


class StreamError(DataError):
    """Invalid class partition or task stream."""

    code = "STREAM_ERROR"


class MetricsError(DataError):
    """Accuracy matrix or metric input violates its schema."""

    code = "METRICS_ERROR"


class RuntimeFailure(KaizenError):
    """Failure while training or evaluating."""

    code = "RUNTIME_ERROR"
    exit_code = EXIT_RUNTIME


class ReplayError(RuntimeFailure, ValueError):
    code = "REPLAY_ERROR"


class ObjectiveError(RuntimeFailure, ValueError):
    code = "OBJECTIVE_ERROR"


class ModelError(RuntimeFailure, ValueError):
    code = "MODEL_ERROR"


class TrainingError(RuntimeFailure):
    code = "TRAINING_ERROR"


class TrainingDivergedError(TrainingError):
    """A loss became non-finite; details carry the diagnostic dump."""

    code = "TRAINING_DIVERGED"


class ArtifactError(RuntimeFailure):
    """A run directory is incomplete or a required series is missing."""

    code = "ARTIFACT_ERROR"


def _current_trace_id() -> str:
    """Return the current trace id from context or generate a new one."""

    return TRACE_ID_CTX_VAR.get() or str(uuid.uuid4())


def build_error_response(
    code: str, message: str, *, details: dict[str, Any] | list | None = None
) -> dict:
    """Create a standardized error response payload."""
    payload = {
        "error": {
            "code": code,
            "message": message,
            "trace_id": _current_trace_id(),
        }
    }
    if details:
        payload["error"]["details"] = details
    return payload
