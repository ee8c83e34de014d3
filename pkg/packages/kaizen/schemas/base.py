"""Base class of the HTTP request and response bodies."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict


class BaseSchema(BaseModel):
    """Frozen and strict, like the contracts; dumps leave out ``None`` fields."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    def model_dump(self, **kwargs):  # type: ignore[override]
        return super().model_dump(**{"exclude_none": True, **kwargs})

    def model_dump_json(self, **kwargs):  # type: ignore[override]
        return super().model_dump_json(**{"exclude_none": True, **kwargs})
