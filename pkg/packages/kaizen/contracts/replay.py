"""Replay-buffer index-file contract."""

from __future__ import annotations

from pydantic import BaseModel, ConfigDict, Field, model_validator


class ReplayEntry(BaseModel):
    """Reference to one retained training sample."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    sample_index: int = Field(..., ge=0, description="Index into the training split")
    class_id: int = Field(..., ge=0)
    task_index: int = Field(..., ge=1, description="Task the sample was ingested from")


class ReplaySnapshot(BaseModel):
    """Everything needed to restore a buffer, cursor included."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int
    fraction: float = Field(..., ge=0.0, le=1.0)
    min_per_batch: int = Field(..., ge=0)
    entries: list[ReplayEntry] = Field(default_factory=list)
    ingested_tasks: list[int] = Field(default_factory=list)
    cursor: int = Field(0, ge=0, description="Position inside the current pass")
    passes: int = Field(0, ge=0, description="Completed passes over the entries")

    @model_validator(mode="after")
    def _consistent(self) -> ReplaySnapshot:
        if len(set(self.ingested_tasks)) != len(self.ingested_tasks):
            raise ValueError("ingested_tasks must be unique")
        unknown = {e.task_index for e in self.entries} - set(self.ingested_tasks)
        if unknown:
            raise ValueError(f"entries reference tasks never ingested: {sorted(unknown)}")
        if self.entries and self.cursor >= len(self.entries):
            raise ValueError("cursor must lie inside the entry list")
        return self
