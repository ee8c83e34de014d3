"""Run-artifact manifest contract."""

from __future__ import annotations

import time
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field

RunStatus = Literal["running", "succeeded", "failed"]

# Files every succeeded seed directory must contain.
SEED_REQUIRED_FILES: tuple[str, ...] = (
    "accuracy_matrix.csv",
    "accuracy_matrix.json",
    "metrics.json",
    "loss_log.jsonl",
)
RUN_REQUIRED_FILES: tuple[str, ...] = ("config.yaml", "manifest.json", "summary.json", "table.txt")


class SeedArtifact(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int
    directory: str
    files: list[str] = Field(default_factory=list)


class RunManifest(BaseModel):
    """Inventory of a run directory; names the config hash that produced it."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    config_hash: str = Field(..., min_length=64, max_length=64)
    name: str
    status: RunStatus = "running"
    seeds: list[SeedArtifact] = Field(default_factory=list)
    versions: dict[str, str] = Field(default_factory=dict)
    started_at: float = Field(default_factory=time.time)
    finished_at: float | None = None
    error: dict[str, Any] | None = None
