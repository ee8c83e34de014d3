"""Class-partition contract for class-incremental task streams."""

from __future__ import annotations

from collections import Counter

from pydantic import BaseModel, ConfigDict, Field, model_validator


class ClassPartition(BaseModel):
    """Assignment of every class id to exactly one (1-based) task index."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    seed: int
    num_tasks: int = Field(..., ge=1)
    num_classes: int = Field(..., ge=1)
    assignment: dict[int, int] = Field(..., description="class id -> task index")

    @model_validator(mode="after")
    def _valid_assignment(self) -> ClassPartition:
        if set(self.assignment) != set(range(self.num_classes)):
            raise ValueError("assignment must cover every class id in [0, num_classes) once")
        per_task = Counter(self.assignment.values())
        if set(per_task) != set(range(1, self.num_tasks + 1)):
            raise ValueError("every task index in [1, num_tasks] needs classes")
        expected = self.num_classes // self.num_tasks
        if any(count != expected for count in per_task.values()):
            raise ValueError(f"each task must hold exactly {expected} classes")
        return self

    @property
    def classes_per_task(self) -> int:
        return self.num_classes // self.num_tasks

    def classes_for(self, task_index: int) -> tuple[int, ...]:
        """Sorted class ids of *task_index*."""
        return tuple(
            sorted(cls for cls, task in self.assignment.items() if task == task_index)
        )

    def to_json(self) -> str:
        return self.model_dump_json(indent=2)

    @classmethod
    def from_json(cls, payload: str) -> ClassPartition:
        return cls.model_validate_json(payload)
