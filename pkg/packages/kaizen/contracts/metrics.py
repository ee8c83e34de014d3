"""Accuracy-matrix and metric-report contracts.

``AccuracyMatrix.rows[t - 1][k - 1]`` holds A_{t,k}: the accuracy on task k
after training on task t (1-based, k <= t). ``single_task[k - 1]`` holds
A'_{k,k} of a model trained on task k alone.
"""

from __future__ import annotations

import csv
import io
import math

from pydantic import BaseModel, ConfigDict, Field, model_validator

CSV_AFTER_TASK = "after_task"
CSV_SINGLE_TASK_HEADER = ("task", "single_task_accuracy")


def _check_unit_interval(values: list[float], what: str) -> None:
    for value in values:
        if not (math.isfinite(value) and 0.0 <= value <= 1.0):
            raise ValueError(f"{what} must lie in [0, 1], got {value!r}")


class AccuracyMatrix(BaseModel):
    """Lower-triangular accuracy matrix plus optional single-task diagonal."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    num_tasks: int = Field(..., ge=1)
    rows: list[list[float]] = Field(default_factory=list)
    single_task: list[float] | None = None

    @model_validator(mode="after")
    def _triangular(self) -> AccuracyMatrix:
        if len(self.rows) > self.num_tasks:
            raise ValueError(f"at most {self.num_tasks} rows allowed, got {len(self.rows)}")
        for index, row in enumerate(self.rows, start=1):
            if len(row) != index:
                raise ValueError(f"row after task {index} must hold {index} values, got {len(row)}")
            _check_unit_interval(row, f"A[{index}]")
        if self.single_task is not None:
            if len(self.single_task) != self.num_tasks:
                raise ValueError(
                    f"single_task must hold {self.num_tasks} values, got {len(self.single_task)}"
                )
            _check_unit_interval(self.single_task, "single_task")
        return self

    @property
    def is_complete(self) -> bool:
        return len(self.rows) == self.num_tasks

    @property
    def populated_cells(self) -> int:
        return sum(len(row) for row in self.rows)

    def accuracy(self, after_task: int, task: int) -> float:
        """A_{after_task, task}."""
        if not 1 <= task <= after_task <= len(self.rows):
            raise KeyError(f"A[{after_task},{task}] is not populated")
        return self.rows[after_task - 1][task - 1]

    def with_row(self, row: list[float]) -> AccuracyMatrix:
        return type(self)(
            num_tasks=self.num_tasks, rows=[*self.rows, list(row)], single_task=self.single_task
        )

    def with_single_task(self, values: list[float]) -> AccuracyMatrix:
        return type(self)(num_tasks=self.num_tasks, rows=self.rows, single_task=list(values))

    def to_csv(self) -> str:
        """CSV with header ``after_task,task_1..task_T``; unseen cells are empty."""
        buffer = io.StringIO()
        writer = csv.writer(buffer, lineterminator="\n")
        writer.writerow([CSV_AFTER_TASK, *(f"task_{k}" for k in range(1, self.num_tasks + 1))])
        for after_task, row in enumerate(self.rows, start=1):
            cells = [repr(value) for value in row]
            cells += [""] * (self.num_tasks - len(row))
            writer.writerow([after_task, *cells])
        return buffer.getvalue()

    @classmethod
    def from_csv(cls, text: str, single_task: list[float] | None = None) -> AccuracyMatrix:
        reader = csv.reader(io.StringIO(text))
        header = next(reader, None)
        if not header or header[0] != CSV_AFTER_TASK:
            raise ValueError(f"matrix CSV must start with a '{CSV_AFTER_TASK}' header")
        num_tasks = len(header) - 1
        expected = [f"task_{k}" for k in range(1, num_tasks + 1)]
        if header[1:] != expected:
            raise ValueError(f"matrix CSV header must be {CSV_AFTER_TASK},{','.join(expected)}")
        rows: list[list[float]] = []
        for line_no, record in enumerate(reader, start=2):
            if not record:
                continue
            if int(record[0]) != len(rows) + 1:
                raise ValueError(f"line {line_no}: expected after_task={len(rows) + 1}")
            seen = record[1 : len(rows) + 2]
            if any(cell == "" for cell in seen):
                raise ValueError(f"line {line_no}: missing accuracy for a seen task")
            if any(cell != "" for cell in record[len(rows) + 2 :]):
                raise ValueError(f"line {line_no}: accuracy given for an unseen task")
            rows.append([float(cell) for cell in seen])
        return cls(num_tasks=num_tasks, rows=rows, single_task=single_task)


def single_task_to_csv(values: list[float]) -> str:
    buffer = io.StringIO()
    writer = csv.writer(buffer, lineterminator="\n")
    writer.writerow(CSV_SINGLE_TASK_HEADER)
    for task, value in enumerate(values, start=1):
        writer.writerow([task, repr(value)])
    return buffer.getvalue()


def single_task_from_csv(text: str) -> list[float]:
    reader = csv.reader(io.StringIO(text))
    header = tuple(next(reader, ()))
    if header != CSV_SINGLE_TASK_HEADER:
        raise ValueError(f"single-task CSV header must be {','.join(CSV_SINGLE_TASK_HEADER)}")
    values: list[float] = []
    for record in reader:
        if not record:
            continue
        if int(record[0]) != len(values) + 1:
            raise ValueError("single-task CSV rows must be ordered by task")
        values.append(float(record[1]))
    return values


class MetricsReport(BaseModel):
    """FA, CA, F, FT plus per-task accuracy curves."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    num_tasks: int = Field(..., ge=1)
    final_accuracy: float = Field(..., ge=0.0, le=1.0)
    continual_accuracy: float = Field(..., ge=0.0, le=1.0)
    forgetting: float | None = Field(None, ge=-1.0, le=1.0)
    forward_transfer: float | None = Field(None, ge=-1.0, le=1.0)
    per_task_curves: dict[int, list[float]] = Field(
        default_factory=dict, description="task k -> [A_{t,k} for t >= k]"
    )


class MetricSummary(BaseModel):
    """Mean and population standard deviation of one metric over seeds."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    mean: float
    std: float
    count: int = Field(..., ge=1)


class MetricsSummary(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    final_accuracy: MetricSummary
    continual_accuracy: MetricSummary
    forgetting: MetricSummary | None = None
    forward_transfer: MetricSummary | None = None


class TableEntry(BaseModel):
    """One labelled row of the results table."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    strategy: str = Field(..., min_length=1)
    ssl_kind: str = Field(..., min_length=1)
    summary: MetricsSummary
