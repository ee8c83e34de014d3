"""Continual-learning metrics over an accuracy matrix.

With A_{t,k} the accuracy on task k after training on task t and A'_{k,k}
that of a model trained on task k alone:

* final accuracy:      mean_i A_{T,i}
* continual accuracy:  mean_i ( mean_{j<=i} A_{i,j} )
* forgetting:          mean_{i<T} ( max_t A_{t,i} - A_{T,i} )
* forward transfer:    mean_{i>=2} ( A_{i,i} - A'_{i,i} )

All metric functions are pure.
"""

from __future__ import annotations

from collections.abc import Callable, Sequence

import numpy as np
import torch
from torch.utils.data import DataLoader

from .contracts.metrics import (
    AccuracyMatrix,
    MetricsReport,
    MetricsSummary,
    MetricSummary,
    TableEntry,
)
from .errors import MetricsError
from .task_stream import TaskData

METRIC_COLUMNS: tuple[tuple[str, str], ...] = (
    ("FA", "final_accuracy"),
    ("CA", "continual_accuracy"),
    ("F", "forgetting"),
    ("FT", "forward_transfer"),
)


def _require_complete(matrix: AccuracyMatrix) -> None:
    if not matrix.is_complete:
        raise MetricsError(
            f"accuracy matrix has {len(matrix.rows)} of {matrix.num_tasks} rows",
            details={"populated_cells": matrix.populated_cells},
        )


def final_accuracy(matrix: AccuracyMatrix) -> float:
    _require_complete(matrix)
    last = matrix.rows[-1]
    return sum(last) / matrix.num_tasks


def continual_accuracy(matrix: AccuracyMatrix) -> float:
    """Mean over steps i of the mean accuracy on the tasks seen so far (A_{i,j}, j <= i)."""
    _require_complete(matrix)
    total = 0.0
    for i, row in enumerate(matrix.rows, start=1):
        total += sum(row) / i
    return total / matrix.num_tasks


def forgetting(matrix: AccuracyMatrix) -> float:
    _require_complete(matrix)
    num_tasks = matrix.num_tasks
    if num_tasks < 2:
        raise MetricsError("forgetting is undefined for a single task")
    total = 0.0
    for i in range(1, num_tasks):
        best = max(matrix.accuracy(t, i) for t in range(i, num_tasks + 1))
        total += best - matrix.accuracy(num_tasks, i)
    return total / (num_tasks - 1)


def forward_transfer(matrix: AccuracyMatrix) -> float:
    _require_complete(matrix)
    if matrix.single_task is None:
        raise MetricsError("forward transfer needs single-task accuracies A'_{k,k}")
    num_tasks = matrix.num_tasks
    if num_tasks < 2:
        raise MetricsError("forward transfer is undefined for a single task")
    total = 0.0
    for i in range(2, num_tasks + 1):
        total += matrix.accuracy(i, i) - matrix.single_task[i - 1]
    return total / (num_tasks - 1)


def per_task_curves(matrix: AccuracyMatrix) -> dict[int, list[float]]:
    """Task k -> [A_{t,k} for t = k..]."""
    return {
        k: [matrix.accuracy(t, k) for t in range(k, len(matrix.rows) + 1)]
        for k in range(1, len(matrix.rows) + 1)
    }


def seen_task_average(matrix: AccuracyMatrix) -> list[float]:
    """Mean accuracy over the seen tasks after each step."""
    return [sum(row) / len(row) for row in matrix.rows]


def build_report(matrix: AccuracyMatrix) -> MetricsReport:
    multi = matrix.num_tasks >= 2
    return MetricsReport(
        num_tasks=matrix.num_tasks,
        final_accuracy=final_accuracy(matrix),
        continual_accuracy=continual_accuracy(matrix),
        forgetting=forgetting(matrix) if multi else None,
        forward_transfer=(
            forward_transfer(matrix) if multi and matrix.single_task is not None else None
        ),
        per_task_curves=per_task_curves(matrix),
    )


def macro_accuracy(
    predictions: Sequence[int] | torch.Tensor,
    targets: Sequence[int] | torch.Tensor,
    classes: Sequence[int],
) -> float:
    """Mean over *classes* of per-class accuracy; classes without samples are skipped."""
    predictions = torch.as_tensor(predictions).flatten()
    targets = torch.as_tensor(targets).flatten()
    if predictions.shape != targets.shape:
        raise MetricsError("predictions and targets differ in length")
    per_class: list[float] = []
    for cls in classes:
        mask = targets == cls
        count = int(mask.sum())
        if count:
            per_class.append(int((predictions[mask] == cls).sum()) / count)
    if not per_class:
        raise MetricsError("no test samples for any class of the task")
    return sum(per_class) / len(per_class)


Predictor = Callable[[torch.Tensor], torch.Tensor]


@torch.inference_mode()
def evaluate_predictor(
    predict: Predictor,
    tasks: Sequence[TaskData],
    *,
    batch_size: int = 512,
    device: torch.device | str = "cpu",
) -> list[float]:
    """Macro accuracy of *predict* on each task's held-out split, no task labels given."""
    row: list[float] = []
    for task in tasks:
        test_set = task.test_set()
        if len(test_set) == 0:
            raise MetricsError(f"task {task.task_index} has an empty test split")
        predictions: list[torch.Tensor] = []
        targets: list[torch.Tensor] = []
        for images, labels, _ in DataLoader(test_set, batch_size=batch_size, shuffle=False):
            predictions.append(predict(images.to(device)).cpu())
            targets.append(torch.as_tensor(labels))
        row.append(macro_accuracy(torch.cat(predictions), torch.cat(targets), task.classes))
    return row


def evaluate_model(
    state, tasks: Sequence[TaskData], *, batch_size: int = 512
) -> list[float]:
    """Accuracy row of *state* over *tasks* using the single all-class head."""
    was_training = state.f_current.training
    state.eval()

    def predict(images: torch.Tensor) -> torch.Tensor:
        features = state.f_current(images).features
        return state.classifier(features).argmax(dim=1)

    try:
        return evaluate_predictor(predict, tasks, batch_size=batch_size, device=state.device)
    finally:
        if was_training:
            state.train()


def _summarize(values: list[float]) -> MetricSummary:
    array = np.asarray(values, dtype=np.float64)
    return MetricSummary(mean=float(array.mean()), std=float(array.std(ddof=0)), count=len(values))


def summarize_reports(reports: Sequence[MetricsReport]) -> MetricsSummary:
    """Mean and population std of every metric across seeds."""
    if not reports:
        raise MetricsError("nothing to summarize")

    def optional(field: str) -> MetricSummary | None:
        values = [getattr(r, field) for r in reports]
        if any(v is None for v in values):
            return None
        return _summarize(values)

    return MetricsSummary(
        final_accuracy=_summarize([r.final_accuracy for r in reports]),
        continual_accuracy=_summarize([r.continual_accuracy for r in reports]),
        forgetting=optional("forgetting"),
        forward_transfer=optional("forward_transfer"),
    )


def _cell(summary: MetricSummary | None, digits: int) -> str:
    if summary is None:
        return "-"
    if summary.count > 1:
        return f"{summary.mean:.{digits}f} ± {summary.std:.{digits}f}"
    return f"{summary.mean:.{digits}f}"


def render_table(entries: Sequence[TableEntry], *, digits: int = 3) -> str:
    """Plain-text table: one row per strategy and SSL method, columns FA, CA, F, FT."""
    header = ["Strategy", "SSL", *(name for name, _ in METRIC_COLUMNS)]
    body = [
        [
            entry.strategy,
            entry.ssl_kind,
            *(_cell(getattr(entry.summary, field), digits) for _, field in METRIC_COLUMNS),
        ]
        for entry in entries
    ]
    widths = [max(len(row[i]) for row in [header, *body]) for i in range(len(header))]

    def line(cells: list[str]) -> str:
        return " | ".join(cell.ljust(width) for cell, width in zip(cells, widths)).rstrip()

    separator = "-+-".join("-" * width for width in widths)
    return "\n".join([line(header), separator, *(line(row) for row in body)]) + "\n"
