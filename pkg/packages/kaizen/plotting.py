"""Figures from run directories.

Series are built by pure functions over loaded runs; rendering is a thin
matplotlib (Agg) layer on top.
"""

from __future__ import annotations

from collections import defaultdict
from collections.abc import Sequence
from dataclasses import dataclass
from pathlib import Path
from typing import Literal

import matplotlib

matplotlib.use("Agg")
import matplotlib.pyplot as plt  # noqa: E402
import numpy as np  # noqa: E402

from .contracts.metrics import AccuracyMatrix  # noqa: E402
from .errors import ArtifactError  # noqa: E402
from .eval_metrics import METRIC_COLUMNS, build_report, per_task_curves, seen_task_average  # noqa: E402
from .experiment import LoadedRun  # noqa: E402

PlotKind = Literal["average", "per-task", "bars", "replay-ablation"]
PLOT_KINDS: tuple[str, ...] = ("average", "per-task", "bars", "replay-ablation")


@dataclass(frozen=True)
class Series:
    label: str
    x: tuple
    y: tuple[float, ...]
    err: tuple[float, ...]
    group: str = ""


def _mean_std(rows: Sequence[Sequence[float]]) -> tuple[tuple[float, ...], tuple[float, ...]]:
    array = np.asarray(rows, dtype=np.float64)
    return tuple(array.mean(axis=0).tolist()), tuple(array.std(axis=0).tolist())


def _require_matrices(runs: Sequence[LoadedRun]) -> None:
    if not runs:
        raise ArtifactError("no runs given")
    absent = [str(run.run_dir) for run in runs if not run.matrices]
    if absent:
        raise ArtifactError(
            f"{len(absent)} run(s) have no accuracy matrices", details={"absent": absent}
        )
    incomplete = [
        str(run.run_dir) for run in runs if any(not m.is_complete for m in run.matrices.values())
    ]
    if incomplete:
        raise ArtifactError("some runs have incomplete matrices", details={"absent": incomplete})


def _seeds(run: LoadedRun) -> list[AccuracyMatrix]:
    return [run.matrices[s] for s in sorted(run.matrices)]


def average_series(runs: Sequence[LoadedRun]) -> list[Series]:
    """Mean accuracy over seen tasks after each task, one series per run."""
    series = []
    for run in runs:
        matrices = _seeds(run)
        y, err = _mean_std([seen_task_average(m) for m in matrices])
        x = tuple(range(1, matrices[0].num_tasks + 1))
        series.append(Series(label=run.label, x=x, y=y, err=err))
    return series


def per_task_series(runs: Sequence[LoadedRun]) -> list[Series]:
    """For each task k, accuracy on k after tasks t = k..T; grouped by task."""
    series = []
    for run in runs:
        matrices = _seeds(run)
        num_tasks = matrices[0].num_tasks
        curves = [per_task_curves(m) for m in matrices]
        for k in range(1, num_tasks + 1):
            y, err = _mean_std([c[k] for c in curves])
            series.append(
                Series(label=run.label, x=tuple(range(k, num_tasks + 1)), y=y, err=err, group=f"task {k}")
            )
    return series


def bar_series(runs: Sequence[LoadedRun]) -> list[Series]:
    """FA, CA, F (and FT when available) per run."""
    series = []
    for run in runs:
        reports = [build_report(m) for m in _seeds(run)]
        names, rows = [], []
        for name, field in METRIC_COLUMNS:
            values = [getattr(r, field) for r in reports]
            if all(v is not None for v in values):
                names.append(name)
                rows.append(values)
        stats = [_mean_std([[v] for v in values]) for values in rows]
        series.append(
            Series(
                label=run.label,
                x=tuple(names),
                y=tuple(mean[0] for mean, _ in stats),
                err=tuple(std[0] for _, std in stats),
            )
        )
    return series


def replay_ablation_series(runs: Sequence[LoadedRun]) -> list[Series]:
    """Seen-task average per replay fraction, one group per strategy/SSL pair."""
    grouped: dict[tuple[str, float], list[AccuracyMatrix]] = defaultdict(list)
    for run in runs:
        grouped[(run.label, run.config.replay_fraction)].extend(_seeds(run))
    series = []
    for (label, fraction), matrices in sorted(grouped.items()):
        y, err = _mean_std([seen_task_average(m) for m in matrices])
        series.append(
            Series(
                label=f"{fraction:.0%} replay",
                x=tuple(range(1, matrices[0].num_tasks + 1)),
                y=y,
                err=err,
                group=label,
            )
        )
    return series


_BUILDERS = {
    "average": average_series,
    "per-task": per_task_series,
    "bars": bar_series,
    "replay-ablation": replay_ablation_series,
}


def build_series(kind: str, runs: Sequence[LoadedRun]) -> list[Series]:
    if kind not in _BUILDERS:
        raise ArtifactError(f"unknown plot kind {kind!r}", details={"known": list(PLOT_KINDS)})
    _require_matrices(runs)
    return _BUILDERS[kind](runs)


def _line_panels(series: Sequence[Series], title: str, ylabel: str, out: Path) -> None:
    groups = list(dict.fromkeys(s.group for s in series))
    fig, axes = plt.subplots(1, len(groups), figsize=(4.5 * len(groups), 3.5), squeeze=False)
    for ax, group in zip(axes[0], groups):
        for s in (s for s in series if s.group == group):
            y, err = np.asarray(s.y), np.asarray(s.err)
            ax.plot(s.x, y, marker="o", label=s.label)
            ax.fill_between(s.x, y - err, y + err, alpha=0.2)
        ax.set_xlabel("after task")
        ax.set_ylabel(ylabel)
        ax.set_ylim(0.0, 1.0)
        if group:
            ax.set_title(group)
        ax.legend(fontsize="small")
    fig.suptitle(title)
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)


def _bars(series: Sequence[Series], out: Path) -> None:
    metrics = list(dict.fromkeys(name for s in series for name in s.x))
    width = 0.8 / max(1, len(series))
    fig, ax = plt.subplots(figsize=(1.8 * len(metrics) + 2, 3.5))
    positions = np.arange(len(metrics))
    for i, s in enumerate(series):
        values = dict(zip(s.x, s.y))
        errors = dict(zip(s.x, s.err))
        ax.bar(
            positions + i * width,
            [values.get(m, np.nan) for m in metrics],
            width,
            yerr=[errors.get(m, 0.0) for m in metrics],
            label=s.label,
        )
    ax.set_xticks(positions + width * (len(series) - 1) / 2, metrics)
    ax.axhline(0.0, color="black", linewidth=0.5)
    ax.legend(fontsize="small")
    fig.tight_layout()
    fig.savefig(out, dpi=150)
    plt.close(fig)


def render(kind: str, series: Sequence[Series], out: Path) -> Path:
    out = Path(out)
    out.parent.mkdir(parents=True, exist_ok=True)
    if kind == "bars":
        _bars(series, out)
    elif kind == "per-task":
        _line_panels(series, "Accuracy per task", "accuracy", out)
    elif kind == "replay-ablation":
        _line_panels(series, "Replay ablation", "mean accuracy on seen tasks", out)
    else:
        _line_panels(series, "Average accuracy over seen tasks", "accuracy", out)
    return out


def plot_runs(kind: str, runs: Sequence[LoadedRun], out: Path) -> Path:
    return render(kind, build_series(kind, runs), out)
