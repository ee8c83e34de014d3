"""Memory replay of a small labelled subset of past tasks.

Entries are raw-sample references into the training split, so replayed
samples go through the same augmentation path as current ones. The buffer is
appended once per task and cycled fairly: each pass visits every entry once
in a seed-derived order before any entry repeats.
"""

from __future__ import annotations

import json
from collections import defaultdict
from pathlib import Path

import numpy as np
import torch
from torch.utils.data import Dataset

from .contracts.replay import ReplayEntry, ReplaySnapshot
from .errors import ReplayError
from .logging import get_logger
from .seeding import STREAM_REPLAY, numpy_rng
from .task_stream import (
    ImageDataset,
    IndexedView,
    SampleBatch,
    TaskData,
    select_stratified,
    stratified_quota,
)

logger = get_logger(__name__)

# Key of the per-pass ordering stream; offset from the per-task selection keys.
_PASS_KEY = 1_000_000

DEFAULT_MIN_PER_BATCH = 32


class ReplayBuffer:
    """Class-stratified replay memory with cursor cycling."""

    def __init__(
        self,
        fraction: float,
        *,
        min_per_batch: int = DEFAULT_MIN_PER_BATCH,
        seed: int = 0,
        source: ImageDataset | None = None,
    ) -> None:
        if not 0.0 <= fraction <= 1.0:
            raise ReplayError(f"replay fraction must lie in [0, 1], got {fraction}")
        if min_per_batch < 0:
            raise ReplayError("min_per_batch must be non-negative")
        self.fraction = fraction
        self.min_per_batch = min_per_batch
        self.seed = seed
        self.source = source
        self._entries: list[ReplayEntry] = []
        self._ingested: list[int] = []
        self._cursor = 0
        self._passes = 0
        self._order: np.ndarray | None = None

    def __len__(self) -> int:
        return len(self._entries)

    @property
    def entries(self) -> tuple[ReplayEntry, ...]:
        return tuple(self._entries)

    @property
    def ingested_tasks(self) -> tuple[int, ...]:
        return tuple(self._ingested)

    @property
    def cursor(self) -> int:
        return self._cursor

    @property
    def passes(self) -> int:
        return self._passes

    def is_empty(self) -> bool:
        return not self._entries

    def counts_by_class(self) -> dict[int, int]:
        counts: dict[int, int] = defaultdict(int)
        for entry in self._entries:
            counts[entry.class_id] += 1
        return dict(sorted(counts.items()))

    def update(self, task: TaskData) -> ReplayBuffer:
        """Append ``round(fraction * |labelled|)`` class-stratified labelled samples of *task*.

        Only the labelled subset is eligible, so every replayed target is a
        label the stream actually exposed. The cycling restarts on the grown
        buffer with a fresh pass order.
        """
        if task.task_index in self._ingested:
            raise ReplayError(
                f"task {task.task_index} was already ingested",
                details={"ingested": list(self._ingested)},
            )
        if self.source is None:
            self.source = task.dataset.train
        elif self.source is not task.dataset.train:
            raise ReplayError("all ingested tasks must come from the same training split")

        by_class: dict[int, list[int]] = defaultdict(list)
        for index in task.labelled_indices:
            by_class[task.class_of(index)].append(index)
        quota = stratified_quota({c: len(v) for c, v in by_class.items()}, self.fraction)
        chosen = select_stratified(by_class, quota, numpy_rng(self.seed, STREAM_REPLAY, task.task_index))

        self._entries.extend(
            ReplayEntry(sample_index=i, class_id=task.class_of(i), task_index=task.task_index)
            for i in chosen
        )
        self._ingested.append(task.task_index)
        self._order = None
        self._cursor = 0
        logger.info(
            "replay buffer updated | task=%d added=%d size=%d",
            task.task_index,
            len(chosen),
            len(self._entries),
        )
        return self

    def _pass_order(self) -> np.ndarray:
        if self._order is None:
            rng = numpy_rng(self.seed, STREAM_REPLAY, _PASS_KEY, len(self._entries), self._passes)
            self._order = rng.permutation(len(self._entries))
        return self._order

    def draw(self, count: int) -> list[ReplayEntry]:
        """Take *count* entries from the cursor, starting a new pass when exhausted."""
        if count and not self._entries:
            raise ReplayError("cannot draw from an empty replay buffer")
        drawn: list[ReplayEntry] = []
        while len(drawn) < count:
            order = self._pass_order()
            take = min(count - len(drawn), len(order) - self._cursor)
            drawn.extend(self._entries[int(i)] for i in order[self._cursor : self._cursor + take])
            self._cursor += take
            if self._cursor == len(order):
                self._cursor = 0
                self._passes += 1
                self._order = None
        return drawn

    def load_batch(self, entries: list[ReplayEntry]) -> SampleBatch:
        if self.source is None:
            raise ReplayError("replay buffer has no source dataset attached")
        images = torch.stack([self.source.load(e.sample_index) for e in entries])
        return SampleBatch(
            images=images,
            targets=torch.tensor([e.class_id for e in entries], dtype=torch.long),
            indices=torch.tensor([e.sample_index for e in entries], dtype=torch.long),
            replay_mask=torch.ones(len(entries), dtype=torch.bool),
        )

    def current_slots(self, batch_size: int) -> int:
        """How many current-task samples fit next to the minimum replay share."""
        if self.is_empty():
            return batch_size
        self._check_batch_size(batch_size)
        return batch_size - self.min_per_batch

    def _check_batch_size(self, batch_size: int) -> None:
        if batch_size <= self.min_per_batch:
            raise ReplayError(
                f"batch_size={batch_size} must exceed min_per_batch={self.min_per_batch}",
                details={"batch_size": batch_size, "min_per_batch": self.min_per_batch},
            )

    def mix_batch(self, batch: SampleBatch, batch_size: int) -> SampleBatch:
        """Fill *batch* up to exactly ``batch_size`` rows with replayed samples.

        At least ``min_per_batch`` rows are replayed; surplus current rows are
        dropped. An empty buffer returns *batch* unchanged.
        """
        if self.is_empty():
            return batch
        self._check_batch_size(batch_size)
        current = batch.head(min(len(batch), batch_size - self.min_per_batch))
        replayed = self.load_batch(self.draw(batch_size - len(current)))
        return SampleBatch.concat(current, replayed)

    def dataset(self) -> Dataset:
        """Torch view of every entry as ``(image, class_id, sample_index)``."""
        if self.source is None:
            return IndexedView([], [], [])  # type: ignore[arg-type]
        return IndexedView(
            self.source,
            [e.sample_index for e in self._entries],
            [e.class_id for e in self._entries],
        )

    def snapshot(self) -> ReplaySnapshot:
        return ReplaySnapshot(
            seed=self.seed,
            fraction=self.fraction,
            min_per_batch=self.min_per_batch,
            entries=list(self._entries),
            ingested_tasks=list(self._ingested),
            cursor=self._cursor,
            passes=self._passes,
        )

    @classmethod
    def from_snapshot(
        cls, snapshot: ReplaySnapshot, source: ImageDataset | None = None
    ) -> ReplayBuffer:
        buffer = cls(
            snapshot.fraction,
            min_per_batch=snapshot.min_per_batch,
            seed=snapshot.seed,
            source=source,
        )
        buffer._entries = list(snapshot.entries)
        buffer._ingested = list(snapshot.ingested_tasks)
        buffer._cursor = snapshot.cursor
        buffer._passes = snapshot.passes
        return buffer

    def save(self, path: Path) -> Path:
        path = Path(path)
        path.parent.mkdir(parents=True, exist_ok=True)
        path.write_text(json.dumps(self.snapshot().model_dump(mode="json"), indent=2), encoding="utf-8")
        return path

    @classmethod
    def load(cls, path: Path, source: ImageDataset | None = None) -> ReplayBuffer:
        try:
            payload = json.loads(Path(path).read_text(encoding="utf-8"))
            snapshot = ReplaySnapshot.model_validate(payload)
        except (OSError, ValueError) as exc:
            raise ReplayError(f"cannot read replay index {path}: {exc}") from exc
        return cls.from_snapshot(snapshot, source)
