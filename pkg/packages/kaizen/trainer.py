"""Joint continual training and the two comparison strategies.

``kaizen`` trains the extractor and the classifier together with four loss
terms: distillation of the extractor (kd_fe) and of the classifier (kd_c)
from the frozen previous-task snapshot, supervised cross-entropy on the
labelled rows (ct_c) and the current-task SSL loss (ct_fe). Replayed samples
join every pretraining batch.

``cassle`` distils only the extractor; ``no_distill`` uses the SSL loss
alone. Both fit their classifier post hoc on a frozen extractor, using the
current task's labels plus the replay buffer.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Any

import torch
import torch.nn.functional as F
from torch import nn
from torch.optim import SGD, Optimizer
from torch.optim.lr_scheduler import LRScheduler
from torch.utils.data import ConcatDataset, DataLoader

from .augmentations import ViewPair, augment_batch, augment_single
from .contracts.experiment import ArchitectureSpec, SSLConfig, StrategyConfig
from .contracts.metrics import AccuracyMatrix
from .contracts.replay import ReplaySnapshot
from .contracts.training import LOSS_TERMS, LossBreakdown, StepRecord
from .errors import TrainingDivergedError, TrainingError
from .eval_metrics import evaluate_model
from .logging import get_logger
from .model_zoo import (
    ModelState,
    ema_update,
    forward_paths,
    init_model,
    load_checkpoint,
    save_checkpoint,
    snapshot_previous,
)
from .optim import build_optimizer, build_scheduler, current_lr
from .replay_buffer import ReplayBuffer
from .seeding import (
    STREAM_AUGMENT,
    STREAM_INIT,
    STREAM_POSTHOC,
    STREAM_SHUFFLE,
    derive_seed,
    torch_generator,
)
from .ssl_objectives import SSLObjective
from .task_stream import SampleBatch, TaskData, TaskStream

logger = get_logger(__name__)

CHECKPOINT_PATTERN = "task_{:03d}.pt"
REPLAY_INDEX_FILE = "replay_buffer.json"


def resolve_device(name: str) -> torch.device:
    if name == "auto":
        if torch.cuda.is_available():
            return torch.device("cuda")
        if getattr(torch.backends, "mps", None) is not None and torch.backends.mps.is_available():
            return torch.device("mps")
        return torch.device("cpu")
    return torch.device(name)


def soft_cross_entropy(logits: torch.Tensor, target_logits: torch.Tensor, temperature: float = 1.0) -> torch.Tensor:
    """Cross-entropy against the softmax of the frozen logits, averaged over all rows."""
    soft_targets = F.softmax(target_logits.detach() / temperature, dim=1)
    return F.cross_entropy(logits / temperature, soft_targets)


def masked_cross_entropy(logits: torch.Tensor, targets: torch.Tensor) -> torch.Tensor:
    """Cross-entropy over rows with a label (target >= 0); zero when none has one."""
    mask = targets >= 0
    if not bool(mask.any()):
        return logits.sum() * 0.0
    return F.cross_entropy(logits[mask], targets[mask])


class LossLog:
    """Append-only JSON-lines loss log."""

    def __init__(self, path: Path | None):
        self.path = Path(path) if path is not None else None
        self.records = 0
        if self.path is not None:
            self.path.parent.mkdir(parents=True, exist_ok=True)
            if self.path.exists():
                self.records = sum(1 for line in self.path.read_text(encoding="utf-8").splitlines() if line)

    def write(self, record: StepRecord) -> None:
        self.records += 1
        if self.path is None:
            return
        with self.path.open("a", encoding="utf-8") as handle:
            handle.write(record.model_dump_json() + "\n")

    def truncate(self, records: int) -> None:
        """Keep the first *records* lines, dropping any written after a checkpoint."""
        if self.path is None or not self.path.exists():
            self.records = min(self.records, records)
            return
        lines = [line for line in self.path.read_text(encoding="utf-8").splitlines() if line]
        kept = lines[:records]
        self.path.write_text("".join(f"{line}\n" for line in kept), encoding="utf-8")
        self.records = len(kept)


@dataclass
class TaskSchedule:
    """Optimizer state of one task's pretraining."""

    optimizer: Optimizer
    scheduler: LRScheduler
    total_steps: int
    step: int = 0


class ContinualTrainer:
    """Runs one strategy over a task stream for one seed."""

    def __init__(
        self,
        strategy: StrategyConfig,
        ssl: SSLConfig,
        architecture: ArchitectureSpec,
        *,
        seed: int = 0,
        replay_fraction: float = 0.01,
        device: torch.device | str = "cpu",
        num_workers: int = 0,
        loss_log: Path | None = None,
        checkpoint_dir: Path | None = None,
    ):
        if strategy.epochs_per_task is None:
            raise TrainingError("epochs_per_task must be resolved before training")
        self.strategy = strategy
        self.ssl = ssl
        self.architecture = architecture
        self.seed = seed
        self.replay_fraction = replay_fraction
        self.device = torch.device(device)
        self.num_workers = num_workers
        self.loss_log = LossLog(loss_log)
        self.checkpoint_dir = Path(checkpoint_dir) if checkpoint_dir is not None else None

    # -- construction -------------------------------------------------------

    def new_objective(self) -> SSLObjective:
        return SSLObjective.from_config(self.ssl)

    def new_buffer(self, fraction: float | None = None) -> ReplayBuffer:
        return ReplayBuffer(
            self.replay_fraction if fraction is None else fraction,
            min_per_batch=self.strategy.min_replay_per_batch,
            seed=self.seed,
        )

    def new_state(self, task_index: int = 1, num_classes: int | None = None) -> ModelState:
        state = init_model(
            self.architecture,
            self.ssl.kind,
            derive_seed(self.seed, STREAM_INIT, task_index),
            num_classes=num_classes,
        )
        return state.to(self.device)

    def _schedule(self, state: ModelState, total_steps: int) -> TaskSchedule:
        optimizer_config = self.strategy.optimizer
        groups: list[dict[str, Any]] = [
            {"params": [p for m in (state.f_current, state.h_kd, state.h_ssl) for p in m.parameters()]}
        ]
        if self.strategy.trains_classifier_jointly:
            group: dict[str, Any] = {"params": list(state.classifier.parameters())}
            if optimizer_config.classifier_lr is not None:
                group["lr"] = optimizer_config.classifier_lr
            groups.append(group)
        optimizer = build_optimizer(groups, optimizer_config)
        return TaskSchedule(optimizer, build_scheduler(optimizer, optimizer_config, total_steps), total_steps)

    # -- one step -----------------------------------------------------------

    def compute_losses(
        self,
        state: ModelState,
        pair: ViewPair,
        targets: torch.Tensor,
        objective: SSLObjective,
    ) -> tuple[dict[str, torch.Tensor], Any]:
        """The four loss terms (zero where the strategy or task disables them)."""
        strategy = self.strategy.strategy
        if state.task_index > 1 and (state.prev_f is None or state.prev_g is None):
            raise TrainingError(
                f"task {state.task_index} needs the frozen previous-task snapshot"
            )
        paths = forward_paths(state, pair, self.strategy.classifier_input)
        zero = paths.z_o.new_zeros(())
        losses = {term: zero for term in LOSS_TERMS}
        distill = state.task_index > 1
        if distill and strategy in ("kaizen", "cassle"):
            losses["kd_fe"] = objective.ssl_loss(paths.p_kd, paths.z_p, "distill")
        if distill and strategy == "kaizen":
            losses["kd_c"] = soft_cross_entropy(paths.c_t, paths.c_p, self.strategy.kd_temperature)
        if strategy == "kaizen":
            losses["ct_c"] = masked_cross_entropy(paths.c_t, targets)
        losses["ct_fe"] = objective.ssl_loss(paths.p_ssl, paths.z_t, "current")
        return losses, paths

    def train_step(
        self,
        state: ModelState,
        pair: ViewPair,
        targets: torch.Tensor,
        objective: SSLObjective,
        schedule: TaskSchedule,
    ) -> tuple[ModelState, LossBreakdown]:
        """One optimizer update on the weighted joint loss, then EMA and queue updates."""
        weights = self.strategy.weights
        losses, paths = self.compute_losses(state, pair, targets, objective)
        total = sum(getattr(weights, term) * losses[term] for term in LOSS_TERMS)
        values = {term: float(losses[term].detach()) for term in LOSS_TERMS}
        if not math.isfinite(float(total.detach())) or not all(math.isfinite(v) for v in values.values()):
            raise TrainingDivergedError(
                f"non-finite loss at task {state.task_index}, step {schedule.step}",
                details={
                    "task": state.task_index,
                    "step": schedule.step,
                    "lr": current_lr(schedule.optimizer),
                    "components": {k: repr(v) for k, v in values.items()},
                    "batch": len(targets),
                },
            )

        schedule.optimizer.zero_grad(set_to_none=True)
        total.backward()
        schedule.optimizer.step()
        schedule.scheduler.step()
        schedule.step += 1

        if state.f_momentum is not None:
            ema_update(state, objective.momentum_at(schedule.step, schedule.total_steps))
        if objective.uses_queue:
            objective.queue_update(paths.z_t, "current")
            if paths.z_p is not None:
                objective.queue_update(paths.z_p, "distill")
        return state, LossBreakdown.from_components(weights, **values)

    # -- one task -----------------------------------------------------------

    def _loader(self, dataset, batch_size: int, generator: torch.Generator) -> DataLoader:
        return DataLoader(
            dataset,
            batch_size=batch_size,
            shuffle=True,
            generator=generator,
            num_workers=self.num_workers,
        )

    def train_task(
        self,
        state: ModelState,
        task: TaskData,
        buffer: ReplayBuffer,
        objective: SSLObjective,
    ) -> ModelState:
        """``epochs_per_task`` passes over *task*, replay-mixed for kaizen."""
        epochs = int(self.strategy.epochs_per_task or 0)
        if epochs == 0:
            logger.info("task %d skipped | epochs=0", task.task_index)
            return state

        batch_size = self.strategy.batch_size
        use_replay = self.strategy.replays_during_pretraining and not buffer.is_empty()
        load_size = buffer.current_slots(batch_size) if use_replay else batch_size
        loader = self._loader(
            task.training_set(), load_size, torch_generator(self.seed, STREAM_SHUFFLE, task.task_index)
        )
        augment_generator = torch_generator(self.seed, STREAM_AUGMENT, task.task_index)
        policy = self.ssl.augmentation
        schedule = self._schedule(state, epochs * len(loader))
        state.train()
        logger.info(
            "task %d started | strategy=%s epochs=%d steps=%d replay=%s",
            task.task_index,
            self.strategy.strategy,
            epochs,
            schedule.total_steps,
            len(buffer) if use_replay else 0,
        )

        for epoch in range(epochs):
            sums = dict.fromkeys((*LOSS_TERMS, "total"), 0.0)
            steps = 0
            for raw in loader:
                batch = SampleBatch.from_loader(raw)
                if use_replay:
                    batch = buffer.mix_batch(batch, batch_size)
                if len(batch) < 2:
                    # a lone trailing sample cannot feed batch statistics
                    continue
                pair = augment_batch(batch.images, augment_generator, policy, batch.indices)
                state, breakdown = self.train_step(
                    state, pair.to(self.device), batch.targets.to(self.device), objective, schedule
                )
                self.loss_log.write(
                    StepRecord.from_breakdown(
                        breakdown,
                        task=task.task_index,
                        epoch=epoch,
                        step=schedule.step,
                        lr=current_lr(schedule.optimizer),
                    )
                )
                for term, value in breakdown.components().items():
                    sums[term] += value
                sums["total"] += breakdown.total
                steps += 1
            if steps:
                logger.info(
                    "epoch done | task=%d epoch=%d total=%.4f kd_fe=%.4f kd_c=%.4f ct_c=%.4f ct_fe=%.4f",
                    task.task_index,
                    epoch + 1,
                    *(sums[k] / steps for k in ("total", *LOSS_TERMS)),
                )
        return state

    # -- post-hoc classifier ------------------------------------------------

    def fit_classifier_posthoc(
        self, state: ModelState, task: TaskData, buffer: ReplayBuffer
    ) -> ModelState:
        """Train only the classifier on a frozen extractor, current labels plus replay."""
        if self.strategy.trains_classifier_jointly:
            raise TrainingError("post-hoc classifier fitting is for the baseline strategies")
        labelled = task.labelled()
        if len(labelled) == 0:
            raise TrainingError(f"task {task.task_index} has no labelled samples")
        dataset = ConcatDataset([labelled, buffer.dataset()]) if len(buffer) else labelled
        loader = self._loader(
            dataset,
            self.strategy.posthoc_batch_size,
            torch_generator(self.seed, STREAM_POSTHOC, task.task_index),
        )
        augment_generator = torch_generator(self.seed, STREAM_POSTHOC, task.task_index, 1)
        total_steps = self.strategy.posthoc_epochs * len(loader)
        optimizer = SGD(
            state.classifier.parameters(),
            lr=self.strategy.posthoc_lr,
            momentum=self.strategy.optimizer.momentum,
        )
        scheduler = build_scheduler(optimizer, self.strategy.optimizer, total_steps)

        state.f_current.eval()
        state.classifier.train()
        policy = self.ssl.augmentation
        for _ in range(self.strategy.posthoc_epochs):
            for images, targets, _ in loader:
                views = augment_single(images, augment_generator, policy).to(self.device)
                with torch.no_grad():
                    features = state.f_current(views).features
                classifier_step(state.classifier, optimizer, features, torch.as_tensor(targets).to(self.device))
                scheduler.step()
        logger.info(
            "classifier fitted | task=%d samples=%d replayed=%d",
            task.task_index,
            len(dataset),
            len(buffer),
        )
        return state

    # -- whole stream -------------------------------------------------------

    def _checkpoint_path(self, task_index: int) -> Path | None:
        if self.checkpoint_dir is None:
            return None
        return self.checkpoint_dir / CHECKPOINT_PATTERN.format(task_index)

    def latest_checkpoint(self, num_tasks: int) -> tuple[int, Path] | None:
        for task_index in range(num_tasks, 0, -1):
            path = self._checkpoint_path(task_index)
            if path is not None and path.exists():
                return task_index, path
        return None

    def _save(self, state: ModelState, task: TaskData, matrix: AccuracyMatrix, buffer: ReplayBuffer, objective: SSLObjective) -> None:
        path = self._checkpoint_path(task.task_index)
        if path is None:
            return
        save_checkpoint(
            path,
            state,
            extra={
                "completed_task": task.task_index,
                "rows": matrix.rows,
                "buffer": buffer.snapshot().model_dump(mode="json"),
                "objective": objective.state_dict(),
                "log_records": self.loss_log.records,
            },
        )
        buffer.save(self.checkpoint_dir / REPLAY_INDEX_FILE)

    def run_continual(self, stream: TaskStream, *, resume: bool = False) -> AccuracyMatrix:
        """Train on the tasks in order, evaluating every seen task after each one."""
        num_classes = stream.partition.num_classes
        matrix = AccuracyMatrix(num_tasks=stream.num_tasks)
        buffer = self.new_buffer()
        objective = self.new_objective()
        state: ModelState | None = None
        start = 1

        found = self.latest_checkpoint(stream.num_tasks) if resume else None
        if found is not None:
            completed, path = found
            state, extra = load_checkpoint(path)
            state.to(self.device)
            matrix = AccuracyMatrix(num_tasks=stream.num_tasks, rows=extra["rows"])
            buffer = ReplayBuffer.from_snapshot(
                ReplaySnapshot.model_validate(extra["buffer"]), stream.tasks[0].dataset.train
            )
            objective.load_state_dict(extra["objective"])
            objective.to(self.device)
            self.loss_log.truncate(int(extra.get("log_records", 0)))
            start = completed + 1
            logger.info("resumed from checkpoint | completed_task=%d", completed)

        for task in stream.tasks[start - 1 :]:
            if state is None:
                state = self.new_state(task.task_index, num_classes)
            state = self.train_task(state, task, buffer, objective)
            if not self.strategy.trains_classifier_jointly:
                state = self.fit_classifier_posthoc(state, task, buffer)
            row = evaluate_model(
                state, stream.seen(task.task_index), batch_size=self.strategy.eval_batch_size
            )
            matrix = matrix.with_row(row)
            logger.info(
                "evaluated | after_task=%d row=%s",
                task.task_index,
                json.dumps([round(v, 4) for v in row]),
            )
            state = snapshot_previous(state)
            buffer.update(task)
            self._save(state, task, matrix, buffer, objective)
        return matrix

    def run_single_task_baselines(self, stream: TaskStream) -> list[float]:
        """A'_{k,k}: a fresh model trained on task k alone, without replay or distillation."""
        values: list[float] = []
        quiet = LossLog(None)
        log, self.loss_log = self.loss_log, quiet
        try:
            for task in stream.tasks:
                state = self.new_state(task.task_index, stream.partition.num_classes)
                buffer = self.new_buffer(fraction=0.0)
                state = self.train_task(state, task, buffer, self.new_objective())
                if not self.strategy.trains_classifier_jointly:
                    state = self.fit_classifier_posthoc(state, task, buffer)
                (accuracy,) = evaluate_model(state, [task], batch_size=self.strategy.eval_batch_size)
                values.append(accuracy)
                logger.info("single-task baseline | task=%d accuracy=%.4f", task.task_index, accuracy)
        finally:
            self.loss_log = log
        return values


def classifier_step(
    classifier: nn.Module, optimizer: Optimizer, features: torch.Tensor, targets: torch.Tensor
) -> float:
    """One supervised update of *classifier* on fixed *features*."""
    logits = classifier(features)
    loss = F.cross_entropy(logits, targets)
    optimizer.zero_grad(set_to_none=True)
    loss.backward()
    optimizer.step()
    return float(loss.detach())

