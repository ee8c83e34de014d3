"""Class-incremental task streams.

A :class:`TaskStream` is built from a labelled image dataset and a seeded
:class:`ClassPartition`. Each task exposes all of its training samples as
unlabelled data, a class-stratified labelled subset, and a held-out test
portion taken from the dataset's canonical test split. Nothing here carries a
task label into evaluation.
"""

from __future__ import annotations

import csv
import math
from collections import defaultdict
from collections.abc import Iterator, Mapping, Sequence
from dataclasses import dataclass, field
from pathlib import Path
from typing import Protocol

import numpy as np
import torch
from torch.utils.data import Dataset
from torchvision import datasets as tv_datasets
from torchvision.io import ImageReadMode, read_image
from torchvision.transforms.v2 import functional as TF

from .contracts.experiment import DatasetConfig
from .contracts.stream import ClassPartition
from .errors import DataError, StreamError
from .logging import get_logger
from .seeding import STREAM_LABELLED, numpy_rng, torch_generator

logger = get_logger(__name__)

UNLABELLED = -1
LABEL_INDEX_FILE = "labels.csv"


class ImageDataset(Protocol):
    """Random-access labelled images, loaded as float tensors in [0, 1]."""

    targets: Sequence[int]

    def __len__(self) -> int: ...

    def load(self, index: int) -> torch.Tensor: ...


class TensorImageDataset:
    """In-memory uint8 images of shape (N, C, H, W)."""

    def __init__(self, images: torch.Tensor, targets: Sequence[int]):
        if images.ndim != 4 or images.shape[0] != len(targets):
            raise DataError(
                "images must be (N, C, H, W) with one target per image",
                details={"shape": list(images.shape), "targets": len(targets)},
            )
        self.images = images
        self.targets = [int(t) for t in targets]

    def __len__(self) -> int:
        return len(self.targets)

    def load(self, index: int) -> torch.Tensor:
        image = self.images[index]
        if image.dtype == torch.uint8:
            return image.float().div_(255.0)
        return image.float()

    def subset(self, indices: Sequence[int]) -> TensorImageDataset:
        index_tensor = torch.as_tensor(list(indices), dtype=torch.long)
        return TensorImageDataset(self.images[index_tensor], [self.targets[i] for i in indices])


class FileImageDataset:
    """Images read lazily from disk and resized to a square resolution."""

    def __init__(self, paths: Sequence[Path], targets: Sequence[int], image_size: int):
        if len(paths) != len(targets):
            raise DataError("every image path needs exactly one target")
        self.paths = [Path(p) for p in paths]
        self.targets = [int(t) for t in targets]
        self.image_size = image_size

    def __len__(self) -> int:
        return len(self.targets)

    def load(self, index: int) -> torch.Tensor:
        image = read_image(str(self.paths[index]), mode=ImageReadMode.RGB)
        image = TF.resize(image, [self.image_size, self.image_size], antialias=True)
        return image.float().div_(255.0)

    def subset(self, indices: Sequence[int]) -> FileImageDataset:
        return FileImageDataset(
            [self.paths[i] for i in indices], [self.targets[i] for i in indices], self.image_size
        )


@dataclass(frozen=True)
class DatasetSplits:
    """Canonical train/test splits of one labelled dataset."""

    name: str
    num_classes: int
    train: ImageDataset
    test: ImageDataset


def round_half_up(value: float) -> int:
    return int(math.floor(value + 0.5))


def stratified_quota(
    class_counts: Mapping[int, int], fraction: float, *, min_per_class: int = 0
) -> dict[int, int]:
    """Split ``round(fraction * total)`` across classes by largest remainder.

    Ties go to the smaller class id. With ``min_per_class`` every class is
    lifted to that floor, taking the excess from the largest allocations.
    """
    classes = sorted(class_counts)
    total_size = sum(class_counts.values())
    budget = round_half_up(fraction * total_size)
    raw = {c: fraction * class_counts[c] for c in classes}
    quota = {c: min(class_counts[c], math.floor(raw[c])) for c in classes}
    by_remainder = sorted(classes, key=lambda c: (-(raw[c] - math.floor(raw[c])), c))
    remaining = budget - sum(quota.values())
    for c in by_remainder:
        if remaining <= 0:
            break
        if quota[c] < class_counts[c]:
            quota[c] += 1
            remaining -= 1

    if min_per_class:
        if budget < min_per_class * len(classes):
            raise StreamError(
                f"a budget of {budget} samples cannot give {min_per_class} per class "
                f"to {len(classes)} classes",
                details={"fraction": fraction, "total": total_size},
            )
        for c in classes:
            while quota[c] < min(min_per_class, class_counts[c]):
                donor = max(classes, key=lambda d: (quota[d], -d))
                quota[donor] -= 1
                quota[c] += 1
    return quota


def select_stratified(
    indices_by_class: Mapping[int, Sequence[int]],
    quota: Mapping[int, int],
    rng: np.random.Generator,
) -> tuple[int, ...]:
    """Draw ``quota[c]`` indices per class without replacement; sorted output."""
    chosen: list[int] = []
    for cls in sorted(indices_by_class):
        pool = np.asarray(sorted(indices_by_class[cls]), dtype=np.int64)
        take = quota.get(cls, 0)
        if take:
            chosen.extend(int(i) for i in pool[rng.permutation(len(pool))[:take]])
    return tuple(sorted(chosen))


def _group_by_class(targets: Sequence[int], indices: Sequence[int]) -> dict[int, list[int]]:
    grouped: dict[int, list[int]] = defaultdict(list)
    for index in indices:
        grouped[targets[index]].append(index)
    return dict(grouped)


class IndexedView(Dataset):
    """Torch view yielding ``(image, target, sample_index)`` triples."""

    def __init__(self, source: ImageDataset, indices: Sequence[int], targets: Sequence[int]):
        self.source = source
        self.indices = list(indices)
        self.targets = list(targets)

    def __len__(self) -> int:
        return len(self.indices)

    def __getitem__(self, position: int) -> tuple[torch.Tensor, int, int]:
        index = self.indices[position]
        return self.source.load(index), self.targets[position], index


@dataclass(frozen=True)
class TaskData:
    """One task of the stream.

    ``train_indices`` is the unlabelled portion (every training sample of the
    task's classes); ``labelled_indices`` the labelled subset of it;
    ``test_indices`` index the canonical test split.
    """

    task_index: int
    classes: tuple[int, ...]
    train_indices: tuple[int, ...]
    labelled_indices: tuple[int, ...]
    test_indices: tuple[int, ...]
    label_fraction: float
    dataset: DatasetSplits = field(repr=False, compare=False)

    @property
    def size(self) -> int:
        return len(self.train_indices)

    def class_of(self, train_index: int) -> int:
        return self.dataset.train.targets[train_index]

    def unlabelled(self) -> Dataset:
        """All training samples; targets are :data:`UNLABELLED`."""
        return IndexedView(self.dataset.train, self.train_indices, [UNLABELLED] * self.size)

    def training_set(self) -> Dataset:
        """All training samples; labelled rows carry their class, others ``-1``."""
        labelled = set(self.labelled_indices)
        targets = [self.class_of(i) if i in labelled else UNLABELLED for i in self.train_indices]
        return IndexedView(self.dataset.train, self.train_indices, targets)

    def labelled(self) -> Dataset:
        targets = [self.class_of(i) for i in self.labelled_indices]
        return IndexedView(self.dataset.train, self.labelled_indices, targets)

    def test_set(self) -> Dataset:
        targets = [self.dataset.test.targets[i] for i in self.test_indices]
        return IndexedView(self.dataset.test, self.test_indices, targets)


@dataclass(frozen=True)
class TaskStream:
    """Ordered tasks with pairwise-disjoint class sets."""

    tasks: tuple[TaskData, ...]
    partition: ClassPartition

    def __iter__(self) -> Iterator[TaskData]:
        return iter(self.tasks)

    def __len__(self) -> int:
        return len(self.tasks)

    @property
    def num_tasks(self) -> int:
        return len(self.tasks)

    def task(self, task_index: int) -> TaskData:
        return self.tasks[task_index - 1]

    def seen(self, task_index: int) -> tuple[TaskData, ...]:
        """Tasks 1..task_index."""
        return self.tasks[:task_index]


@dataclass
class SampleBatch:
    """A batch of raw (un-augmented) images with optional labels."""

    images: torch.Tensor
    targets: torch.Tensor
    indices: torch.Tensor
    replay_mask: torch.Tensor

    def __len__(self) -> int:
        return int(self.targets.shape[0])

    @classmethod
    def from_loader(cls, batch: Sequence[torch.Tensor]) -> SampleBatch:
        images, targets, indices = batch
        return cls(
            images=images,
            targets=torch.as_tensor(targets, dtype=torch.long),
            indices=torch.as_tensor(indices, dtype=torch.long),
            replay_mask=torch.zeros(len(targets), dtype=torch.bool),
        )

    def head(self, count: int) -> SampleBatch:
        return SampleBatch(
            self.images[:count], self.targets[:count], self.indices[:count], self.replay_mask[:count]
        )

    @staticmethod
    def concat(first: SampleBatch, second: SampleBatch) -> SampleBatch:
        return SampleBatch(
            images=torch.cat([first.images, second.images]),
            targets=torch.cat([first.targets, second.targets]),
            indices=torch.cat([first.indices, second.indices]),
            replay_mask=torch.cat([first.replay_mask, second.replay_mask]),
        )


def split_classes(num_classes: int, num_tasks: int, seed: int) -> ClassPartition:
    """Randomly assign classes to ``num_tasks`` equally sized tasks."""
    if num_tasks < 1:
        raise StreamError("num_tasks must be at least 1", details={"num_tasks": num_tasks})
    if num_tasks > num_classes:
        raise StreamError(
            f"cannot split {num_classes} classes into {num_tasks} tasks",
            details={"num_classes": num_classes, "num_tasks": num_tasks},
        )
    if num_classes % num_tasks:
        raise StreamError(
            f"{num_classes} classes do not split equally into {num_tasks} tasks "
            f"({num_classes % num_tasks} left over); choose a divisor of {num_classes}",
            details={"num_classes": num_classes, "num_tasks": num_tasks},
        )
    per_task = num_classes // num_tasks
    order = np.random.default_rng(seed).permutation(num_classes)
    assignment = {int(cls): position // per_task + 1 for position, cls in enumerate(order)}
    return ClassPartition(
        seed=seed,
        num_tasks=num_tasks,
        num_classes=num_classes,
        assignment=dict(sorted(assignment.items())),
    )


def build_stream(
    dataset: DatasetSplits, partition: ClassPartition, label_fraction: float, seed: int
) -> TaskStream:
    """Materialise the per-task unlabelled, labelled and test portions."""
    if not 0.0 < label_fraction <= 1.0:
        raise StreamError(f"label_fraction must lie in (0, 1], got {label_fraction}")
    expected = set(range(partition.num_classes))
    for split_name, split in (("train", dataset.train), ("test", dataset.test)):
        present = set(split.targets)
        missing = sorted(expected - present)
        if missing:
            raise StreamError(
                f"{dataset.name} {split_name} split lacks classes {missing[:10]}",
                details={"split": split_name, "missing": missing},
            )
        extra = sorted(present - expected)
        if extra:
            raise StreamError(
                f"{dataset.name} {split_name} split has labels outside [0, {partition.num_classes})",
                details={"split": split_name, "unexpected": extra[:10]},
            )

    train_targets = dataset.train.targets
    test_targets = dataset.test.targets
    tasks: list[TaskData] = []
    for task_index in range(1, partition.num_tasks + 1):
        classes = partition.classes_for(task_index)
        class_set = set(classes)
        train_indices = tuple(i for i, t in enumerate(train_targets) if t in class_set)
        test_indices = tuple(i for i, t in enumerate(test_targets) if t in class_set)
        if not train_indices or not test_indices:
            raise StreamError(
                f"task {task_index} is empty",
                details={"train": len(train_indices), "test": len(test_indices)},
            )
        by_class = _group_by_class(train_targets, train_indices)
        quota = stratified_quota(
            {c: len(v) for c, v in by_class.items()}, label_fraction, min_per_class=1
        )
        labelled = select_stratified(by_class, quota, numpy_rng(seed, STREAM_LABELLED, task_index))
        tasks.append(
            TaskData(
                task_index=task_index,
                classes=classes,
                train_indices=train_indices,
                labelled_indices=labelled,
                test_indices=test_indices,
                label_fraction=label_fraction,
                dataset=dataset,
            )
        )
        logger.debug(
            "task built | task=%d classes=%d train=%d labelled=%d test=%d",
            task_index,
            len(classes),
            len(train_indices),
            len(labelled),
            len(test_indices),
        )
    return TaskStream(tasks=tuple(tasks), partition=partition)


def make_synthetic_dataset(
    num_classes: int,
    train_per_class: int,
    test_per_class: int,
    image_size: int = 32,
    seed: int = 0,
) -> DatasetSplits:
    """Seeded class-patterned images: a per-class colour plus an oriented grating."""
    generator = torch_generator(seed, num_classes, image_size)
    colors = 0.2 + 0.6 * torch.rand(num_classes, 3, 1, 1, generator=generator)
    angles = torch.rand(num_classes, generator=generator) * math.pi
    frequencies = 1.0 + 3.0 * torch.rand(num_classes, generator=generator)
    axis = torch.linspace(0.0, 2.0 * math.pi, image_size)
    yy, xx = torch.meshgrid(axis, axis, indexing="ij")

    def _split(per_class: int) -> TensorImageDataset:
        images, targets = [], []
        for cls in range(num_classes):
            phase = xx * torch.cos(angles[cls]) + yy * torch.sin(angles[cls])
            grating = torch.sin(frequencies[cls] * phase).expand(3, -1, -1)
            noise = torch.randn(per_class, 3, image_size, image_size, generator=generator)
            batch = (0.6 * colors[cls] + 0.25 * grating + 0.08 * noise).clamp_(0.0, 1.0)
            images.append((batch * 255.0).round_().to(torch.uint8))
            targets.extend([cls] * per_class)
        return TensorImageDataset(torch.cat(images), targets)

    train = _split(train_per_class)
    test = _split(test_per_class)
    return DatasetSplits(name="synthetic", num_classes=num_classes, train=train, test=test)


def _cap_per_class(dataset, limit: int | None):
    if limit is None:
        return dataset
    kept: list[int] = []
    counts: dict[int, int] = defaultdict(int)
    for index, target in enumerate(dataset.targets):
        if counts[target] < limit:
            counts[target] += 1
            kept.append(index)
    return dataset.subset(kept)


def _load_torchvision_cifar(config: DatasetConfig, root: Path) -> DatasetSplits:
    factory = tv_datasets.CIFAR10 if config.id == "cifar10" else tv_datasets.CIFAR100
    try:
        splits = [factory(str(root), train=flag, download=config.download) for flag in (True, False)]
    except RuntimeError as exc:
        raise DataError(
            f"{config.id} not found under {root}; set dataset.download or KAIZEN_DATASET_ROOT",
            details={"root": str(root)},
        ) from exc
    train, test = (
        TensorImageDataset(torch.from_numpy(s.data).permute(0, 3, 1, 2).contiguous(), s.targets)
        for s in splits
    )
    return DatasetSplits(name=config.id, num_classes=len(splits[0].classes), train=train, test=test)


def _load_image_folder(config: DatasetConfig, root: Path) -> DatasetSplits:
    size = config.resolved_image_size
    parts = []
    for split in ("train", "val"):
        split_root = root / split
        if not split_root.is_dir():
            raise DataError(f"expected an ImageFolder directory at {split_root}")
        folder = tv_datasets.ImageFolder(str(split_root))
        parts.append((folder, FileImageDataset([p for p, _ in folder.samples], folder.targets, size)))
    (train_folder, train), (_, test) = parts
    return DatasetSplits(
        name=config.id, num_classes=len(train_folder.classes), train=train, test=test
    )


def _load_label_index(config: DatasetConfig, root: Path) -> DatasetSplits:
    index_path = root / LABEL_INDEX_FILE
    if not index_path.is_file():
        raise DataError(f"label index {index_path} not found")
    rows: dict[str, tuple[list[Path], list[int]]] = {"train": ([], []), "test": ([], [])}
    with index_path.open(newline="", encoding="utf-8") as handle:
        reader = csv.DictReader(handle)
        if reader.fieldnames is None or not {"path", "label", "split"} <= set(reader.fieldnames):
            raise DataError(f"{index_path} must have columns path,label,split")
        for line_no, record in enumerate(reader, start=2):
            split = record["split"].strip()
            if split not in rows:
                raise DataError(f"{index_path}:{line_no}: split must be train or test")
            rows[split][0].append(root / record["path"].strip())
            rows[split][1].append(int(record["label"]))
    size = config.resolved_image_size
    train = FileImageDataset(*rows["train"], size)
    test = FileImageDataset(*rows["test"], size)
    num_classes = max(set(train.targets) | set(test.targets), default=-1) + 1
    return DatasetSplits(name=root.name or "folder", num_classes=num_classes, train=train, test=test)


def load_dataset(config: DatasetConfig, root: Path) -> DatasetSplits:
    """Load the dataset named by *config*, applying the per-class caps."""
    if config.id == "synthetic":
        splits = make_synthetic_dataset(
            config.synthetic_num_classes,
            config.synthetic_train_per_class,
            config.synthetic_test_per_class,
            image_size=config.resolved_image_size,
        )
    elif config.id in ("cifar10", "cifar100"):
        splits = _load_torchvision_cifar(config, root)
    elif config.id == "imagenet100":
        splits = _load_image_folder(config, root)
    else:
        splits = _load_label_index(config, root)

    train = _cap_per_class(splits.train, config.max_train_per_class)
    test = _cap_per_class(splits.test, config.max_test_per_class)
    logger.info(
        "dataset loaded | name=%s classes=%d train=%d test=%d",
        splits.name,
        splits.num_classes,
        len(train),
        len(test),
    )
    return DatasetSplits(name=splits.name, num_classes=splits.num_classes, train=train, test=test)
