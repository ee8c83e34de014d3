import pytest
import torch
from pydantic import ValidationError
from torchvision.io import write_png

from packages.kaizen.contracts.experiment import DatasetConfig
from packages.kaizen.contracts.stream import ClassPartition
from packages.kaizen.errors import DataError, StreamError
from packages.kaizen.task_stream import (
    UNLABELLED,
    build_stream,
    load_dataset,
    make_synthetic_dataset,
    split_classes,
    stratified_quota,
)


class TestSplitClasses:
    @pytest.mark.parametrize(
        ("num_classes", "num_tasks", "per_task"),
        [(100, 5, 20), (100, 1, 100), (100, 20, 5), (10, 10, 1)],
    )
    def test_equal_disjoint_tasks(self, num_classes, num_tasks, per_task):
        partition = split_classes(num_classes, num_tasks, seed=3)
        groups = [partition.classes_for(t) for t in range(1, num_tasks + 1)]

        assert all(len(group) == per_task for group in groups)
        flattened = [cls for group in groups for cls in group]
        assert sorted(flattened) == list(range(num_classes))
        assert partition.classes_per_task == per_task

    def test_same_seed_same_partition(self):
        assert split_classes(100, 5, seed=11) == split_classes(100, 5, seed=11)

    def test_seed_changes_partition(self):
        assert split_classes(100, 5, seed=0).assignment != split_classes(100, 5, seed=1).assignment

    @pytest.mark.parametrize(("num_classes", "num_tasks"), [(100, 3), (2, 3), (10, 0)])
    def test_invalid_splits(self, num_classes, num_tasks):
        with pytest.raises(StreamError) as info:
            split_classes(num_classes, num_tasks, seed=0)
        assert info.value.exit_code == 4

    def test_uneven_remainder_is_reported(self):
        with pytest.raises(StreamError, match="1 left over"):
            split_classes(100, 3, seed=0)

    def test_partition_contract_rejects_uneven_assignment(self):
        with pytest.raises(ValidationError):
            ClassPartition(seed=0, num_tasks=2, num_classes=3, assignment={0: 1, 1: 1, 2: 2})

    def test_partition_json_roundtrip(self):
        partition = split_classes(10, 5, seed=2)
        assert ClassPartition.from_json(partition.to_json()) == partition


class TestStratifiedQuota:
    def test_proportional_allocation(self):
        assert stratified_quota({0: 50, 1: 30, 2: 20}, 0.1) == {0: 5, 1: 3, 2: 2}

    def test_largest_remainder_ties_go_to_smaller_ids(self):
        # 4.5 rounds half up to 5 and the two extra slots go to classes 0 and 1.
        assert stratified_quota({0: 3, 1: 3, 2: 3}, 0.5) == {0: 2, 1: 2, 2: 1}

    def test_total_matches_rounded_budget(self):
        counts = {c: 37 + c for c in range(7)}
        quota = stratified_quota(counts, 0.13)
        assert sum(quota.values()) == round(0.13 * sum(counts.values()))

    def test_minimum_per_class_borrows_from_largest(self):
        assert stratified_quota({0: 100, 1: 2}, 0.1, min_per_class=1) == {0: 9, 1: 1}

    def test_minimum_per_class_needs_enough_budget(self):
        with pytest.raises(StreamError, match="cannot give"):
            stratified_quota({0: 10, 1: 10}, 0.05, min_per_class=1)

    def test_zero_fraction_is_empty(self):
        assert stratified_quota({0: 10, 1: 10}, 0.0) == {0: 0, 1: 0}


class TestBuildStream:
    def test_full_labels(self, tiny_dataset):
        stream = build_stream(tiny_dataset, split_classes(4, 2, seed=0), label_fraction=1.0, seed=0)
        assert len(stream) == 2
        for task in stream:
            assert task.labelled_indices == task.train_indices
            assert task.size == 24
            assert len(task.test_indices) == 8

    def test_tenth_of_labels_is_stratified(self):
        dataset = make_synthetic_dataset(4, train_per_class=20, test_per_class=5, image_size=8)
        stream = build_stream(dataset, split_classes(4, 2, seed=0), label_fraction=0.1, seed=0)
        for task in stream:
            labels = [task.class_of(i) for i in task.labelled_indices]
            assert len(labels) == 4
            assert sorted(labels) == sorted([*task.classes, *task.classes])
            assert set(task.labelled_indices) <= set(task.train_indices)

    def test_tasks_are_disjoint_and_cover_every_class(self, tiny_stream):
        first, second = tiny_stream.task(1), tiny_stream.task(2)
        assert not set(first.classes) & set(second.classes)
        assert sorted(first.classes + second.classes) == [0, 1, 2, 3]
        assert not set(first.train_indices) & set(second.train_indices)
        assert tiny_stream.seen(1) == (first,)

    def test_test_portion_uses_the_test_split(self, tiny_stream, tiny_dataset):
        task = tiny_stream.task(1)
        assert {tiny_dataset.test.targets[i] for i in task.test_indices} == set(task.classes)

    def test_deterministic(self, tiny_dataset):
        partition = split_classes(4, 2, seed=0)
        a = build_stream(tiny_dataset, partition, label_fraction=0.5, seed=9)
        b = build_stream(tiny_dataset, partition, label_fraction=0.5, seed=9)
        assert [t.labelled_indices for t in a] == [t.labelled_indices for t in b]

    def test_training_set_marks_unlabelled_rows(self, tiny_stream):
        task = tiny_stream.task(1)
        view = task.training_set()
        labelled = set(task.labelled_indices)
        for position in range(len(view)):
            image, target, index = view[position]
            assert image.shape == (3, 16, 16)
            assert 0.0 <= float(image.min()) and float(image.max()) <= 1.0
            if index in labelled:
                assert target == task.class_of(index)
            else:
                assert target == UNLABELLED

    def test_unlabelled_view_hides_labels(self, tiny_stream):
        view = tiny_stream.task(2).unlabelled()
        assert {view[i][1] for i in range(len(view))} == {UNLABELLED}

    def test_missing_classes_are_reported(self, tiny_dataset):
        with pytest.raises(StreamError, match="lacks classes"):
            build_stream(tiny_dataset, split_classes(6, 2, seed=0), label_fraction=1.0, seed=0)

    def test_label_fraction_must_be_positive(self, tiny_dataset):
        with pytest.raises(StreamError):
            build_stream(tiny_dataset, split_classes(4, 2, seed=0), label_fraction=0.0, seed=0)


class TestLoadDataset:
    def test_synthetic_with_caps(self, tmp_path):
        config = DatasetConfig(
            id="synthetic",
            image_size=8,
            synthetic_num_classes=3,
            synthetic_train_per_class=10,
            synthetic_test_per_class=4,
            max_train_per_class=5,
        )
        splits = load_dataset(config, tmp_path)
        assert splits.num_classes == 3
        assert len(splits.train) == 15
        assert len(splits.test) == 12

    def test_label_index_folder(self, tmp_path):
        lines = ["path,label,split"]
        for label in range(2):
            for split in ("train", "test"):
                name = f"{split}_{label}.png"
                image = torch.full((3, 12, 12), 40 + 100 * label, dtype=torch.uint8)
                write_png(image, str(tmp_path / name))
                lines.append(f"{name},{label},{split}")
        (tmp_path / "labels.csv").write_text("\n".join(lines) + "\n", encoding="utf-8")

        splits = load_dataset(DatasetConfig(id="folder", image_size=8), tmp_path)
        assert splits.num_classes == 2
        image = splits.train.load(1)
        assert image.shape == (3, 8, 8)
        assert torch.allclose(image, torch.full_like(image, 140 / 255), atol=1e-6)

    def test_label_index_missing(self, tmp_path):
        with pytest.raises(DataError, match="not found"):
            load_dataset(DatasetConfig(id="folder", image_size=8), tmp_path)

    def test_bad_split_name(self, tmp_path):
        (tmp_path / "labels.csv").write_text("path,label,split\na.png,0,validation\n", encoding="utf-8")
        with pytest.raises(DataError, match="train or test"):
            load_dataset(DatasetConfig(id="folder", image_size=8), tmp_path)
