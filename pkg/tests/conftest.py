import sys
from pathlib import Path

import pytest

# Ensure repository root is importable when tests run without an installed package
ROOT_DIR = Path(__file__).resolve().parents[1]
if str(ROOT_DIR) not in sys.path:
    sys.path.insert(0, str(ROOT_DIR))

from packages.kaizen.config import reset_settings_cache  # noqa: E402
from packages.kaizen.contracts.experiment import (  # noqa: E402
    ArchitectureSpec,
    AugmentationPolicy,
    SSLConfig,
    StrategyConfig,
)
from packages.kaizen.task_stream import (  # noqa: E402
    build_stream,
    make_synthetic_dataset,
    split_classes,
)

TINY_IMAGE = 16


@pytest.fixture(autouse=True)
def _isolated_settings(monkeypatch, tmp_path):
    monkeypatch.setenv("KAIZEN_OUTPUT_ROOT", str(tmp_path / "runs"))
    monkeypatch.setenv("KAIZEN_DATASET_ROOT", str(tmp_path / "data"))
    monkeypatch.setenv("KAIZEN_DEVICE", "cpu")
    reset_settings_cache()
    yield
    reset_settings_cache()


@pytest.fixture
def tiny_dataset():
    return make_synthetic_dataset(4, train_per_class=12, test_per_class=4, image_size=TINY_IMAGE)


@pytest.fixture
def tiny_stream(tiny_dataset):
    partition = split_classes(4, 2, seed=0)
    return build_stream(tiny_dataset, partition, label_fraction=0.5, seed=0)


@pytest.fixture
def tiny_spec() -> ArchitectureSpec:
    return ArchitectureSpec(
        backbone="convnet",
        width=4,
        image_size=TINY_IMAGE,
        classifier_hidden=16,
        num_outputs=4,
        projector_hidden=16,
        projector_dim=8,
        predictor_hidden=16,
    )


@pytest.fixture
def tiny_strategy() -> StrategyConfig:
    return StrategyConfig(
        epochs_per_task=1,
        batch_size=8,
        min_replay_per_batch=2,
        posthoc_epochs=1,
        posthoc_batch_size=8,
        eval_batch_size=32,
    )


@pytest.fixture
def light_ssl() -> SSLConfig:
    """BYOL with a cheap augmentation policy."""
    return SSLConfig(kind="byol", augmentation=AugmentationPolicy(jitter_p=0.0, grayscale_p=0.0))
