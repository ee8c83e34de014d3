"""Experiment config loading, presets and env resolution.

Config files are YAML documents validated against
:class:`~packages.kaizen.contracts.experiment.ExperimentConfig`. Validation
failures are reported item by item as a :class:`ConfigError`.
"""

from __future__ import annotations

import json
from pathlib import Path
from typing import Any

import yaml
from pydantic import ValidationError

from .config import AppSettings, get_settings
from .contracts.experiment import ExperimentConfig
from .errors import ConfigError

_SMALL_HEADS = {
    "classifier_hidden": 1000,
    "projector_hidden": 512,
    "projector_dim": 128,
    "predictor_hidden": 512,
}

PRESETS: dict[str, dict[str, Any]] = {
    "smoke": {
        "name": "smoke",
        "dataset": {
            "id": "synthetic",
            "image_size": 16,
            "synthetic_num_classes": 4,
            "synthetic_train_per_class": 24,
            "synthetic_test_per_class": 8,
        },
        "num_tasks": 2,
        "replay_fraction": 0.25,
        "seeds": [0],
        "strategy": {
            "epochs_per_task": 1,
            "batch_size": 16,
            "min_replay_per_batch": 4,
            "posthoc_epochs": 1,
            "posthoc_batch_size": 16,
            "eval_batch_size": 64,
        },
        "ssl": {"kind": "byol"},
        "architecture": {
            "backbone": "convnet",
            "width": 4,
            "image_size": 16,
            "classifier_hidden": 16,
            "num_outputs": 4,
            "projector_hidden": 16,
            "projector_dim": 8,
            "predictor_hidden": 16,
        },
    },
    "desk-2task": {
        "name": "desk-2task",
        "dataset": {"id": "cifar10", "download": True},
        "num_tasks": 2,
        "seeds": [0, 1, 2],
        "strategy": {"epochs_per_task": 20, "batch_size": 256},
        "ssl": {"kind": "mocov2plus", "queue_size": 4096},
        "architecture": {"backbone": "convnet", "width": 32, "num_outputs": 10, **_SMALL_HEADS},
    },
    "desk-5task": {
        "name": "desk-5task",
        "dataset": {"id": "cifar10", "download": True},
        "num_tasks": 5,
        "seeds": [0, 1, 2],
        "strategy": {"epochs_per_task": 10, "batch_size": 256},
        "ssl": {"kind": "mocov2plus", "queue_size": 4096},
        "architecture": {"backbone": "convnet", "width": 32, "num_outputs": 10, **_SMALL_HEADS},
    },
    "paper-cifar100-5task": {
        "name": "paper-cifar100-5task",
        "dataset": {"id": "cifar100"},
        "num_tasks": 5,
        "strategy": {
            "batch_size": 256,
            "optimizer": {"name": "lars", "lr": 0.3, "weight_decay": 1e-5},
        },
        "ssl": {"kind": "mocov2plus", "queue_size": 65536},
        "architecture": {"backbone": "resnet18", "num_outputs": 100},
    },
    "paper-cifar100-20task": {
        "name": "paper-cifar100-20task",
        "dataset": {"id": "cifar100"},
        "num_tasks": 20,
        "strategy": {
            "batch_size": 256,
            "optimizer": {"name": "lars", "lr": 0.3, "weight_decay": 1e-5},
        },
        "ssl": {"kind": "mocov2plus", "queue_size": 65536},
        "architecture": {"backbone": "resnet18", "num_outputs": 100},
    },
    "paper-imagenet100-5task": {
        "name": "paper-imagenet100-5task",
        "dataset": {"id": "imagenet100"},
        "num_tasks": 5,
        "strategy": {
            "batch_size": 128,
            "posthoc_batch_size": 128,
            "eval_batch_size": 256,
            "optimizer": {"name": "lars", "lr": 0.3, "weight_decay": 1e-5},
        },
        "ssl": {"kind": "mocov2plus", "queue_size": 65536},
        "architecture": {"backbone": "resnet18", "image_size": 224, "num_outputs": 100},
    },
}

DEFAULT_PRESET = "desk-2task"


def _format_errors(exc: ValidationError) -> list[dict[str, str]]:
    return [
        {"field": ".".join(str(part) for part in error["loc"]) or "<root>", "message": error["msg"]}
        for error in exc.errors()
    ]


def load_config_dict(data: Any, *, source: str = "<config>") -> ExperimentConfig:
    """Validate a plain mapping into an :class:`ExperimentConfig`."""
    if not isinstance(data, dict):
        raise ConfigError(f"{source}: top level must be a mapping")
    try:
        return ExperimentConfig.model_validate(data)
    except ValidationError as exc:
        errors = _format_errors(exc)
        raise ConfigError(
            f"{source}: {len(errors)} invalid field(s)", details={"errors": errors}
        ) from exc


def load_config(path: Path) -> ExperimentConfig:
    path = Path(path)
    try:
        data = yaml.safe_load(path.read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc}") from exc
    except yaml.YAMLError as exc:
        raise ConfigError(f"{path} is not valid YAML: {exc}") from exc
    return load_config_dict(data, source=str(path))


def dump_config(config: ExperimentConfig) -> str:
    return yaml.safe_dump(config.model_dump(mode="json"), sort_keys=False)


def preset(name: str) -> ExperimentConfig:
    try:
        data = PRESETS[name]
    except KeyError:
        raise ConfigError(
            f"unknown preset {name!r}", details={"known": sorted(PRESETS)}
        ) from None
    return load_config_dict(data, source=f"preset {name}")


def config_schema() -> str:
    return json.dumps(ExperimentConfig.model_json_schema(), indent=2)


def resolve_config(config: ExperimentConfig, settings: AppSettings | None = None) -> ExperimentConfig:
    """Fill the dataset root and output directory from ``KAIZEN_*`` settings."""
    settings = settings or get_settings()
    dataset = config.dataset
    if dataset.root is None:
        dataset = dataset.model_copy(update={"root": settings.dataset_root})
    output_dir = config.output_dir if config.output_dir is not None else settings.output_root
    return config.model_copy(update={"dataset": dataset, "output_dir": output_dir})
