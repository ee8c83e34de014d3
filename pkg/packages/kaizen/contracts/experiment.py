"""Experiment configuration contracts.

Every block is frozen and rejects unknown keys, so a config file that
validates here is exactly the config that ran. The resolved config (env
overrides applied) is what gets hashed.
"""

from __future__ import annotations

import hashlib
import json
from pathlib import Path
from typing import Any, Literal

from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

SSLKind = Literal["simclr", "mocov2plus", "byol", "vicreg"]
StrategyName = Literal["kaizen", "cassle", "no_distill"]
DatasetId = Literal["cifar10", "cifar100", "imagenet100", "folder", "synthetic"]
ClassifierInput = Literal["current_view1", "momentum_view2"]

SSL_KIND_ALIASES: dict[str, str] = {
    "simclr": "simclr",
    "mocov2+": "mocov2plus",
    "mocov2plus": "mocov2plus",
    "moco": "mocov2plus",
    "byol": "byol",
    "vicreg": "vicreg",
}

# Constants of the original method formulations.
SSL_DEFAULT_TEMPERATURE: dict[str, float] = {"simclr": 0.5, "mocov2plus": 0.2}
SSL_DEFAULT_MOMENTUM: dict[str, float] = {"mocov2plus": 0.99, "byol": 0.996}
MOMENTUM_KINDS: frozenset[str] = frozenset(SSL_DEFAULT_MOMENTUM)

KNOWN_NUM_CLASSES: dict[str, int] = {"cifar10": 10, "cifar100": 100, "imagenet100": 100}
DEFAULT_IMAGE_SIZE: dict[str, int] = {"imagenet100": 224}

# Per-task epochs used for the published results.
PAPER_EPOCHS: dict[tuple[str, int], int] = {
    ("cifar100", 5): 500,
    ("cifar100", 20): 250,
    ("imagenet100", 5): 200,
}
FALLBACK_EPOCHS = 500


def normalize_ssl_kind(value: Any) -> Any:
    """Map published method names (``MoCoV2+``, ``VICReg``...) to config keys."""
    if isinstance(value, str):
        return SSL_KIND_ALIASES.get(value.strip().lower(), value)
    return value


class AugmentationPolicy(BaseModel):
    """Stochastic two-view augmentation recipe.

    Each transform has an application probability; setting every probability
    to zero gives the identity policy.
    """

    model_config = ConfigDict(frozen=True, extra="forbid")

    crop_p: float = Field(1.0, ge=0.0, le=1.0)
    crop_scale: tuple[float, float] = (0.08, 1.0)
    crop_ratio: tuple[float, float] = (3.0 / 4.0, 4.0 / 3.0)
    flip_p: float = Field(0.5, ge=0.0, le=1.0)
    jitter_p: float = Field(0.8, ge=0.0, le=1.0)
    brightness: float = Field(0.4, ge=0.0)
    contrast: float = Field(0.4, ge=0.0)
    saturation: float = Field(0.2, ge=0.0)
    hue: float = Field(0.1, ge=0.0, le=0.5)
    grayscale_p: float = Field(0.2, ge=0.0, le=1.0)
    blur_p: float | None = Field(
        None, ge=0.0, le=1.0, description="None: 0.5 at 224px and above, else 0"
    )
    blur_sigma: tuple[float, float] = (0.1, 2.0)
    solarize_p: float = Field(0.0, ge=0.0, le=1.0)

    @model_validator(mode="after")
    def _ranges_ordered(self) -> AugmentationPolicy:
        for name in ("crop_scale", "crop_ratio", "blur_sigma"):
            low, high = getattr(self, name)
            if not 0 < low <= high:
                raise ValueError(f"{name} must satisfy 0 < low <= high")
        if self.crop_scale[1] > 1.0:
            raise ValueError("crop_scale upper bound must be <= 1")
        return self

    @classmethod
    def identity(cls) -> AugmentationPolicy:
        return cls(crop_p=0.0, flip_p=0.0, jitter_p=0.0, grayscale_p=0.0, blur_p=0.0)

    def resolved_blur_p(self, image_size: int) -> float:
        if self.blur_p is not None:
            return self.blur_p
        return 0.5 if image_size >= 224 else 0.0


class SSLConfig(BaseModel):
    """Self-supervised method selection and its original hyperparameters."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kind: SSLKind = "byol"
    temperature: float | None = Field(None, gt=0.0)
    momentum: float | None = Field(None, ge=0.0, le=1.0)
    momentum_schedule: Literal["constant", "cosine"] = "constant"
    queue_size: int = Field(4096, ge=1, description="MoCoV2+ key queue capacity")
    vicreg_weights: tuple[float, float, float] = (25.0, 25.0, 1.0)
    symmetrize: bool = False
    augmentation: AugmentationPolicy = Field(default_factory=AugmentationPolicy)

    @field_validator("kind", mode="before")
    @classmethod
    def _normalize_kind(cls, value: Any) -> Any:
        return normalize_ssl_kind(value)

    @property
    def uses_momentum(self) -> bool:
        return self.kind in MOMENTUM_KINDS

    def resolved_temperature(self) -> float:
        if self.temperature is not None:
            return self.temperature
        return SSL_DEFAULT_TEMPERATURE.get(self.kind, 0.5)

    def resolved_momentum(self) -> float | None:
        if not self.uses_momentum:
            return None
        if self.momentum is not None:
            return self.momentum
        return SSL_DEFAULT_MOMENTUM[self.kind]


class ArchitectureSpec(BaseModel):
    """Network shapes. The classifier is hidden affine -> ReLU -> output affine."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    backbone: str = "resnet18"
    width: int = Field(64, ge=1, description="Base channel width of the convnet backbone")
    image_size: int = Field(32, ge=8)
    classifier_hidden: int = Field(1000, ge=1)
    num_outputs: int = Field(100, ge=1)
    projector_hidden: int = Field(2048, ge=1)
    projector_dim: int = Field(256, ge=1)
    predictor_hidden: int = Field(4096, ge=1)


class OptimizerConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    name: Literal["sgd", "lars"] = "sgd"
    lr: float = Field(0.1, gt=0.0)
    momentum: float = Field(0.9, ge=0.0, lt=1.0)
    weight_decay: float = Field(1e-4, ge=0.0)
    cosine: bool = True
    lars_eta: float = Field(0.02, gt=0.0)
    classifier_lr: float | None = Field(None, gt=0.0)


class LossWeights(BaseModel):
    """Weights of the four joint-loss terms."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    kd_fe: float = Field(1.0, ge=0.0)
    kd_c: float = Field(2.0, ge=0.0)
    ct_c: float = Field(1.0, ge=0.0)
    ct_fe: float = Field(1.0, ge=0.0)


class StrategyConfig(BaseModel):
    """Training strategy and its optimisation schedule."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    strategy: StrategyName = "kaizen"
    weights: LossWeights = Field(default_factory=LossWeights)
    epochs_per_task: int | None = Field(
        None, ge=0, description="None: the published schedule scaled by epoch_scale"
    )
    batch_size: int = Field(256, ge=2)
    min_replay_per_batch: int = Field(32, ge=0)
    optimizer: OptimizerConfig = Field(default_factory=OptimizerConfig)
    classifier_input: ClassifierInput = "current_view1"
    kd_temperature: float = Field(1.0, gt=0.0)
    posthoc_epochs: int = Field(10, ge=1)
    posthoc_lr: float = Field(0.1, gt=0.0)
    posthoc_batch_size: int = Field(256, ge=2)
    eval_batch_size: int = Field(512, ge=1)

    @property
    def trains_classifier_jointly(self) -> bool:
        return self.strategy == "kaizen"

    @property
    def replays_during_pretraining(self) -> bool:
        return self.strategy == "kaizen"


class DatasetConfig(BaseModel):
    model_config = ConfigDict(frozen=True, extra="forbid")

    id: DatasetId = "cifar100"
    root: Path | None = Field(None, description="None: KAIZEN_DATASET_ROOT")
    download: bool = False
    image_size: int | None = Field(None, ge=8, description="None: 224 for imagenet100, else 32")
    max_train_per_class: int | None = Field(None, ge=1)
    max_test_per_class: int | None = Field(None, ge=1)
    synthetic_num_classes: int = Field(10, ge=2)
    synthetic_train_per_class: int = Field(60, ge=1)
    synthetic_test_per_class: int = Field(20, ge=1)

    @property
    def resolved_image_size(self) -> int:
        if self.image_size is not None:
            return self.image_size
        return DEFAULT_IMAGE_SIZE.get(self.id, 32)

    @property
    def known_num_classes(self) -> int | None:
        if self.id == "synthetic":
            return self.synthetic_num_classes
        return KNOWN_NUM_CLASSES.get(self.id)


class ExperimentConfig(BaseModel):
    """Complete description of one experiment (all seeds of one setting)."""

    model_config = ConfigDict(frozen=True, extra="forbid")

    name: str = Field("kaizen", min_length=1, pattern=r"^[A-Za-z0-9_.-]+$")
    dataset: DatasetConfig = Field(default_factory=DatasetConfig)
    num_tasks: int = Field(5, ge=1)
    label_fraction: float = Field(1.0, gt=0.0, le=1.0)
    replay_fraction: float = Field(0.01, ge=0.0, le=1.0)
    partition_seed: int = 0
    seeds: list[int] = Field(default_factory=lambda: [0], min_length=1)
    strategy: StrategyConfig = Field(default_factory=StrategyConfig)
    ssl: SSLConfig = Field(default_factory=SSLConfig)
    architecture: ArchitectureSpec = Field(default_factory=ArchitectureSpec)
    epoch_scale: float = Field(1.0, ge=0.0)
    compute_single_task: bool = True
    save_checkpoints: bool = True
    output_dir: Path | None = Field(None, description="None: KAIZEN_OUTPUT_ROOT")

    @field_validator("seeds")
    @classmethod
    def _unique_seeds(cls, seeds: list[int]) -> list[int]:
        if len(set(seeds)) != len(seeds):
            raise ValueError("seeds must be unique")
        return seeds

    @model_validator(mode="after")
    def _preconditions(self) -> ExperimentConfig:
        num_classes = self.dataset.known_num_classes
        if num_classes is not None:
            if self.num_tasks > num_classes:
                raise ValueError(
                    f"num_tasks={self.num_tasks} exceeds the {num_classes} classes of {self.dataset.id}"
                )
            if num_classes % self.num_tasks:
                raise ValueError(
                    f"{num_classes} classes cannot be split equally into {self.num_tasks} tasks"
                )
            if self.architecture.num_outputs < num_classes:
                raise ValueError(
                    f"architecture.num_outputs={self.architecture.num_outputs} is smaller "
                    f"than the {num_classes} classes of {self.dataset.id}"
                )
        if self.architecture.image_size != self.dataset.resolved_image_size:
            raise ValueError(
                f"architecture.image_size={self.architecture.image_size} does not match "
                f"dataset image size {self.dataset.resolved_image_size}"
            )
        if self.replay_fraction > 0:
            strategy = self.strategy
            if strategy.batch_size <= strategy.min_replay_per_batch:
                raise ValueError("strategy.batch_size must exceed min_replay_per_batch")
            if strategy.posthoc_batch_size <= strategy.min_replay_per_batch:
                raise ValueError("strategy.posthoc_batch_size must exceed min_replay_per_batch")
        return self

    def resolved_epochs(self) -> int:
        """Per-task epochs after applying the published schedule and ``epoch_scale``."""
        if self.strategy.epochs_per_task is not None:
            base = self.strategy.epochs_per_task
        else:
            base = PAPER_EPOCHS.get((self.dataset.id, self.num_tasks), FALLBACK_EPOCHS)
        if base == 0 or self.epoch_scale == 0:
            return 0
        return max(1, round(base * self.epoch_scale))

    def trainer_strategy(self) -> StrategyConfig:
        return self.strategy.model_copy(update={"epochs_per_task": self.resolved_epochs()})


def canonical_json(payload: Any) -> str:
    return json.dumps(payload, sort_keys=True, separators=(",", ":"), default=str)


# Location-only fields, left out of the hash.
HASH_EXCLUDED_FIELDS = {"output_dir": True, "dataset": {"root"}}


def config_hash(config: ExperimentConfig) -> str:
    """SHA-256 of the canonical JSON form of *config*, location fields left out."""
    payload = config.model_dump(mode="json", exclude=HASH_EXCLUDED_FIELDS)
    return hashlib.sha256(canonical_json(payload).encode("utf-8")).hexdigest()
