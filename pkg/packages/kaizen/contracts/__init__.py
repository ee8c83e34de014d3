"""Schema-only contracts shared by the trainer, the CLI and the HTTP service."""

from .artifacts import RUN_REQUIRED_FILES, SEED_REQUIRED_FILES, RunManifest, SeedArtifact
from .experiment import (
    ArchitectureSpec,
    AugmentationPolicy,
    DatasetConfig,
    ExperimentConfig,
    LossWeights,
    OptimizerConfig,
    SSLConfig,
    StrategyConfig,
    config_hash,
)
from .metrics import AccuracyMatrix, MetricsReport, MetricsSummary, MetricSummary, TableEntry
from .replay import ReplayEntry, ReplaySnapshot
from .stream import ClassPartition
from .training import LOSS_TERMS, LossBreakdown, StepRecord

__all__ = [
    "AccuracyMatrix",
    "ArchitectureSpec",
    "AugmentationPolicy",
    "ClassPartition",
    "config_hash",
    "DatasetConfig",
    "ExperimentConfig",
    "LOSS_TERMS",
    "LossBreakdown",
    "LossWeights",
    "MetricsReport",
    "MetricsSummary",
    "MetricSummary",
    "OptimizerConfig",
    "ReplayEntry",
    "ReplaySnapshot",
    "RUN_REQUIRED_FILES",
    "RunManifest",
    "SEED_REQUIRED_FILES",
    "SeedArtifact",
    "SSLConfig",
    "StepRecord",
    "StrategyConfig",
    "TableEntry",
]
