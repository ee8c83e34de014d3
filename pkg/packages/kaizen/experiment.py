"""Experiment orchestration and run-directory persistence.

A run directory ``<output_dir>/<name>-<hash12>`` holds, for every seed, the
accuracy matrix (CSV and JSON), the metrics report, the loss log and the
per-task checkpoints; at the top level it holds the resolved config, the
class partition, the seed summary, the results table and ``manifest.json``.
A failed run keeps its partial artifacts and a ``FAILED`` marker.
"""

from __future__ import annotations

import itertools
import json
import shutil
import time
from collections.abc import Sequence
from dataclasses import dataclass, field
from pathlib import Path

from .config import AppSettings, get_settings
from .config_loader import dump_config, load_config, load_config_dict, resolve_config
from .contracts.artifacts import (
    RUN_REQUIRED_FILES,
    SEED_REQUIRED_FILES,
    RunManifest,
    SeedArtifact,
)
from .contracts.experiment import ExperimentConfig, config_hash
from .contracts.metrics import (
    AccuracyMatrix,
    MetricsReport,
    MetricsSummary,
    TableEntry,
    single_task_to_csv,
)
from .errors import ArtifactError, ArtifactExistsError, KaizenError
from .eval_metrics import build_report, render_table, summarize_reports
from .logging import get_logger, trace_scope
from .task_stream import build_stream, load_dataset, split_classes
from .trainer import ContinualTrainer, resolve_device
from .version import environment_versions

logger = get_logger(__name__)

MANIFEST_FILE = "manifest.json"
FAILED_MARKER = "FAILED"


@dataclass
class RunResult:
    run_dir: Path
    config: ExperimentConfig
    config_hash: str
    matrices: dict[int, AccuracyMatrix] = field(default_factory=dict)
    reports: dict[int, MetricsReport] = field(default_factory=dict)
    summary: MetricsSummary | None = None


def run_directory(config: ExperimentConfig) -> Path:
    if config.output_dir is None:
        raise ArtifactError("output_dir must be resolved before locating the run directory")
    return Path(config.output_dir) / f"{config.name}-{config_hash(config)[:12]}"


def seed_directory(run_dir: Path, seed: int) -> Path:
    return run_dir / f"seed_{seed}"


def _write_json(path: Path, payload) -> None:
    path.write_text(json.dumps(payload, indent=2, sort_keys=True) + "\n", encoding="utf-8")


def _write_manifest(run_dir: Path, manifest: RunManifest) -> None:
    _write_json(run_dir / MANIFEST_FILE, manifest.model_dump(mode="json"))


def _seed_artifact(run_dir: Path, seed: int) -> SeedArtifact:
    directory = seed_directory(run_dir, seed)
    files = sorted(p.name for p in directory.iterdir() if p.is_file()) if directory.exists() else []
    return SeedArtifact(seed=seed, directory=directory.name, files=files)


def table_entry(config: ExperimentConfig, summary: MetricsSummary) -> TableEntry:
    return TableEntry(strategy=config.strategy.strategy, ssl_kind=config.ssl.kind, summary=summary)


def write_seed_artifacts(seed_dir: Path, matrix: AccuracyMatrix) -> MetricsReport:
    seed_dir.mkdir(parents=True, exist_ok=True)
    (seed_dir / "accuracy_matrix.csv").write_text(matrix.to_csv(), encoding="utf-8")
    _write_json(seed_dir / "accuracy_matrix.json", matrix.model_dump(mode="json"))
    if matrix.single_task is not None:
        (seed_dir / "single_task.csv").write_text(
            single_task_to_csv(matrix.single_task), encoding="utf-8"
        )
    report = build_report(matrix)
    _write_json(seed_dir / "metrics.json", report.model_dump(mode="json"))
    return report


def _run_seed(
    config: ExperimentConfig,
    stream,
    seed: int,
    seed_dir: Path,
    *,
    resume: bool,
    settings: AppSettings,
) -> AccuracyMatrix:
    seed_dir.mkdir(parents=True, exist_ok=True)
    trainer = ContinualTrainer(
        config.trainer_strategy(),
        config.ssl,
        config.architecture,
        seed=seed,
        replay_fraction=config.replay_fraction,
        device=resolve_device(settings.device),
        num_workers=settings.num_workers,
        loss_log=seed_dir / "loss_log.jsonl",
        checkpoint_dir=seed_dir / "checkpoints" if config.save_checkpoints else None,
    )
    matrix = trainer.run_continual(stream, resume=resume)
    if config.compute_single_task:
        matrix = matrix.with_single_task(trainer.run_single_task_baselines(stream))
    return matrix


def run_experiment(
    config: ExperimentConfig,
    *,
    force: bool = False,
    resume: bool = False,
    settings: AppSettings | None = None,
) -> RunResult:
    """Run every seed of *config* and persist the artifacts."""
    settings = settings or get_settings()
    config = resolve_config(config, settings)
    digest = config_hash(config)
    run_dir = run_directory(config)

    if run_dir.exists():
        if force:
            logger.warning("removing existing run directory | path=%s", run_dir)
            shutil.rmtree(run_dir)
        elif not resume:
            raise ArtifactExistsError(
                f"{run_dir} already exists for config hash {digest[:12]}; pass --force to rerun "
                "or --resume to continue",
                details={"run_dir": str(run_dir), "config_hash": digest},
            )
    run_dir.mkdir(parents=True, exist_ok=True)
    (run_dir / FAILED_MARKER).unlink(missing_ok=True)
    (run_dir / "config.yaml").write_text(dump_config(config), encoding="utf-8")

    manifest = RunManifest(config_hash=digest, name=config.name, versions=environment_versions())
    _write_manifest(run_dir, manifest)
    result = RunResult(run_dir=run_dir, config=config, config_hash=digest)

    try:
        dataset = load_dataset(config.dataset, Path(config.dataset.root))
        partition = split_classes(dataset.num_classes, config.num_tasks, config.partition_seed)
        (run_dir / "partition.json").write_text(partition.to_json(), encoding="utf-8")
        stream = build_stream(dataset, partition, config.label_fraction, config.partition_seed)

        for seed in config.seeds:
            seed_dir = seed_directory(run_dir, seed)
            with trace_scope(f"{digest[:12]}/seed={seed}"):
                done = seed_dir / "metrics.json"
                if resume and done.exists():
                    matrix = AccuracyMatrix.model_validate_json(
                        (seed_dir / "accuracy_matrix.json").read_text(encoding="utf-8")
                    )
                    logger.info("seed already complete | seed=%d", seed)
                else:
                    logger.info("seed started | seed=%d", seed)
                    matrix = _run_seed(
                        config, stream, seed, seed_dir, resume=resume, settings=settings
                    )
                report = write_seed_artifacts(seed_dir, matrix)
                result.matrices[seed] = matrix
                result.reports[seed] = report
                logger.info(
                    "seed finished | seed=%d FA=%.4f CA=%.4f",
                    seed,
                    report.final_accuracy,
                    report.continual_accuracy,
                )

        result.summary = summarize_reports(list(result.reports.values()))
        _write_json(run_dir / "summary.json", result.summary.model_dump(mode="json"))
        (run_dir / "table.txt").write_text(
            render_table([table_entry(config, result.summary)]), encoding="utf-8"
        )
    except BaseException as exc:
        payload = (
            exc.to_payload()["error"]
            if isinstance(exc, KaizenError)
            else {"code": type(exc).__name__, "message": str(exc)}
        )
        (run_dir / FAILED_MARKER).write_text(json.dumps(payload) + "\n", encoding="utf-8")
        _write_manifest(
            run_dir,
            manifest.model_copy(
                update={
                    "status": "failed",
                    "finished_at": time.time(),
                    "error": payload,
                    "seeds": [_seed_artifact(run_dir, s) for s in config.seeds],
                }
            ),
        )
        logger.error("run failed | run_dir=%s error=%s", run_dir, payload.get("message"))
        raise

    _write_manifest(
        run_dir,
        manifest.model_copy(
            update={
                "status": "succeeded",
                "finished_at": time.time(),
                "seeds": [_seed_artifact(run_dir, s) for s in config.seeds],
            }
        ),
    )
    logger.info("run succeeded | run_dir=%s", run_dir)
    return result


def expand_sweep(
    config: ExperimentConfig,
    *,
    strategies: Sequence[str] = (),
    ssl_kinds: Sequence[str] = (),
    replay_fractions: Sequence[float] = (),
) -> list[ExperimentConfig]:
    """One config per combination of the swept values; all share the partition seed."""
    if not (strategies or ssl_kinds or replay_fractions):
        return [config]
    base = config.model_dump(mode="json")
    configs: list[ExperimentConfig] = []
    for strategy, kind, fraction in itertools.product(
        strategies or [config.strategy.strategy],
        ssl_kinds or [config.ssl.kind],
        replay_fractions or [config.replay_fraction],
    ):
        data = json.loads(json.dumps(base))
        data["strategy"]["strategy"] = strategy
        data["ssl"]["kind"] = kind
        data["replay_fraction"] = fraction
        suffix = [strategy] if strategies else []
        suffix += [str(kind)] if ssl_kinds else []
        suffix += [f"replay{fraction:g}"] if replay_fractions else []
        data["name"] = "-".join([config.name, *suffix])
        configs.append(load_config_dict(data, source=f"sweep {data['name']}"))
    return configs


@dataclass
class LoadedRun:
    run_dir: Path
    config: ExperimentConfig
    manifest: RunManifest
    matrices: dict[int, AccuracyMatrix]

    @property
    def label(self) -> str:
        return f"{self.config.strategy.strategy}/{self.config.ssl.kind}"


def missing_artifacts(run_dir: Path) -> list[str]:
    """Relative paths a succeeded run directory must contain but does not."""
    run_dir = Path(run_dir)
    missing = [name for name in RUN_REQUIRED_FILES if not (run_dir / name).is_file()]
    manifest_path = run_dir / MANIFEST_FILE
    if manifest_path.is_file():
        manifest = RunManifest.model_validate_json(manifest_path.read_text(encoding="utf-8"))
        for artifact in manifest.seeds:
            missing += [
                f"{artifact.directory}/{name}"
                for name in SEED_REQUIRED_FILES
                if not (run_dir / artifact.directory / name).is_file()
            ]
    return missing


def load_run(run_dir: Path) -> LoadedRun:
    run_dir = Path(run_dir)
    manifest_path = run_dir / MANIFEST_FILE
    if not manifest_path.is_file():
        raise ArtifactError(f"{run_dir} has no {MANIFEST_FILE}")
    manifest = RunManifest.model_validate_json(manifest_path.read_text(encoding="utf-8"))
    config = load_config(run_dir / "config.yaml")
    matrices: dict[int, AccuracyMatrix] = {}
    for artifact in manifest.seeds:
        path = run_dir / artifact.directory / "accuracy_matrix.json"
        if path.is_file():
            matrices[artifact.seed] = AccuracyMatrix.model_validate_json(
                path.read_text(encoding="utf-8")
            )
    return LoadedRun(run_dir=run_dir, config=config, manifest=manifest, matrices=matrices)
