"""Direction checks on CIFAR-10 with the desk-2task preset.

Each configuration trains three seeds; the whole module takes tens of
minutes on a GPU. The dataset is downloaded into ``KAIZEN_DESK_DATA_ROOT``
(default ``~/.cache/kaizen-cssl``) and reused across sessions.
"""

from __future__ import annotations

import os
from pathlib import Path

import pytest

from packages.kaizen.config_loader import preset
from packages.kaizen.contracts.metrics import MetricSummary
from packages.kaizen.experiment import run_experiment
from tests._requires import requires_desk

pytestmark = [requires_desk, pytest.mark.desk, pytest.mark.slow]

DATA_ROOT = Path(os.getenv("KAIZEN_DESK_DATA_ROOT", Path.home() / ".cache" / "kaizen-cssl")).expanduser()


@pytest.fixture(scope="module")
def desk_summary(tmp_path_factory):
    output_dir = tmp_path_factory.mktemp("desk-runs")
    cache = {}

    def summary(strategy: str, replay_fraction: float = 0.01):
        key = (strategy, replay_fraction)
        if key not in cache:
            base = preset("desk-2task")
            config = base.model_copy(
                update={
                    "name": f"desk-{strategy}-{replay_fraction:g}",
                    "output_dir": output_dir,
                    "replay_fraction": replay_fraction,
                    "dataset": base.dataset.model_copy(update={"root": DATA_ROOT}),
                    "strategy": base.strategy.model_copy(update={"strategy": strategy}),
                }
            )
            cache[key] = run_experiment(config).summary
        return cache[key]

    return summary


def _beats(low: MetricSummary, high: MetricSummary) -> bool:
    return high.mean - low.mean > max(low.std, high.std)


def test_kaizen_forgets_less_than_no_distill(desk_summary):
    kaizen = desk_summary("kaizen")
    baseline = desk_summary("no_distill")
    assert _beats(kaizen.forgetting, baseline.forgetting)


def test_kaizen_ends_more_accurate_than_no_distill(desk_summary):
    kaizen = desk_summary("kaizen")
    baseline = desk_summary("no_distill")
    assert _beats(baseline.final_accuracy, kaizen.final_accuracy)


def test_replay_does_not_increase_forgetting(desk_summary):
    with_replay = desk_summary("kaizen", 0.1)
    without = desk_summary("kaizen", 0.0)
    assert with_replay.forgetting.mean <= without.forgetting.mean
