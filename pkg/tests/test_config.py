from pathlib import Path

import pytest
import yaml
from pydantic import ValidationError
from pydantic_settings import SettingsError

from packages.kaizen import get_settings, reset_settings_cache
from packages.kaizen.config_loader import (
    PRESETS,
    config_schema,
    dump_config,
    load_config,
    load_config_dict,
    preset,
    resolve_config,
)
from packages.kaizen.contracts.experiment import ExperimentConfig, SSLConfig, config_hash
from packages.kaizen.errors import ConfigError


class TestAppSettings:
    def test_defaults(self, monkeypatch, tmp_path):
        for key in ("KAIZEN_OUTPUT_ROOT", "KAIZEN_DATASET_ROOT", "KAIZEN_DEVICE"):
            monkeypatch.delenv(key, raising=False)
        monkeypatch.chdir(tmp_path)
        reset_settings_cache()
        settings = get_settings()

        assert settings.env == "development"
        assert settings.name == "kaizen-cssl"
        assert settings.log_level == "INFO"
        assert settings.dataset_root == Path("data")
        assert settings.output_root == Path("runs")
        assert settings.device == "auto"
        assert settings.num_workers == 0
        assert settings.cors_allow_origins == ["http://localhost:3000"]

    def test_reads_environment(self, monkeypatch):
        monkeypatch.setenv("KAIZEN_ENV", "staging")
        monkeypatch.setenv("KAIZEN_LOG_LEVEL", "DEBUG")
        monkeypatch.setenv("KAIZEN_DATASET_ROOT", "/data/sets")
        monkeypatch.setenv("KAIZEN_NUM_WORKERS", "4")
        monkeypatch.setenv("KAIZEN_CORS_ALLOW_ORIGINS", "https://a.example, http://localhost:3000")
        reset_settings_cache()
        settings = get_settings()

        assert settings.env == "staging"
        assert settings.log_level == "DEBUG"
        assert settings.dataset_root == Path("/data/sets")
        assert settings.num_workers == 4
        assert settings.cors_allow_origins == ["https://a.example", "http://localhost:3000"]

    def test_unknown_prefixed_variable_is_rejected(self, monkeypatch):
        monkeypatch.setenv("KAIZEN_OUTPUT_ROOTS", "/typo")
        reset_settings_cache()
        with pytest.raises(SettingsError, match="(?i)kaizen_output_roots"):
            get_settings()

    def test_desk_gate_variable_is_allowed(self, monkeypatch):
        monkeypatch.setenv("KAIZEN_RUN_DESK_TESTS", "0")
        reset_settings_cache()
        assert get_settings().name == "kaizen-cssl"

    def test_invalid_device_is_rejected(self, monkeypatch):
        monkeypatch.setenv("KAIZEN_DEVICE", "tpu")
        reset_settings_cache()
        with pytest.raises(ValidationError):
            get_settings()


class TestExperimentConfig:
    def test_every_preset_validates(self):
        for name in PRESETS:
            assert preset(name).name == name

    def test_unknown_preset(self):
        with pytest.raises(ConfigError, match="unknown preset"):
            preset("nope")

    def test_defaults_follow_published_constants(self):
        config = ExperimentConfig()
        assert config.replay_fraction == 0.01
        assert config.strategy.weights.kd_c == 2.0
        assert config.strategy.weights.kd_fe == 1.0
        assert config.strategy.min_replay_per_batch == 32
        assert config.architecture.classifier_hidden == 1000

    def test_ssl_defaults_per_kind(self):
        assert SSLConfig(kind="simclr").resolved_temperature() == 0.5
        assert SSLConfig(kind="mocov2plus").resolved_temperature() == 0.2
        assert SSLConfig(kind="byol").resolved_momentum() == 0.996
        assert SSLConfig(kind="simclr").resolved_momentum() is None
        assert SSLConfig(kind="vicreg").vicreg_weights == (25.0, 25.0, 1.0)

    def test_published_method_names_are_accepted(self):
        assert SSLConfig(kind="MoCoV2+").kind == "mocov2plus"
        assert SSLConfig(kind="VICReg").kind == "vicreg"

    def test_unequal_split_is_rejected(self):
        with pytest.raises(ConfigError) as info:
            load_config_dict({"num_tasks": 3})
        fields = [item["field"] for item in info.value.details["errors"]]
        assert fields == ["<root>"]
        assert "cannot be split equally" in info.value.details["errors"][0]["message"]

    def test_errors_are_itemized(self):
        with pytest.raises(ConfigError) as info:
            load_config_dict({"num_tasks": 0, "replay_fraction": 2.0, "bogus": 1})
        fields = {item["field"] for item in info.value.details["errors"]}
        assert {"num_tasks", "replay_fraction", "bogus"} <= fields
        assert info.value.exit_code == 3

    def test_top_level_must_be_mapping(self):
        with pytest.raises(ConfigError, match="mapping"):
            load_config_dict([1, 2])

    def test_yaml_roundtrip_is_lossless(self, tmp_path):
        config = preset("desk-5task")
        path = tmp_path / "config.yaml"
        path.write_text(dump_config(config), encoding="utf-8")
        assert load_config(path) == config

    def test_invalid_yaml(self, tmp_path):
        path = tmp_path / "broken.yaml"
        path.write_text("name: [unclosed\n", encoding="utf-8")
        with pytest.raises(ConfigError, match="not valid YAML"):
            load_config(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError, match="cannot read"):
            load_config(tmp_path / "absent.yaml")

    def test_shipped_config_files_validate(self):
        configs = Path(__file__).resolve().parents[1] / "configs"
        for path in sorted(configs.glob("*.yaml")):
            assert load_config(path).name == path.stem

    def test_schema_is_json(self):
        assert '"ExperimentConfig"' in config_schema()


class TestConfigHash:
    def test_identical_configs_share_a_hash(self):
        assert config_hash(preset("smoke")) == config_hash(preset("smoke"))

    def test_any_field_change_changes_the_hash(self):
        base = preset("smoke")
        variants = [
            base.model_copy(update={"replay_fraction": 0.5}),
            base.model_copy(update={"seeds": [0, 1]}),
            base.model_copy(update={"strategy": base.strategy.model_copy(update={"batch_size": 32})}),
        ]
        hashes = {config_hash(base), *(config_hash(v) for v in variants)}
        assert len(hashes) == 4

    def test_locations_do_not_change_the_hash(self, tmp_path):
        base = preset("smoke")
        moved = base.model_copy(
            update={
                "output_dir": tmp_path / "elsewhere",
                "dataset": base.dataset.model_copy(update={"root": tmp_path / "data-copy"}),
            }
        )
        assert config_hash(moved) == config_hash(base)
        assert config_hash(resolve_config(base, get_settings())) == config_hash(base)

    def test_resolve_fills_roots_from_settings(self, tmp_path):
        resolved = resolve_config(preset("smoke"), get_settings())
        assert resolved.output_dir == tmp_path / "runs"
        assert resolved.dataset.root == tmp_path / "data"

    def test_resolve_keeps_explicit_values(self, tmp_path):
        data = yaml.safe_load(dump_config(preset("smoke")))
        data["output_dir"] = str(tmp_path / "elsewhere")
        resolved = resolve_config(load_config_dict(data))
        assert resolved.output_dir == tmp_path / "elsewhere"


class TestEpochSchedule:
    def test_published_schedule_applies_when_unset(self):
        assert load_config_dict({"num_tasks": 5}).resolved_epochs() == 500
        assert load_config_dict({"num_tasks": 20}).resolved_epochs() == 250

    def test_epoch_scale(self):
        config = load_config_dict({"num_tasks": 5, "epoch_scale": 0.01})
        assert config.resolved_epochs() == 5

    def test_explicit_epochs_win(self):
        config = load_config_dict({"strategy": {"epochs_per_task": 3}})
        assert config.trainer_strategy().epochs_per_task == 3
