"""Tests for experiment configuration and service settings."""

import json
from pathlib import Path

import pytest

from hsim_dml.config import ExperimentConfig, ServiceSettings, load_experiment_config, load_settings, parse_experiment_config
from hsim_dml.errors import ConfigError, OutsideOutputRootError

pytestmark = pytest.mark.unit


class TestExperimentConfig:
    def test_defaults(self):
        config = parse_experiment_config({})
        assert config.train.loss == "ms"
        assert config.train.margin_mode == "hierarchical"
        assert config.eval.k_values == [1, 2, 4, 8]
        assert config.dataset.hierarchy_spec().num_classes == 20

    def test_train_config_carries_seed_and_noise(self):
        config = parse_experiment_config({"seed": 11, "noise": {"ratio": 0.5}, "train": {"hidden_widths": [8, 4]}})
        train = config.train_config()
        assert train.seed == 11
        assert train.noise.ratio == 0.5
        assert train.noise.seed == 11
        assert train.widths(6) == [6, 8, 4, 32]

    def test_poincare_kind(self):
        config = parse_experiment_config(
            {"train": {"similarity": "poincare", "curvature": 0.05, "distance_transform": "negative"}}
        )
        kind = config.train_config().kind
        assert kind.name == "poincare"
        assert kind.curvature == 0.05
        assert kind.distance_transform == "negative"

    def test_reciprocal_transform(self):
        config = parse_experiment_config({"train": {"inter_transform": "reciprocal", "reciprocal_eps": 0.01}})
        transform = config.train_config().inter_transform
        assert transform.mode == "reciprocal"
        assert transform.eps == 0.01

    def test_k_values_sorted_and_unique(self):
        assert parse_experiment_config({"eval": {"k_values": [8, 1, 1]}}).eval.k_values == [1, 8]

    def test_unknown_field_names_its_path(self):
        with pytest.raises(ConfigError) as exc:
            parse_experiment_config({"train": {"epochz": 3}})
        assert any(p.startswith("train.epochz:") for p in exc.value.problems)

    def test_every_problem_reported(self):
        with pytest.raises(ConfigError) as exc:
            parse_experiment_config({"noise": {"ratio": 2.0}, "train": {"classes_per_batch": 1}})
        paths = sorted(p.split(":")[0] for p in exc.value.problems)
        assert paths == ["noise.ratio", "train.classes_per_batch"]

    def test_file_source_needs_path(self):
        with pytest.raises(ConfigError) as exc:
            parse_experiment_config({"dataset": {"source": "file"}})
        assert "path" in str(exc.value)

    def test_scale_ordering(self):
        with pytest.raises(ConfigError):
            parse_experiment_config({"dataset": {"sub_scale": 5.0}})

    def test_round_trips_through_json(self):
        config = parse_experiment_config({"name": "x", "train": {"epochs": 3}})
        again = ExperimentConfig.model_validate_json(config.model_dump_json())
        assert again == config


class TestLoadExperimentConfig:
    def test_reads_file(self, tmp_path, tiny_config):
        path = tmp_path / "config.json"
        path.write_text(json.dumps(tiny_config))
        config = load_experiment_config(path)
        assert config.name == "tiny"
        assert config.train.hidden_widths == [16]

    def test_missing_file(self, tmp_path):
        with pytest.raises(ConfigError) as exc:
            load_experiment_config(tmp_path / "nope.json")
        assert "not found" in str(exc.value)

    def test_invalid_json(self, tmp_path):
        path = tmp_path / "broken.json"
        path.write_text("{\n  \"seed\": ,\n}")
        with pytest.raises(ConfigError) as exc:
            load_experiment_config(path)
        assert "line 2" in str(exc.value)

    def test_non_object(self, tmp_path):
        path = tmp_path / "list.json"
        path.write_text("[1, 2]")
        with pytest.raises(ConfigError):
            load_experiment_config(path)


class TestLoadSettings:
    def test_defaults(self, monkeypatch):
        for var in ("HSIM_OUTPUT_ROOT", "LOG_LEVEL", "MCP_HOST", "MCP_PORT"):
            monkeypatch.delenv(var, raising=False)
        settings = load_settings()
        assert settings.output_root == Path("runs")
        assert settings.log_level == "INFO"
        assert settings.host == "0.0.0.0"
        assert settings.port == 8000

    def test_environment_overrides(self, monkeypatch, tmp_path):
        monkeypatch.setenv("HSIM_OUTPUT_ROOT", str(tmp_path))
        monkeypatch.setenv("LOG_LEVEL", "DEBUG")
        monkeypatch.setenv("MCP_PORT", "9001")
        settings = load_settings()
        assert settings.output_root == tmp_path
        assert settings.log_level == "DEBUG"
        assert settings.port == 9001

    def test_bad_port(self, monkeypatch):
        monkeypatch.setenv("MCP_PORT", "eighty")
        with pytest.raises(ValueError, match="MCP_PORT"):
            load_settings()


class TestConfine:
    def test_relative_path_resolves_under_root(self, tmp_path):
        settings = ServiceSettings(output_root=tmp_path / "runs")
        assert settings.confine("run/model.hsim") == (tmp_path / "runs" / "run" / "model.hsim").resolve()

    def test_dot_segments_inside_root_allowed(self, tmp_path):
        settings = ServiceSettings(output_root=tmp_path / "runs")
        assert settings.confine("a/../b") == (tmp_path / "runs" / "b").resolve()

    @pytest.mark.parametrize("path", ["../escaped", "../../escaped", "run/../../escaped", ".", ""])
    def test_escapes_rejected(self, tmp_path, path):
        settings = ServiceSettings(output_root=tmp_path / "runs")
        with pytest.raises(OutsideOutputRootError, match="escapes the output root"):
            settings.confine(path)

    def test_absolute_path_outside_rejected(self, tmp_path):
        settings = ServiceSettings(output_root=tmp_path / "runs")
        with pytest.raises(OutsideOutputRootError):
            settings.confine(tmp_path / "elsewhere" / "model.hsim")

    def test_absolute_path_inside_allowed(self, tmp_path):
        settings = ServiceSettings(output_root=tmp_path / "runs")
        inside = tmp_path / "runs" / "run" / "model.hsim"
        assert settings.confine(inside) == inside.resolve()

    def test_symlink_out_of_root_rejected(self, tmp_path):
        root = tmp_path / "runs"
        root.mkdir()
        (tmp_path / "outside").mkdir()
        (root / "link").symlink_to(tmp_path / "outside")
        with pytest.raises(OutsideOutputRootError):
            ServiceSettings(output_root=root).confine("link/model.hsim")
