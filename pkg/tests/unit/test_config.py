"""Unit Tests - Settings and experiment configuration."""

import json

import pytest

from src.config.experiment import ExperimentConfig, load_experiment_config, parse_experiment_config
from src.config.settings import Settings
from src.utils.errors import ConfigError
from src.utils.seeding import ROLE_OFFSETS, derive_seed, stream_seed


class TestSettings:
    """Tests for environment settings."""

    def test_defaults(self, monkeypatch) -> None:
        """Test default values without environment overrides."""
        monkeypatch.delenv("STF_LOG_LEVEL", raising=False)

        settings = Settings(_env_file=None)

        assert settings.log_level == "info"
        assert settings.torch_threads == 1
        assert settings.record_wall_time is False

    def test_env_prefix(self, monkeypatch) -> None:
        """Test that STF_ variables are read and WARNING is normalized."""
        monkeypatch.setenv("STF_LOG_LEVEL", "WARNING")
        monkeypatch.setenv("STF_RECORD_WALL_TIME", "true")

        settings = Settings(_env_file=None)

        assert settings.log_level == "warn"
        assert settings.record_wall_time is True


class TestSeeds:
    """Tests for seed derivation."""

    def test_offsets(self) -> None:
        """Test that each role adds its fixed offset."""
        assert derive_seed(7, "synthetic") == 7
        assert derive_seed(7, "model") == 108
        assert derive_seed(7, "diagnostics") == 7 + ROLE_OFFSETS["diagnostics"]

    def test_resolved_on_load(self, experiment_document: dict) -> None:
        """Test that unset section seeds are derived from the experiment seed."""
        config = parse_experiment_config(experiment_document)

        assert config.data.synthetic.seed == 5
        assert config.model.seed == 5 + 101
        assert config.train.seed == 5 + 202
        assert config.eval.seed == 5 + 404
        assert config.diagnostics.seed == 5 + 505

    def test_explicit_seed_kept(self, experiment_document: dict) -> None:
        """Test that an explicit section seed is not overwritten."""
        experiment_document["train"]["seed"] = 42

        assert parse_experiment_config(experiment_document).train.seed == 42

    def test_streams_do_not_collide(self) -> None:
        """Test that no epoch mask reuses the validation mask or the sweep masks."""
        train_seed = derive_seed(7, "train")
        epoch_seeds = {stream_seed(train_seed, "epoch_mask", e) for e in range(500)}

        assert len(epoch_seeds) == 500
        assert stream_seed(train_seed, "validation_mask") not in epoch_seeds
        sweep_seeds = {stream_seed(derive_seed(7, "eval"), "sweep_mask", i) for i in range(3)}
        assert not sweep_seeds & epoch_seeds

    def test_stream_seed_is_stable(self) -> None:
        """Test that a stream seed depends only on its inputs."""
        assert stream_seed(3, "epoch_sample", 4) == stream_seed(3, "epoch_sample", 4)
        assert stream_seed(3, "epoch_sample", 4) != stream_seed(3, "epoch_mask", 4)

    def test_negative_seed_rejected(self, experiment_document: dict) -> None:
        """Test that the experiment seed must be nonnegative."""
        experiment_document["seed"] = -1

        with pytest.raises(ConfigError):
            parse_experiment_config(experiment_document)


class TestExperimentConfig:
    """Tests for validation and overrides."""

    def test_unknown_key_named(self, experiment_document: dict) -> None:
        """Test that an unknown key is reported by its path."""
        experiment_document["model"]["hidden_size"] = 8

        with pytest.raises(ConfigError) as excinfo:
            parse_experiment_config(experiment_document)

        assert "model.hidden_size" in excinfo.value.offending_keys

    def test_exactly_one_data_source(self) -> None:
        """Test that both a path and a synthetic scene are rejected."""
        with pytest.raises(ConfigError):
            parse_experiment_config({"data": {"path": "a.csv", "synthetic": {}}})
        with pytest.raises(ConfigError):
            parse_experiment_config({"data": {}})

    def test_invalid_values(self, experiment_document: dict) -> None:
        """Test range checks on ratios, steps and heads."""
        for section, key, value in [
            ("eval", "ratios", [0.0]),
            ("model", "m_steps", 0),
            ("model", "n_heads", 3),
            ("eval", "models", ["transformer"]),
        ]:
            document = json.loads(json.dumps(experiment_document))
            document[section][key] = value
            with pytest.raises(ConfigError):
                parse_experiment_config(document)

    def test_dotted_override(self, experiment_document: dict) -> None:
        """Test that --set style overrides parse JSON values."""
        config = parse_experiment_config(
            experiment_document, ["model.m_steps=4", "eval.ratios=[0.5]", "model.aggregation=idw_ses"]
        )

        assert config.model.m_steps == 4
        assert config.eval.ratios == [0.5]
        assert config.model.aggregation == "idw_ses"

    def test_malformed_override(self, experiment_document: dict) -> None:
        """Test that an override without '=' is a config error."""
        with pytest.raises(ConfigError):
            parse_experiment_config(experiment_document, ["model.m_steps"])

    def test_load_from_file(self, experiment_document: dict, tmp_path) -> None:
        """Test round-tripping through a JSON file."""
        path = tmp_path / "experiment.json"
        path.write_text(json.dumps(experiment_document))

        config = load_experiment_config(path)

        assert isinstance(config, ExperimentConfig)
        assert config.train.epochs == 2

    def test_missing_and_malformed_files(self, tmp_path) -> None:
        """Test FileNotFoundError for absent files and ConfigError for bad JSON."""
        with pytest.raises(FileNotFoundError):
            load_experiment_config(tmp_path / "absent.json")

        bad = tmp_path / "bad.json"
        bad.write_text("{not json")
        with pytest.raises(ConfigError):
            load_experiment_config(bad)
