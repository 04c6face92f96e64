"""
Unit tests for configuration loading and environment overrides
"""

import json

import pytest

from tcc_saliency_audit.config import Config, TrainConfig, get_config, reset_config
from tcc_saliency_audit.errors import ConfigurationError


class TestTrainConfig:
    """Test cases for TrainConfig profiles and validation."""

    def test_paper_profile(self) -> None:
        cfg = TrainConfig.paper()
        assert cfg.epochs == 500
        assert cfg.learning_rate == pytest.approx(3e-5)
        assert cfg.batch_size == 1
        assert cfg.optimizer == "RMSPROP"

    def test_desk_profile(self) -> None:
        cfg = TrainConfig.desk(seed=3)
        assert cfg.epochs == 200
        assert cfg.seed == 3

    @pytest.mark.parametrize("field,value", [
        ("epochs", 0),
        ("learning_rate", 0.0),
        ("batch_size", 0),
        ("optimizer", "ADAM"),
        ("loss", "L2"),
    ])
    def test_invalid_values_rejected(self, field: str, value) -> None:
        cfg = TrainConfig()
        setattr(cfg, field, value)
        with pytest.raises(ConfigurationError):
            cfg.validate()


class TestConfig:
    """Test cases for the aggregated Config."""

    def test_defaults(self) -> None:
        config = Config()
        assert config.model.backbone == "TINY"
        assert config.train.epochs == 200
        assert config.campaign.folds == 4
        assert "CA-S" not in config.campaign.specs

    def test_load_from_file(self, tmp_path) -> None:
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"train": {"epochs": 7}, "campaign": {"alpha": 0.01}}))
        config = Config(str(path))
        assert config.train.epochs == 7
        assert config.campaign.alpha == pytest.approx(0.01)

    def test_unknown_key_is_ignored(self, tmp_path) -> None:
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"train": {"nonsense": 1}}))
        config = Config(str(path))
        assert not hasattr(config.train, "nonsense")

    def test_unknown_section_rejected(self, tmp_path) -> None:
        path = tmp_path / "cfg.json"
        path.write_text(json.dumps({"optimizer": {}}))
        with pytest.raises(ConfigurationError):
            Config(str(path))

    def test_malformed_file_rejected(self, tmp_path) -> None:
        path = tmp_path / "cfg.json"
        path.write_text("{not json")
        with pytest.raises(ConfigurationError):
            Config(str(path))

    def test_missing_file_rejected(self, tmp_path) -> None:
        with pytest.raises(ConfigurationError):
            Config(str(tmp_path / "absent.json"))

    def test_save_and_reload(self, tmp_path) -> None:
        config = Config()
        config.model.hidden_size = 9
        path = tmp_path / "saved.json"
        config.save_to_file(str(path))
        assert Config(str(path)).to_dict() == config.to_dict()

    def test_environment_overrides(self, monkeypatch, tmp_path) -> None:
        monkeypatch.setenv("TCC_AUDIT_LOG_LEVEL", "debug")
        monkeypatch.setenv("TCC_AUDIT_OUT_DIR", str(tmp_path))
        config = Config()
        assert config.logging.level == "DEBUG"
        assert config.output.out_dir == str(tmp_path)

    def test_global_instance(self) -> None:
        first = get_config()
        assert get_config() is first
        reset_config()
        assert get_config() is not first
