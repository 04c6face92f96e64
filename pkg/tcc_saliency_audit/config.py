"""
Configuration management module for the saliency audit toolkit
Centralized configuration for models, training, synthetic data and campaigns
"""

from dataclasses import dataclass, asdict, field, fields
from typing import Dict, List, Optional, Any
import json
import os

from dotenv import load_dotenv

from .errors import ConfigurationError


@dataclass
class ModelConfig:
    """Model zoo settings (desk-scale defaults)"""
    backbone: str = "TINY"
    hidden_size: int = 16
    kernel_size: int = 3
    attention_width: int = 16
    dense_noncontextual: bool = False
    input_height: int = 32
    input_width: int = 32


@dataclass
class TrainConfig:
    """Training settings; defaults follow the full-scale recipe"""
    epochs: int = 500
    optimizer: str = "RMSPROP"
    learning_rate: float = 3e-5
    batch_size: int = 1
    seed: int = 0
    loss: str = "ANGULAR"
    augment: bool = True

    @classmethod
    def paper(cls, seed: int = 0) -> "TrainConfig":
        return cls(seed=seed)

    @classmethod
    def desk(cls, seed: int = 0) -> "TrainConfig":
        """Profile sized for CPU runs on synthetic data"""
        return cls(epochs=200, learning_rate=1e-3, seed=seed)

    def validate(self) -> None:
        if self.epochs <= 0:
            raise ConfigurationError(f"epochs must be positive, got {self.epochs}")
        if self.learning_rate <= 0:
            raise ConfigurationError(f"learning_rate must be positive, got {self.learning_rate}")
        if self.batch_size < 1:
            raise ConfigurationError(f"batch_size must be >= 1, got {self.batch_size}")
        if self.optimizer.upper() != "RMSPROP":
            raise ConfigurationError(f"unsupported optimizer {self.optimizer!r}")
        if self.loss.upper() != "ANGULAR":
            raise ConfigurationError(f"unsupported loss {self.loss!r}")


@dataclass
class SynthConfig:
    """Synthetic planted-evidence dataset settings"""
    num_sequences: int = 16
    num_frames: int = 5
    height: int = 32
    width: int = 32
    evidence_mode: str = "GLOBAL"
    patch_size: int = 8


@dataclass
class CampaignConfig:
    """WP1 / WP2 campaign settings"""
    specs: List[str] = field(
        default_factory=lambda: ["A-S", "A-T", "A-ST", "C-S", "C-T", "C-ST", "CA-ST"]
    )
    folds: int = 4
    alpha: float = 0.05
    seed: int = 0
    temporal_threshold: float = 0.7
    spatial_threshold: Optional[float] = None
    divergence_scale: str = "BOUNDED"
    calibration_percentile: float = 10.0
    renormalize_frozen_attention: bool = True
    paired: bool = False
    train_missing: bool = True
    compare_baseline: bool = True


@dataclass
class LoggingConfig:
    """Logging settings"""
    level: str = "INFO"
    log_file: str = "tcc_audit.log"
    max_bytes: int = 10 * 1024 * 1024  # 10MB
    backup_count: int = 5
    log_to_console: bool = True
    log_to_file: bool = False


@dataclass
class OutputConfig:
    """Artifact locations"""
    out_dir: str = "audit_out"
    data_dir: str = "audit_out/data"


_SECTIONS = ("model", "train", "synth", "campaign", "logging", "output")


class Config:
    """Global configuration manager"""

    def __init__(self, config_path: Optional[str] = None):
        """
        Initialize configuration

        Args:
            config_path: Path to custom config file (optional)
        """
        self.model = ModelConfig()
        self.train = TrainConfig.desk()
        self.synth = SynthConfig()
        self.campaign = CampaignConfig()
        self.logging = LoggingConfig()
        self.output = OutputConfig()

        self._apply_environment()

        if config_path:
            if not os.path.exists(config_path):
                raise ConfigurationError(f"config file not found: {config_path}")
            self.load_from_file(config_path)

    def _apply_environment(self) -> None:
        load_dotenv()
        level = os.getenv("TCC_AUDIT_LOG_LEVEL")
        if level:
            self.logging.level = level.upper()
        log_file = os.getenv("TCC_AUDIT_LOG_FILE")
        if log_file:
            self.logging.log_file = log_file
            self.logging.log_to_file = True
        out_dir = os.getenv("TCC_AUDIT_OUT_DIR")
        if out_dir:
            self.output.out_dir = out_dir
            self.output.data_dir = os.path.join(out_dir, "data")

    def sections(self) -> Dict[str, Any]:
        return {name: getattr(self, name) for name in _SECTIONS}

    def load_from_file(self, config_path: str) -> None:
        """Load configuration from JSON file"""
        try:
            with open(config_path, "r") as f:
                data = json.load(f)
        except (OSError, json.JSONDecodeError) as e:
            raise ConfigurationError(f"Could not load config from {config_path}: {e}") from e

        if not isinstance(data, dict):
            raise ConfigurationError(f"{config_path}: top level must be an object")
        for section in data:
            if section not in _SECTIONS:
                raise ConfigurationError(f"{config_path}: unknown section {section!r}")

        for section, config_obj in self.sections().items():
            if section not in data:
                continue
            known = {f.name for f in fields(config_obj)}
            for key, value in data[section].items():
                if key in known:
                    setattr(config_obj, key, value)
                else:
                    # Logger may not be configured yet; keep this import local
                    from .logger import get_logger
                    get_logger(__name__).warning(f"Ignoring unknown config key {section}.{key}")

    def save_to_file(self, config_path: str) -> None:
        """Save configuration to JSON file"""
        with open(config_path, "w") as f:
            json.dump(self.to_dict(), f, indent=2, sort_keys=True)

    def to_dict(self) -> Dict[str, Any]:
        """Convert configuration to dictionary"""
        return {name: asdict(obj) for name, obj in self.sections().items()}


# Global config instance
_config = None


def get_config(config_path: Optional[str] = None) -> Config:
    """Get or create global config instance"""
    global _config
    if _config is None:
        _config = Config(config_path)
    return _config


def reset_config() -> None:
    """Reset global config (useful for testing)"""
    global _config
    _config = None
