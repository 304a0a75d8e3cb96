"""Config package - Environment settings and experiment configuration."""

from src.config.experiment import ExperimentConfig, load_experiment_config
from src.config.settings import Settings, get_settings

__all__ = [
    "ExperimentConfig",
    "Settings",
    "get_settings",
    "load_experiment_config",
]
