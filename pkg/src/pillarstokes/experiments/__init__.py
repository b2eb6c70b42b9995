"""Configuration, pipeline and study runners for the validation experiments."""
from .config import ConfigError, ExperimentConfig, Study, defaults, load_config
from .studies import StudyResult, run_study

__all__ = ["ConfigError", "ExperimentConfig", "Study", "StudyResult", "defaults", "load_config", "run_study"]
