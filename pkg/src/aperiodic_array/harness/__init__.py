from .config import ConfigError, ExperimentSpec, PatternSettings, Recipe, parse_config, validate_config
from .recipes import derive_seed, run

__all__ = [
    "ConfigError",
    "ExperimentSpec",
    "PatternSettings",
    "Recipe",
    "derive_seed",
    "parse_config",
    "run",
    "validate_config",
]
