from functools import cache

from core.config import ToolkitConfig, load_config
from core.paths import data_dir
from core.settings import Settings, read_settings


@cache
def settings() -> Settings:
    """Read and cache environment settings."""
    return read_settings()


@cache
def default_config() -> ToolkitConfig:
    """Load and cache the shipped default configuration."""
    return load_config(data_dir() / "default_config.toml")


def worker_count(config: ToolkitConfig) -> int:
    """Workers for batch jobs; the environment overrides the config file."""
    return settings().worker_count(config.workers)
