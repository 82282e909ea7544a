"""Core geometry, simulation and learning library."""

__version__ = "0.1.0"

from .config import ToolkitConfig, load_config
from .dependencies import default_config, settings

__all__ = [
    "ToolkitConfig",
    "__version__",
    "default_config",
    "load_config",
    "settings",
]
