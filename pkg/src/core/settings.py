"""
Process-level settings read from the environment.

A ``.env`` file in the working directory (or the repository root) is honoured.

Environment Variables:
- AOGRASP_THREADS: worker count for batch jobs; overrides ``workers`` in the
  config file when set.
- AOGRASP_LOG_LEVEL: logging level name (default INFO).
"""

import os
from typing import Literal

from dotenv import load_dotenv
from pydantic import BaseModel, ConfigDict, Field

from core.errors import InvalidParameterError
from core.paths import root

THREADS_ENV = "AOGRASP_THREADS"
LOG_LEVEL_ENV = "AOGRASP_LOG_LEVEL"
LOG_LEVELS = ("DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL")


class Settings(BaseModel):
    model_config = ConfigDict(frozen=True)

    threads: int | None = Field(default=None, ge=1)
    log_level: Literal["DEBUG", "INFO", "WARNING", "ERROR", "CRITICAL"] = "INFO"

    def worker_count(self, configured: int) -> int:
        return self.threads if self.threads is not None else configured


def _parse_threads(value: str) -> int | None:
    if not value:
        return None
    try:
        threads = int(value)
    except ValueError:
        raise InvalidParameterError(
            f"{THREADS_ENV} must be a positive integer, got {value!r}"
        ) from None
    if threads < 1:
        raise InvalidParameterError(
            f"{THREADS_ENV} must be a positive integer, got {value!r}"
        )
    return threads


def _parse_log_level(value: str) -> str:
    level = value.upper() or "INFO"
    if level not in LOG_LEVELS:
        raise InvalidParameterError(
            f"{LOG_LEVEL_ENV} must be one of {', '.join(LOG_LEVELS)}, got {value!r}"
        )
    return level


def read_settings() -> Settings:
    """
    Settings from the environment.

    Raises:
        InvalidParameterError: A variable is set to an unusable value.
    """
    _ = load_dotenv()
    _ = load_dotenv(root() / ".env")
    return Settings(
        threads=_parse_threads(os.environ.get(THREADS_ENV, "").strip()),
        log_level=_parse_log_level(os.environ.get(LOG_LEVEL_ENV, "").strip()),
    )
