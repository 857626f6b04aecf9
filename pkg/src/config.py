"""
Handles process configuration by loading settings from environment variables.

This module uses Pydantic's BaseSettings to define, validate, and access
configuration values. Run hyperparameters are not configured here; they
travel with each run as a `TrainConfig` (see `domain.models`).
"""

import logging
from pathlib import Path
from typing import Any

from dotenv import load_dotenv
from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

log = logging.getLogger(__name__)
load_dotenv()

LOG_LEVELS = {
    "quiet": logging.WARNING,
    "info": logging.INFO,
    "debug": logging.DEBUG,
}


class Settings(BaseSettings):
    """Parses and validates process settings from `NMF_`-prefixed environment variables."""

    LOG_LEVEL: str = "info"
    OUTPUT_DIR: str = "runs"
    SCORING_CHUNK: int = Field(64, ge=1)

    @field_validator("LOG_LEVEL", mode="before")
    @classmethod
    def _parse_log_level(cls, v: Any) -> str:
        """Normalize the verbosity name, falling back to 'info' for unknown values."""
        if v is None:
            return "info"
        level = str(v).strip().lower()
        if level not in LOG_LEVELS:
            log.warning(f"Unknown NMF_LOG_LEVEL='{v}'; using 'info'.")
            return "info"
        return level

    @property
    def logging_level(self) -> int:
        return LOG_LEVELS[self.LOG_LEVEL]

    @property
    def output_dir_path(self) -> Path:
        """Return the default output directory, creating it if it doesn't exist."""
        path = Path(self.OUTPUT_DIR)
        path.mkdir(parents=True, exist_ok=True)
        return path

    model_config = SettingsConfigDict(
        env_prefix="NMF_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )


settings = Settings()
