"""
Configuration settings for ScoreAG.

This module handles process-level configuration values (environment, logging,
worker fan-out, error reporting) loaded from environment variables or a
``.env`` file. Experiment parameters live in the JSON run document described
by ``scoreag.schemas.config.RunConfig``.
"""

import logging
import os
from enum import Enum
from typing import Any, Optional

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class EnvironmentType(str, Enum):
    DEVELOPMENT = "development"
    TEST = "test"
    PRODUCTION = "production"


class LogFormat(str, Enum):
    TEXT = "text"
    JSON = "json"


class LogLevel(str, Enum):
    DEBUG = "DEBUG"
    INFO = "INFO"
    WARNING = "WARNING"
    ERROR = "ERROR"
    CRITICAL = "CRITICAL"


def _clean(value: str) -> str:
    # Strip inline comments and whitespace
    return value.split("#")[0].strip()


class Settings(BaseSettings):
    """Process settings shared by every command."""

    model_config = SettingsConfigDict(
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=True,
        extra="ignore",
    )

    PROJECT_NAME: str = "ScoreAG"
    ENVIRONMENT: EnvironmentType = EnvironmentType.DEVELOPMENT

    # Logging settings
    LOG_LEVEL: LogLevel = LogLevel.INFO
    LOG_FORMAT: LogFormat = LogFormat.TEXT

    # Fan-out for dataset-wide task runs; 1 keeps everything in-thread
    WORKERS: int = Field(default=1, ge=1)
    PROGRESS_BARS: bool = True

    SENTRY_DSN: Optional[str] = None

    @field_validator("ENVIRONMENT", mode="before")
    @classmethod
    def validate_environment(cls, v: Any) -> Any:
        if isinstance(v, str):
            v = _clean(v).lower()
            try:
                return EnvironmentType(v)
            except ValueError:
                logging.warning(f"Invalid environment value: '{v}'. Falling back to development.")
                return EnvironmentType.DEVELOPMENT
        return v

    @field_validator("LOG_LEVEL", mode="before")
    @classmethod
    def validate_log_level(cls, v: Any) -> Any:
        if isinstance(v, str):
            v = _clean(v).upper()
            try:
                return LogLevel(v)
            except ValueError:
                logging.warning(f"Invalid log level value: '{v}'. Falling back to INFO.")
                return LogLevel.INFO
        return v

    @field_validator("LOG_FORMAT", mode="before")
    @classmethod
    def validate_log_format(cls, v: Any) -> Any:
        if isinstance(v, str):
            v = _clean(v).lower()
            try:
                return LogFormat(v)
            except ValueError:
                logging.warning(f"Invalid log format value: '{v}'. Falling back to TEXT.")
                return LogFormat.TEXT
        return v

    @field_validator("PROGRESS_BARS", mode="before")
    @classmethod
    def validate_progress_bars(cls, v: Any) -> Any:
        if isinstance(v, str):
            v = _clean(v).lower()
            if v in ("true", "yes", "1", "t", "y"):
                return True
            if v in ("false", "no", "0", "f", "n"):
                return False
            logging.warning(f"Invalid progress bars value: '{v}'. Falling back to True.")
            return True
        return v

    @field_validator("SENTRY_DSN", mode="before")
    @classmethod
    def validate_sentry_dsn(cls, v: Any) -> Any:
        if isinstance(v, str):
            v = _clean(v)
            return v or None
        return v

    @property
    def IS_TEST(self) -> bool:
        return self.ENVIRONMENT == EnvironmentType.TEST

    @property
    def show_progress(self) -> bool:
        """Progress bars are off under test and when disabled explicitly."""
        return self.PROGRESS_BARS and not self.IS_TEST


def get_settings() -> Settings:
    """
    Load settings from the environment.

    Falls back to defaults (with a warning) if the environment holds values
    pydantic cannot coerce, so a malformed ``.env`` never blocks a run.
    """
    try:
        return Settings()
    except Exception as e:
        logging.error(f"Failed to load settings: {str(e)}")
        if os.getenv("ENVIRONMENT", "").strip().lower() == EnvironmentType.PRODUCTION.value:
            raise
        logging.warning("Falling back to default settings")
        return Settings.model_construct()


settings = get_settings()
