"""
afd-explorer - Configuration Management

Uses pydantic-settings for environment variable management with validation.
"""
import logging
from functools import lru_cache
from pathlib import Path
from typing import List, Optional

from pydantic import field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict

LOG_FORMAT = "%(levelname)-5.5s [%(name)s] %(message)s"

BUNDLED_SCENARIO_DIR = Path(__file__).resolve().parent.parent / "scenarios"


class Settings(BaseSettings):
    """Application settings loaded from AFDX_* environment variables."""

    model_config = SettingsConfigDict(
        env_prefix="AFDX_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    # Application
    app_name: str = "afd-explorer"
    app_env: str = "development"

    # Logging
    log_level: str = "INFO"

    # Evaluation
    threads: int = 1
    max_configs: int = 200_000
    cost_source: str = "analytical"
    calibration_table: Optional[Path] = None

    # Files
    output_dir: Path = Path("results")
    scenario_dir: Path = BUNDLED_SCENARIO_DIR

    # HTTP service
    cors_origins: List[str] = ["http://localhost:3000"]

    @field_validator("cors_origins", mode="before")
    @classmethod
    def parse_cors_origins(cls, v):
        if isinstance(v, str):
            return [item.strip() for item in v.split(",") if item.strip()]
        return v

    @field_validator("threads")
    @classmethod
    def at_least_one_thread(cls, v: int) -> int:
        return max(1, v)


@lru_cache()
def get_settings() -> Settings:
    """Get cached settings instance."""
    return Settings()


def configure_logging(level: str | None = None) -> None:
    """Install the console handler used by the CLI and the HTTP service."""
    logging.basicConfig(
        level=(level or get_settings().log_level).upper(),
        format=LOG_FORMAT,
        force=True,
    )
