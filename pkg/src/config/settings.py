"""Application Settings - Pydantic Settings for environment configuration."""

from functools import lru_cache
from typing import Literal

from pydantic import Field, field_validator
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Process-wide settings loaded from environment variables.

    All settings are read from a .env file or STF_-prefixed environment
    variables. Experiment parameters live in the JSON experiment config,
    not here.
    """

    log_level: Literal["debug", "info", "warn"] = "info"

    # Intra-op threads for torch; 1 keeps reductions bit-reproducible
    torch_threads: int = Field(default=1, ge=1)

    # Wall-clock fields make artifacts differ between identical runs
    record_wall_time: bool = False

    model_config = SettingsConfigDict(
        env_prefix="STF_",
        env_file=".env",
        env_file_encoding="utf-8",
        case_sensitive=False,
        extra="ignore",
    )

    @field_validator("log_level", mode="before")
    @classmethod
    def normalize_level(cls, v: object) -> object:
        if isinstance(v, str):
            v = v.strip().lower()
            return "warn" if v == "warning" else v
        return v


@lru_cache
def get_settings() -> Settings:
    """Get cached settings instance.

    Uses lru_cache - settings are loaded once per process.
    """
    return Settings()
