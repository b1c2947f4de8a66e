from functools import lru_cache
from pathlib import Path
from typing import Optional

from pydantic import Field
from pydantic_settings import BaseSettings, SettingsConfigDict


class Settings(BaseSettings):
    """Application settings."""

    model_config = SettingsConfigDict(env_file=".env", extra="ignore")

    # CLI Configuration
    APP_TITLE: str = "teleop-scheduling"
    APP_DESCRIPTION: str = (
        "Simulation and stability analysis of single-master/multi-slave "
        "teleoperation over a scheduled network"
    )
    APP_VERSION: str = "1.0"

    # Output Configuration
    OUTPUT_DIR: Optional[Path] = Field(default=None, alias="TELEOP_OUTPUT_DIR")

    def output_path(self, filename: str) -> Path:
        """Resolve a file name against the configured output directory."""
        base = self.OUTPUT_DIR if self.OUTPUT_DIR is not None else Path.cwd()
        return Path(base) / filename


@lru_cache()
def get_settings():
    """Create cached settings instance."""
    return Settings()
