from pathlib import Path
from typing import Iterable, Union

from dotenv import dotenv_values

from app.core.exceptions import ConfigurationError
from app.core.logging import get_logger
from app.schemas.cli import CliConfig

logger = get_logger("config")


def normalize_key(key: str) -> str:
    return key.strip().lower().replace("-", "_")


def load_config_file(path: Union[str, Path], command: str, allowed_keys: Iterable[str]) -> CliConfig:
    """Parse a flat key=value file ('#' comments) into option defaults for a command."""
    path = Path(path)
    if not path.is_file():
        raise ConfigurationError(f"config file not found: {path}")
    allowed = set(allowed_keys)
    values = {}
    unknown = []
    for key, value in dotenv_values(path).items():
        name = normalize_key(key)
        if name not in allowed:
            unknown.append(key)
            continue
        if value is None:
            raise ConfigurationError(f"config key without a value: {key}", {"file": str(path)})
        values[name] = value
    if unknown:
        raise ConfigurationError(
            f"unknown config key(s) for '{command}': {', '.join(sorted(unknown))}",
            {"allowed": ", ".join(sorted(allowed))},
        )
    logger.info(f"Loaded {len(values)} option(s) for '{command}' from {path}")
    return CliConfig(command=command, values=values, source=path)
