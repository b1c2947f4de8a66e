from pathlib import Path
from typing import Dict, Optional

from pydantic import BaseModel


class CliConfig(BaseModel):
    """Option defaults for one command, read from a key=value file."""

    command: str
    values: Dict[str, str]
    source: Optional[Path] = None
