from pathlib import Path
from typing import List, Optional

import click
import numpy as np

from app.core.settings import get_settings
from app.schemas.control import GainSet


def parse_gain_list(text: str, n_slaves: int, n_joints: int = 2) -> List[np.ndarray]:
    """'20' or '10,20,30' give k·I per slave; an entry 'a/b' gives diag(a, b)."""
    entries = [entry.strip() for entry in str(text).split(",") if entry.strip()]
    if not entries:
        raise click.BadParameter("gain list is empty")
    matrices = []
    for entry in entries:
        try:
            values = [float(part) for part in entry.split("/")]
        except ValueError:
            raise click.BadParameter(f"not a number: {entry}")
        if len(values) == 1:
            values = values * n_joints
        elif len(values) != n_joints:
            raise click.BadParameter(f"'{entry}' needs {n_joints} diagonal entries")
        matrices.append(np.diag(values))
    if len(matrices) == 1:
        matrices = matrices * n_slaves
    elif len(matrices) != n_slaves:
        raise click.BadParameter(f"expected 1 or {n_slaves} gain entries, got {len(matrices)}")
    return matrices


def get_gains(kp: str, kd: str, n_slaves: int, n_joints: int = 2) -> GainSet:
    return GainSet(
        kp=parse_gain_list(kp, n_slaves, n_joints),
        kd=parse_gain_list(kd, n_slaves, n_joints),
    )


def get_output_path(explicit: Optional[Path], filename: str) -> Path:
    """Explicit path, else the file name under TELEOP_OUTPUT_DIR or the working directory."""
    if explicit is not None:
        return Path(explicit)
    return get_settings().output_path(filename)
