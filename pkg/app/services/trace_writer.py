import csv
from pathlib import Path
from typing import Iterable, List, Sequence, Union

import numpy as np

from app.core.logging import get_logger
from app.schemas.simulation import SimTrace

logger = get_logger("trace_writer")


def format_value(value) -> str:
    """Floats with 17 significant digits; everything else as text."""
    if isinstance(value, (float, np.floating)):
        return format(float(value), ".17g")
    if isinstance(value, (bool, np.bool_)):
        return "1" if value else "0"
    return str(value)


def write_csv(path: Union[str, Path], header: Sequence[str], rows: Iterable[Sequence]) -> Path:
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    with path.open("w", newline="") as handle:
        writer = csv.writer(handle, lineterminator="\n")
        writer.writerow(header)
        for row in rows:
            writer.writerow([format_value(value) for value in row])
    return path


def write_trace_csv(trace: SimTrace, path: Union[str, Path]) -> Path:
    """Write a trace with its header row."""
    path = write_csv(path, trace.columns, trace.data)
    logger.info(f"Wrote {trace.data.shape[0]} rows to {path}")
    return path


def read_trace_csv(path: Union[str, Path]) -> List[List[str]]:
    with Path(path).open(newline="") as handle:
        return list(csv.reader(handle))
