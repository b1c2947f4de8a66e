from typing import Optional, Tuple

import numpy as np

from app.core.exceptions import ValidationError
from app.core.logging import get_logger
from app.schemas.simulation import SimTrace, SteadyStateMetrics

logger = get_logger("metrics")


def _tail_mask(t: np.ndarray, tail_fraction: float, window: Optional[Tuple[float, float]]) -> np.ndarray:
    if window is not None:
        start, end = window
        return (t >= start) & (t <= end)
    if not 0.0 < tail_fraction <= 1.0:
        raise ValidationError("tail fraction must lie in (0, 1]", {"tail_fraction": tail_fraction})
    start = t[-1] - tail_fraction * (t[-1] - t[0])
    return t >= start


def steady_state_metrics(
    trace: SimTrace,
    tail_fraction: float = 0.1,
    window: Optional[Tuple[float, float]] = None,
) -> SteadyStateMetrics:
    """Synchronisation, force-reflection and rest metrics over the end of a run."""
    if trace.data.shape[0] == 0:
        raise ValidationError("trace is empty")
    mask = _tail_mask(trace.t, tail_fraction, window)
    if not mask.any():
        raise ValidationError("no trace rows in the requested window", {"window": window})

    n_slaves = int(trace.metadata.get("n_slaves", trace.block("eta").shape[1]))
    q_m = trace.block("qm")[mask]
    n_joints = q_m.shape[1]
    q_s = trace.block("qs")[mask].reshape(-1, n_slaves, n_joints)
    offsets = np.asarray(trace.metadata.get("offsets", np.zeros((n_slaves, n_joints))))

    errors = np.linalg.norm(q_m[:, None, :] - (q_s - offsets[None]), axis=2)
    velocities = np.hstack([trace.block("dqm")[mask], trace.block("dqs")[mask]])

    f_m = trace.block("fm")[mask]
    f_s = trace.block("fs")[mask].reshape(-1, n_slaves, n_joints)
    residual = np.abs(f_m + f_s.mean(axis=1))
    center_error = np.linalg.norm(q_m - q_s.mean(axis=1), axis=1)

    return SteadyStateMetrics(
        mean_position_error=errors.mean(axis=0).tolist(),
        max_position_error=float(errors.max()),
        mean_force_residual=residual.mean(axis=0).tolist(),
        mean_master_force=np.abs(f_m).mean(axis=0).tolist(),
        max_velocity=float(np.abs(velocities).max()),
        formation_center_error=float(center_error.mean()),
        samples=int(mask.sum()),
    )
