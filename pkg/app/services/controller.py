"""P+d master and slave laws with gravity compensation.

Slaves transmit formation-corrected positions q̌_si = q_si − γ_i, so the
master-side registers already hold q̌ and the master never needs γ_i.
"""

import numpy as np

from app.core.exceptions import DimensionError, ValidationError
from app.core.logging import get_logger
from app.schemas.control import FormationGeometry, GainSet

logger = get_logger("controller")


def _check_slaves(gains: GainSet, formation: FormationGeometry) -> None:
    if gains.n_slaves != formation.n_slaves:
        raise DimensionError(
            "gains and formation disagree on the slave count",
            {"gains": gains.n_slaves, "formation": formation.n_slaves},
        )


def master_control(
    gains: GainSet,
    formation: FormationGeometry,
    q_m,
    dq_m,
    held_slave_positions,
    gravity_comp,
) -> np.ndarray:
    """τ_m = −(1/N) Σ_i [K_i^p (q_m − q̂_si) + K_i^d q̇_m] + G_m(q_m)."""
    _check_slaves(gains, formation)
    q_m = np.asarray(q_m, dtype=float)
    dq_m = np.asarray(dq_m, dtype=float)
    held = np.asarray(held_slave_positions, dtype=float)
    if held.shape != (gains.n_slaves, gains.n_joints):
        raise DimensionError(
            "one held position per slave is required",
            {"held": held.shape, "expected": (gains.n_slaves, gains.n_joints)},
        )
    errors = q_m[None, :] - held
    coupling = np.einsum("kij,kj->i", gains.kp, errors)
    damping = np.einsum("kij,j->i", gains.kd, dq_m)
    return -(coupling + damping) / gains.n_slaves + np.asarray(gravity_comp, dtype=float)


def slave_control(
    gains: GainSet,
    formation: FormationGeometry,
    i: int,
    q_si,
    dq_si,
    held_master_position,
    gravity_comp,
) -> np.ndarray:
    """τ_si = −K_i^p (q̌_si − q̂_m) − K_i^d q̇_si + G_si(q_si), slave index i from 1."""
    _check_slaves(gains, formation)
    if not 1 <= i <= gains.n_slaves:
        raise ValidationError(
            "slave index out of range", {"index": i, "slaves": gains.n_slaves}
        )
    corrected = np.asarray(q_si, dtype=float) - formation.offsets[i - 1]
    error = corrected - np.asarray(held_master_position, dtype=float)
    return (
        -gains.kp[i - 1] @ error
        - gains.kd[i - 1] @ np.asarray(dq_si, dtype=float)
        + np.asarray(gravity_comp, dtype=float)
    )


def slave_controls(
    gains: GainSet,
    formation: FormationGeometry,
    q_s,
    dq_s,
    held_master_positions,
    gravity_comp,
) -> np.ndarray:
    """slave_control for all slaves at once; held_master_positions is (N, n) or (n,)."""
    corrected = formation.corrected(q_s)
    held = np.broadcast_to(np.asarray(held_master_positions, dtype=float), corrected.shape)
    return (
        -np.einsum("kij,kj->ki", gains.kp, corrected - held)
        - np.einsum("kij,kj->ki", gains.kd, np.asarray(dq_s, dtype=float))
        + np.asarray(gravity_comp, dtype=float)
    )
