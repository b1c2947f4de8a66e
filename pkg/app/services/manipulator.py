"""Closed-form dynamics and kinematics of the 2-link planar arm.

Every function accepts joint vectors with arbitrary leading dimensions, so a
stack of arms of shape (A, 2) is handled in one call. ``params`` is then
either one ``ManipulatorParams`` shared by all arms or a sequence with one
entry per arm.
"""

from typing import Sequence, Tuple, Union

import numpy as np

from app.core.exceptions import DimensionError, ModelError
from app.core.logging import get_logger
from app.schemas.manipulator import ManipulatorParams, ManipulatorState

logger = get_logger("manipulator")

ParamsLike = Union[ManipulatorParams, Sequence[ManipulatorParams]]

N_JOINTS = 2


def _link_constants(params: ParamsLike) -> Tuple[np.ndarray, ...]:
    if isinstance(params, ManipulatorParams):
        params = [params]
        squeeze = True
    else:
        squeeze = False
    m1 = np.array([p.link_masses[0] for p in params])
    m2 = np.array([p.link_masses[1] for p in params])
    l1 = np.array([p.link_lengths[0] for p in params])
    l2 = np.array([p.link_lengths[1] for p in params])
    g = np.array([p.gravity for p in params])
    if squeeze:
        return m1[0], m2[0], l1[0], l2[0], g[0]
    return m1, m2, l1, l2, g


def _joint_vector(value, name: str = "q") -> np.ndarray:
    vector = np.asarray(value, dtype=float)
    if vector.ndim < 1 or vector.shape[-1] != N_JOINTS:
        raise DimensionError(
            f"{name} must have {N_JOINTS} joint entries",
            {name: vector.shape},
        )
    return vector


def mass_matrix(params: ParamsLike, q) -> np.ndarray:
    """Inertia matrix M(q), symmetric positive definite."""
    q = _joint_vector(q)
    m1, m2, l1, l2, _ = _link_constants(params)
    c2 = np.cos(q[..., 1])
    m22 = l2**2 * m2 * np.ones_like(c2)
    m12 = l2**2 * m2 + l1 * l2 * m2 * c2
    m11 = l2**2 * m2 + l1**2 * (m1 + m2) + 2.0 * l1 * l2 * m2 * c2
    return np.stack(
        [np.stack([m11, m12], axis=-1), np.stack([m12, m22], axis=-1)], axis=-2
    )


def coriolis_matrix(params: ParamsLike, q, dq) -> np.ndarray:
    """Coriolis/centrifugal matrix C(q, q̇) with Ṁ − 2C skew-symmetric."""
    q = _joint_vector(q)
    dq = _joint_vector(dq, "dq")
    if q.shape != dq.shape:
        raise DimensionError("q and dq must have equal shapes", {"q": q.shape, "dq": dq.shape})
    _, m2, l1, l2, _ = _link_constants(params)
    h = l1 * l2 * m2 * np.sin(q[..., 1])
    c11 = -h * dq[..., 1]
    c12 = -h * (dq[..., 0] + dq[..., 1])
    c21 = h * dq[..., 0]
    c22 = np.zeros_like(c11)
    return np.stack(
        [np.stack([c11, c12], axis=-1), np.stack([c21, c22], axis=-1)], axis=-2
    )


def gravity_vector(params: ParamsLike, q) -> np.ndarray:
    """Gravity torques G(q) (N·m)."""
    q = _joint_vector(q)
    m1, m2, l1, l2, g = _link_constants(params)
    c1 = np.cos(q[..., 0])
    c12 = np.cos(q[..., 0] + q[..., 1])
    # Second term of G1 kept in its composite form, with g applied
    g2 = (1.0 / l2) * g * l2**2 * m2 * c12
    g1 = g2 + (1.0 / l1) * (l2**2 * m2 + l1**2 * (m1 + m2) - l2**2 * m2) * g * c1
    return np.stack([g1, g2], axis=-1)


def forward_dynamics(
    params: ParamsLike,
    state: ManipulatorState,
    applied_torque,
    external_force=None,
) -> np.ndarray:
    """Joint accelerations q̈ = M⁻¹(f + τ − C q̇ − G) for one arm."""
    return accelerations(params, state.q, state.dq, applied_torque, external_force)


def accelerations(params: ParamsLike, q, dq, applied_torque, external_force=None) -> np.ndarray:
    """Batched forward dynamics on raw (…, 2) arrays."""
    q = _joint_vector(q)
    dq = _joint_vector(dq, "dq")
    tau = _joint_vector(applied_torque, "applied_torque")
    force = np.zeros_like(tau) if external_force is None else _joint_vector(external_force, "external_force")
    if not (q.shape == dq.shape == tau.shape == force.shape):
        raise DimensionError(
            "state, torque and force shapes disagree",
            {"q": q.shape, "dq": dq.shape, "torque": tau.shape, "force": force.shape},
        )
    mass = mass_matrix(params, q)
    coriolis = coriolis_matrix(params, q, dq)
    rhs = force + tau - np.einsum("...ij,...j->...i", coriolis, dq) - gravity_vector(params, q)
    try:
        factor = np.linalg.cholesky(mass)
    except np.linalg.LinAlgError as e:
        raise ModelError("mass matrix is not positive definite", {"q": q.tolist()}) from e
    y = np.linalg.solve(factor, rhs[..., None])
    return np.linalg.solve(np.swapaxes(factor, -1, -2), y)[..., 0]


def end_effector(params: ParamsLike, q) -> np.ndarray:
    """Planar end-effector position (x, y) in metres."""
    q = _joint_vector(q)
    _, _, l1, l2, _ = _link_constants(params)
    q12 = q[..., 0] + q[..., 1]
    x = l1 * np.cos(q[..., 0]) + l2 * np.cos(q12)
    y = l1 * np.sin(q[..., 0]) + l2 * np.sin(q12)
    return np.stack([x, y], axis=-1)


def jacobian(params: ParamsLike, q) -> np.ndarray:
    """Jacobian of end_effector with respect to q."""
    q = _joint_vector(q)
    _, _, l1, l2, _ = _link_constants(params)
    s1, c1 = np.sin(q[..., 0]), np.cos(q[..., 0])
    s12, c12 = np.sin(q[..., 0] + q[..., 1]), np.cos(q[..., 0] + q[..., 1])
    j11 = -l1 * s1 - l2 * s12
    j12 = -l2 * s12
    j21 = l1 * c1 + l2 * c12
    j22 = l2 * c12
    return np.stack(
        [np.stack([j11, j12], axis=-1), np.stack([j21, j22], axis=-1)], axis=-2
    )


def kinetic_energy(params: ParamsLike, q, dq) -> np.ndarray:
    """½ q̇ᵀ M(q) q̇."""
    mass = mass_matrix(params, q)
    dq = _joint_vector(dq, "dq")
    return 0.5 * np.einsum("...i,...ij,...j->...", dq, mass, dq)
