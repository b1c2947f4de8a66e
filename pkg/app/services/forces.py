import numpy as np

from app.core.logging import get_logger
from app.schemas.manipulator import ManipulatorParams
from app.schemas.simulation import RectanglePulse
from app.services.manipulator import ParamsLike, end_effector, jacobian

logger = get_logger("forces")

VERTICAL = np.array([0.0, 1.0])


def _vertical_push(params: ParamsLike, q, magnitude) -> np.ndarray:
    """J(q)ᵀ [0, 1]ᵀ · magnitude, batched over leading dims."""
    transposed = np.swapaxes(jacobian(params, q), -1, -2)
    return np.einsum("...ij,j->...i", transposed, VERTICAL) * np.asarray(magnitude)[..., None]


def bounded_force(t: float) -> float:
    """F_1(t) = 25 + 10 sin t (N)."""
    return 25.0 + 10.0 * np.sin(t)


def human_force_scenario2(t: float, q_m, params: ManipulatorParams = ManipulatorParams()) -> np.ndarray:
    """Operator torque J_mᵀ [0, 1]ᵀ F_1(t) on the master."""
    return _vertical_push(params, q_m, bounded_force(t))


def rectangle_force_scenario3(t: float, pulse: RectanglePulse = RectanglePulse()) -> float:
    """Pulse F_2(t): amplitude on [t_on, t_off), zero elsewhere (N)."""
    return pulse.amplitude if pulse.t_on <= t < pulse.t_off else 0.0


def human_force_scenario3(
    t: float, q_m, params: ManipulatorParams = ManipulatorParams(), pulse: RectanglePulse = RectanglePulse()
) -> np.ndarray:
    """Operator torque J_mᵀ [0, 1]ᵀ F_2(t) on the master."""
    return _vertical_push(params, q_m, rectangle_force_scenario3(t, pulse))


def wall_contact_force(
    params: ParamsLike, q_si, wall_height: float = 0.3, stiffness: float = 10000.0
) -> np.ndarray:
    """Unilateral penalty −J_sᵀ [0, 1]ᵀ k (y − wall) when the end-effector is above the wall."""
    y = end_effector(params, q_si)[..., 1]
    penetration = np.where(y > wall_height, y - wall_height, 0.0)
    return -_vertical_push(params, q_si, stiffness * penetration)
