import math
from typing import Callable, Iterator, Tuple

import numpy as np

from app.core.exceptions import ValidationError

RightHandSide = Callable[[float, np.ndarray], np.ndarray]


def rk4_step(rhs: RightHandSide, t: float, x: np.ndarray, h: float) -> np.ndarray:
    """One classical 4th-order Runge-Kutta step of size h."""
    k1 = rhs(t, x)
    k2 = rhs(t + 0.5 * h, x + 0.5 * h * k1)
    k3 = rhs(t + 0.5 * h, x + 0.5 * h * k2)
    k4 = rhs(t + h, x + h * k3)
    return x + (h / 6.0) * (k1 + 2.0 * k2 + 2.0 * k3 + k4)


def substeps(t0: float, t1: float, max_step: float) -> int:
    """Number of equal substeps no longer than max_step that cover [t0, t1]."""
    if max_step <= 0.0:
        raise ValidationError("step must be positive", {"step": max_step})
    span = t1 - t0
    if span <= 0.0:
        return 0
    # Absorb round-off so an exact multiple does not gain an extra step
    return max(1, math.ceil(span / max_step - 1e-9))


def integrate(
    rhs: RightHandSide, t0: float, t1: float, x0: np.ndarray, max_step: float
) -> Iterator[Tuple[float, np.ndarray]]:
    """Yield (t, x) after every step of a fixed-step RK4 march from t0 to t1.

    The last yielded time is exactly t1.
    """
    n_steps = substeps(t0, t1, max_step)
    if n_steps == 0:
        return
    h = (t1 - t0) / n_steps
    x = np.asarray(x0, dtype=float)
    for j in range(1, n_steps + 1):
        t = t0 + (j - 1) * h
        x = rk4_step(rhs, t, x, h)
        yield (t1 if j == n_steps else t0 + j * h), x
