"""Lyapunov-Krasovskii functionals evaluated on a recorded trajectory."""

from typing import Dict, Optional, Tuple

import numpy as np

from app.core.exceptions import DimensionError, InsufficientHistoryError
from app.core.logging import get_logger
from app.schemas.network import TIME_TOL, Protocol
from app.schemas.simulation import SimConfig, TodInterval
from app.schemas.stability import LmiVariablesRR, LmiVariablesTOD
from app.services.manipulator import mass_matrix
from app.services.network import delay_horizons

logger = get_logger("lyapunov")


class History:
    """Growable record of (t, q, dq) for all arms, one entry per integration step."""

    def __init__(self, t0: float, q0, dq0, horizon: float):
        q0 = np.asarray(q0, dtype=float)
        dq0 = np.asarray(dq0, dtype=float)
        if q0.shape != dq0.shape:
            raise DimensionError("q and dq must have equal shapes")
        capacity = 1024
        self._times = np.empty(capacity)
        self._q = np.empty((capacity,) + q0.shape)
        self._dq = np.empty((capacity,) + q0.shape)
        self._size = 0
        # Constant initial function on [t0 - horizon, t0]
        if horizon > 0.0:
            self.append(t0 - horizon, q0, np.zeros_like(dq0))
        self.append(t0, q0, dq0)

    def append(self, t: float, q, dq) -> None:
        if self._size == self._times.shape[0]:
            grow = self._times.shape[0]
            self._times = np.concatenate([self._times, np.empty(grow)])
            self._q = np.concatenate([self._q, np.empty_like(self._q[:grow])])
            self._dq = np.concatenate([self._dq, np.empty_like(self._dq[:grow])])
        self._times[self._size] = t
        self._q[self._size] = q
        self._dq[self._size] = dq
        self._size += 1

    @property
    def times(self) -> np.ndarray:
        return self._times[: self._size]

    @property
    def q(self) -> np.ndarray:
        return self._q[: self._size]

    @property
    def dq(self) -> np.ndarray:
        return self._dq[: self._size]

    def _check_range(self, t: float) -> None:
        times = self.times
        if t < times[0] - TIME_TOL or t > times[-1] + TIME_TOL:
            raise InsufficientHistoryError(
                "requested time lies outside the recorded history",
                {"t": t, "recorded": (float(times[0]), float(times[-1]))},
            )

    def at(self, t: float) -> Tuple[np.ndarray, np.ndarray]:
        """(q, dq) at t, linearly interpolated between recorded steps."""
        self._check_range(t)
        times = self.times
        j = int(np.searchsorted(times, t - TIME_TOL))
        j = min(j, self._size - 1)
        if abs(times[j] - t) <= TIME_TOL or j == 0:
            return self.q[j], self.dq[j]
        w = (t - times[j - 1]) / (times[j] - times[j - 1])
        return (
            (1.0 - w) * self.q[j - 1] + w * self.q[j],
            (1.0 - w) * self.dq[j - 1] + w * self.dq[j],
        )

    def velocity_segment(self, t_start: float, t_end: float) -> Tuple[np.ndarray, np.ndarray]:
        """Times and velocities on [t_start, t_end], endpoints included."""
        self._check_range(t_start)
        self._check_range(t_end)
        times = self.times
        i0 = int(np.searchsorted(times, t_start + TIME_TOL, side="left"))
        i1 = int(np.searchsorted(times, t_end - TIME_TOL, side="right"))
        inner_t = times[i0:i1]
        inner_dq = self.dq[i0:i1]
        _, dq_start = self.at(t_start)
        _, dq_end = self.at(t_end)
        seg_t = np.concatenate([[t_start], inner_t, [t_end]])
        seg_dq = np.concatenate([dq_start[None], inner_dq, dq_end[None]])
        return seg_t, seg_dq


def _quadratic(x: np.ndarray, weights: np.ndarray) -> np.ndarray:
    """x_kᵀ W_k x_k over the last two axes, broadcasting leading axes."""
    return np.einsum("...ki,kij,...kj->...k", x, weights, x)


def delay_window_energy(history: History, t: float, horizon: float, arms: slice, weights: np.ndarray) -> np.ndarray:
    """∫_{t−h}^{t} (s − t + h) q̇ᵀ R q̇ ds per arm, the double integral ∫_{−h}^0 ∫_{t+θ}^t."""
    seg_t, seg_dq = history.velocity_segment(t - horizon, t)
    integrand = (seg_t - t + horizon)[:, None] * _quadratic(seg_dq[:, arms], weights)
    return np.trapezoid(integrand, seg_t, axis=0)


def _synchronization_terms(config: SimConfig, q: np.ndarray, dq: np.ndarray) -> Tuple[float, float]:
    n_slaves = config.n_slaves
    mass = mass_matrix(config.params, q)
    kinetic = np.einsum("ki,kij,kj->k", dq, mass, dq)
    v1 = n_slaves * kinetic[0] + kinetic[1:].sum()
    errors = q[0][None, :] - config.formation.corrected(q[1:])
    v2 = _quadratic(errors, config.gains.kp).sum()
    return float(v1), float(v2)


def _functional_v(
    config: SimConfig, history: History, t: float, variables: LmiVariablesRR, h_m: float, h_s: float
) -> Dict[str, float]:
    q, dq = history.at(t)
    v1, v2 = _synchronization_terms(config, q, dq)
    master = delay_window_energy(history, t, h_m, slice(0, 1), variables.r_m[None])
    slaves = delay_window_energy(history, t, h_s, slice(1, None), variables.r_s)
    v3 = config.n_slaves * float(master.sum()) + float(slaves.sum())
    return {"V1": v1, "V2": v2, "V3": v3}


def lyapunov_v_rr(
    config: SimConfig,
    history: History,
    t: float,
    variables: LmiVariablesRR,
    horizons: Optional[Tuple[float, float]] = None,
) -> float:
    """V = V1 + V2 + V3 of the round-robin loop at time t."""
    h_m, h_s = horizons or delay_horizons(
        config.n_slaves, config.schedule.mati, config.schedule.mad, Protocol.RR
    )
    return sum(_functional_v(config, history, t, variables, h_m, h_s).values())


def tod_terms(
    config: SimConfig,
    history: History,
    t: float,
    variables: LmiVariablesTOD,
    interval: TodInterval,
    h_m: Optional[float] = None,
) -> Dict[str, float]:
    """Individual terms of V_e; both delay horizons are h_M."""
    if h_m is None:
        h_m, _ = delay_horizons(config.n_slaves, config.schedule.mati, config.schedule.mad, Protocol.TOD)
    terms = _functional_v(config, history, t, variables, h_m, h_m)

    seg_t, seg_dq = history.velocity_segment(interval.sampled_at, t)
    terms["VG"] = h_m * float(np.trapezoid(_quadratic(seg_dq[:, 1:], variables.g), seg_t, axis=0).sum())

    eta = interval.eta
    terms["eta"] = float(_quadratic(eta, variables.q).sum())
    span = interval.next_arrival - interval.arrives_at
    ratio = (interval.arrives_at - t) / span if span > TIME_TOL else 0.0
    weighted = _quadratic(eta, variables.u)
    weighted[interval.index - 1] = 0.0
    terms["We"] = ratio * float(weighted.sum())
    return terms


def lyapunov_ve_tod(
    config: SimConfig,
    history: History,
    t: float,
    variables: LmiVariablesTOD,
    interval: TodInterval,
    h_m: Optional[float] = None,
) -> float:
    """V_e = V + V_G + Σ ηᵀQη + W_e of the TOD loop at t in [t_k, t_{k+1}]."""
    return sum(tod_terms(config, history, t, variables, interval, h_m).values())
