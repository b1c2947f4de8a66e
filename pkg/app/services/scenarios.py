"""Default arms, gains and initial conditions of the reference set-up."""

from typing import List, Optional

import numpy as np

from app.schemas.control import FormationGeometry, GainSet
from app.schemas.manipulator import ManipulatorParams, ManipulatorState
from app.schemas.network import Protocol, SamplingSchedule
from app.schemas.simulation import RectanglePulse, Scenario, ScenarioKind, SimConfig
from app.schemas.stability import LmiVariables

DEFAULT_GAIN = 20.0
DEFAULT_STEP = 1e-3
CONTACT_STEP = 1e-4
DEFAULT_DURATION = 20.0
CONTACT_DURATION = 34.0

FREE_MOTION_MASTER = (np.pi / 4, np.pi / 6)
FREE_MOTION_SLAVES = (
    (np.pi / 8, -np.pi / 4),
    (-np.pi / 4, np.pi / 8),
    (np.pi / 8, np.pi / 8),
)


def default_params(n_slaves: int) -> List[ManipulatorParams]:
    """Identical arms (m = [1, 0.5] kg, l = [0.5, 0.3] m) for the master and every slave."""
    return [ManipulatorParams() for _ in range(n_slaves + 1)]


def default_step(kind: ScenarioKind) -> float:
    return CONTACT_STEP if ScenarioKind(kind) == ScenarioKind.CONTACT else DEFAULT_STEP


def default_duration(kind: ScenarioKind) -> float:
    """Contact runs last until the pressed arms have settled on the wall."""
    return CONTACT_DURATION if ScenarioKind(kind) == ScenarioKind.CONTACT else DEFAULT_DURATION


def initial_states(kind: ScenarioKind, n_slaves: int) -> List[ManipulatorState]:
    """Free motion starts from the reference poses; the forced runs start at zero."""
    if ScenarioKind(kind) == ScenarioKind.FREE_MOTION:
        master = ManipulatorState.at_rest(FREE_MOTION_MASTER)
        slaves = [
            ManipulatorState.at_rest(FREE_MOTION_SLAVES[i % len(FREE_MOTION_SLAVES)])
            for i in range(n_slaves)
        ]
        return [master] + slaves
    return [ManipulatorState.at_rest(np.zeros(2)) for _ in range(n_slaves + 1)]


def build_scenario(
    kind: ScenarioKind,
    n_slaves: int = 3,
    duration: Optional[float] = None,
    pulse: Optional[RectanglePulse] = None,
) -> Scenario:
    return Scenario(
        kind=kind,
        duration=duration or default_duration(kind),
        initial_states=initial_states(kind, n_slaves),
        pulse=pulse or RectanglePulse(),
    )


def default_schedule(sampling_interval: float = 0.14, mad: float = 0.1) -> SamplingSchedule:
    """T_k = 0.04 + 0.06|sin s_k|, shrunk proportionally when MAD is below 0.1 s."""
    scale = min(1.0, mad / 0.1)
    return SamplingSchedule(
        sampling_interval=sampling_interval,
        mad=mad,
        delay_base=0.04 * scale,
        delay_amplitude=0.06 * scale,
    )


def build_config(
    n_slaves: int = 3,
    protocol: Protocol = Protocol.RR,
    sampling_interval: float = 0.14,
    mad: float = 0.1,
    step: float = DEFAULT_STEP,
    gains: Optional[GainSet] = None,
    trace_stride: int = 10,
    lyapunov_variables: Optional[LmiVariables] = None,
    tod_weights=None,
) -> SimConfig:
    """SimConfig with the reference defaults for anything not given."""
    return SimConfig(
        params=default_params(n_slaves),
        gains=gains or GainSet.uniform(DEFAULT_GAIN, DEFAULT_GAIN, n_slaves),
        formation=FormationGeometry.default(n_slaves),
        schedule=default_schedule(sampling_interval, mad),
        protocol=protocol,
        tod_weights=tod_weights,
        lyapunov_variables=lyapunov_variables,
        step=step,
        trace_stride=trace_stride,
    )
