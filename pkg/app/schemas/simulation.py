from enum import Enum
from typing import Any, Dict, List, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, model_validator

from app.core.exceptions import DimensionError, ValidationError
from app.schemas.control import FormationGeometry, GainSet
from app.schemas.manipulator import ManipulatorParams, ManipulatorState
from app.schemas.network import Protocol, SamplingSchedule, TodWeights, TransmissionEvent
from app.schemas.stability import LmiVariables


class ScenarioKind(str, Enum):
    """External-force set-up of a run."""

    FREE_MOTION = "free"
    BOUNDED_FORCE = "force"
    CONTACT = "contact"


class RectanglePulse(BaseModel):
    """Human force F_2: amplitude (N) on [t_on, t_off), zero elsewhere."""

    model_config = ConfigDict(frozen=True)

    amplitude: float = 25.0
    t_on: float = Field(default=0.5, ge=0.0)
    t_off: float = 32.0

    @model_validator(mode="after")
    def check_window(self) -> "RectanglePulse":
        if self.t_off < self.t_on:
            raise ValueError("pulse must switch off after it switches on")
        return self


class Scenario(BaseModel):
    """Which forces act, for how long, and from where the arms start."""

    model_config = ConfigDict(frozen=True)

    kind: ScenarioKind
    duration: float = Field(default=20.0, gt=0.0)
    initial_states: List[ManipulatorState]
    pulse: RectanglePulse = RectanglePulse()
    wall_height: float = 0.3
    wall_stiffness: float = Field(default=10000.0, ge=0.0)

    @model_validator(mode="after")
    def check_states(self) -> "Scenario":
        if len(self.initial_states) < 3:
            raise ValidationError(
                "scenario needs one master and at least two slaves",
                {"arms": len(self.initial_states)},
            )
        n_joints = {state.n_joints for state in self.initial_states}
        if len(n_joints) != 1:
            raise DimensionError("all arms must have the same joint count")
        return self

    @property
    def n_slaves(self) -> int:
        return len(self.initial_states) - 1


class SimConfig(BaseModel):
    """Everything a run needs besides the scenario."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    params: List[ManipulatorParams]
    gains: GainSet
    formation: FormationGeometry
    schedule: SamplingSchedule = SamplingSchedule()
    protocol: Protocol = Protocol.RR
    tod_weights: Optional[TodWeights] = None
    lyapunov_variables: Optional[LmiVariables] = None
    step: float = Field(default=1e-3, gt=0.0)
    trace_stride: int = Field(default=10, ge=1)

    @model_validator(mode="after")
    def check_config(self) -> "SimConfig":
        n_slaves = self.gains.n_slaves
        if len(self.params) != n_slaves + 1 or self.formation.n_slaves != n_slaves:
            raise DimensionError(
                "arm parameters, gains and formation disagree on the slave count",
                {
                    "params": len(self.params),
                    "gains": n_slaves,
                    "formation": self.formation.n_slaves,
                },
            )
        if self.tod_weights is not None and self.tod_weights.n_slaves != n_slaves:
            raise DimensionError("one TOD weight per slave is required")
        if self.step > self.schedule.sampling_interval / 10.0 + 1e-15:
            raise ValidationError(
                "integration step must not exceed a tenth of the sampling interval",
                {"step": self.step, "sampling_interval": self.schedule.sampling_interval},
            )
        return self

    @property
    def n_slaves(self) -> int:
        return self.gains.n_slaves

    @property
    def n_joints(self) -> int:
        return self.gains.n_joints

    def weights(self) -> TodWeights:
        """TOD weights in use, identity unless supplied."""
        if self.tod_weights is not None:
            return self.tod_weights
        return TodWeights.identity(self.n_slaves, self.n_joints)


class JumpRecord(BaseModel):
    """V_e just before and at an arrival instant."""

    t: float
    before: float
    after: float


class SimTrace(BaseModel):
    """Time-indexed record of a run; one row per logged step."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    columns: List[str]
    data: np.ndarray
    events: List[TransmissionEvent] = []
    jumps: List[JumpRecord] = []
    metadata: Dict[str, Any] = {}

    @model_validator(mode="after")
    def check_shape(self) -> "SimTrace":
        if self.data.ndim != 2 or self.data.shape[1] != len(self.columns):
            raise DimensionError(
                "trace data does not match its header",
                {"columns": len(self.columns), "shape": self.data.shape},
            )
        return self

    def column(self, name: str) -> np.ndarray:
        return self.data[:, self.columns.index(name)]

    def block(self, prefix: str) -> np.ndarray:
        """All columns whose name starts with prefix, in header order."""
        indices = [i for i, name in enumerate(self.columns) if name.startswith(prefix)]
        return self.data[:, indices]

    @property
    def t(self) -> np.ndarray:
        return self.column("t")


class SteadyStateMetrics(BaseModel):
    """Averages over the tail (or a window) of a trace."""

    mean_position_error: List[float]
    max_position_error: float
    mean_force_residual: List[float]
    mean_master_force: List[float]
    max_velocity: float
    formation_center_error: float
    samples: int


class TodInterval(BaseModel):
    """Data in force on [t_k, t_{k+1}) under TOD."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    sampled_at: float
    arrives_at: float
    next_arrival: float
    index: int
    eta: np.ndarray
