from enum import Enum
from typing import Callable, Optional

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from app.core.exceptions import ScheduleError

# Slack for comparisons of instants built from sums of floats
TIME_TOL = 1e-12


class Protocol(str, Enum):
    """Scheduling protocol deciding which slave transmits."""

    RR = "rr"
    TOD = "tod"


class SamplingSchedule(BaseModel):
    """Uniform sampling instants with bounded transmission delays (s)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    sampling_interval: float = Field(default=0.14, gt=0.0)
    mati: Optional[float] = Field(default=None, gt=0.0)
    mad: float = Field(default=0.1, ge=0.0)
    delay_base: float = Field(default=0.04, ge=0.0)
    delay_amplitude: float = Field(default=0.06, ge=0.0)
    delay_fn: Optional[Callable[[float], float]] = None

    @model_validator(mode="after")
    def check_bounds(self) -> "SamplingSchedule":
        if self.mati is None:
            object.__setattr__(self, "mati", self.sampling_interval)
        if self.sampling_interval > self.mati + TIME_TOL:
            raise ScheduleError(
                "sampling interval exceeds MATI",
                {"sampling_interval": self.sampling_interval, "mati": self.mati},
            )
        if self.delay_fn is None and self.delay_base + self.delay_amplitude > self.mad + TIME_TOL:
            raise ScheduleError(
                "delay model can exceed MAD",
                {"max_delay": self.delay_base + self.delay_amplitude, "mad": self.mad},
            )
        return self

    def sampling_instant(self, k: int) -> float:
        """s_k = k·Δ, with s_0 = 0."""
        return k * self.sampling_interval

    def delay(self, k: int) -> float:
        """Transmission delay T_k of the sample taken at s_k."""
        s_k = self.sampling_instant(k)
        if self.delay_fn is not None:
            delay = float(self.delay_fn(s_k))
        else:
            delay = self.delay_base + self.delay_amplitude * abs(np.sin(s_k))
        if not 0.0 <= delay <= self.mad + TIME_TOL:
            raise ScheduleError(
                "transmission delay outside [0, MAD]",
                {"k": k, "delay": delay, "mad": self.mad},
            )
        return delay

    def arrival_instant(self, k: int) -> float:
        """t_k = s_k + T_k."""
        return self.sampling_instant(k) + self.delay(k)


class TodWeights(BaseModel):
    """Weighting matrices Q_i of the TOD scheduling rule."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    Q: np.ndarray

    @field_validator("Q", mode="before")
    @classmethod
    def as_matrix_stack(cls, value) -> np.ndarray:
        stack = np.array(value, dtype=float)
        if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
            raise ValueError("weights must be a stack of square matrices, one per slave")
        for i, matrix in enumerate(stack, start=1):
            if not np.allclose(matrix, matrix.T) or np.linalg.eigvalsh(matrix)[0] <= 0.0:
                raise ValueError(f"weight of slave {i} must be symmetric positive definite")
        return stack

    @classmethod
    def identity(cls, n_slaves: int, n_joints: int = 2) -> "TodWeights":
        return cls(Q=np.array([np.eye(n_joints)] * n_slaves))

    @property
    def n_slaves(self) -> int:
        return int(self.Q.shape[0])


class TransmissionEvent(BaseModel):
    """A sample taken at s_k and delivered at t_k."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    k: int
    sampled_at: float
    arrives_at: float
    index: int
    master_sample: np.ndarray
    slave_sample: np.ndarray
    eta: np.ndarray
    weighted_errors: np.ndarray
