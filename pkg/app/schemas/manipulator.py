from typing import Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from app.core.exceptions import DimensionError

GRAVITY = 9.81


class ManipulatorParams(BaseModel):
    """Physical constants of a 2-link planar arm."""

    model_config = ConfigDict(frozen=True)

    link_masses: Tuple[float, float] = (1.0, 0.5)
    link_lengths: Tuple[float, float] = (0.5, 0.3)
    gravity: float = GRAVITY

    @field_validator("link_masses", "link_lengths")
    @classmethod
    def check_positive(cls, value: Tuple[float, float]) -> Tuple[float, float]:
        if any(not np.isfinite(v) or v <= 0.0 for v in value):
            raise ValueError("link masses and lengths must be strictly positive")
        return value


class ManipulatorState(BaseModel):
    """Joint positions (rad) and velocities (rad/s) of one arm."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    q: np.ndarray
    dq: np.ndarray

    @field_validator("q", "dq", mode="before")
    @classmethod
    def as_joint_vector(cls, value) -> np.ndarray:
        vector = np.array(value, dtype=float)
        if vector.ndim != 1 or vector.size < 1:
            raise ValueError("joint vectors must be one-dimensional and non-empty")
        return vector

    @model_validator(mode="after")
    def check_lengths(self) -> "ManipulatorState":
        if self.q.shape != self.dq.shape:
            raise DimensionError(
                "q and dq must have equal length",
                {"q": self.q.shape[0], "dq": self.dq.shape[0]},
            )
        return self

    @classmethod
    def at_rest(cls, q) -> "ManipulatorState":
        """Build a state with zero velocity."""
        q = np.array(q, dtype=float)
        return cls(q=q, dq=np.zeros_like(q))

    @property
    def n_joints(self) -> int:
        return int(self.q.shape[0])
