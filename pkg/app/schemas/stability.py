from enum import Enum
from typing import Annotated, Optional, Union

import numpy as np
from pydantic import BaseModel, BeforeValidator, ConfigDict, Field, model_validator

from app.core.exceptions import DimensionError
from app.schemas.control import GainSet
from app.schemas.network import Protocol


def _as_matrix(value) -> np.ndarray:
    matrix = np.array(value, dtype=float)
    if matrix.ndim != 2 or matrix.shape[0] != matrix.shape[1]:
        raise ValueError("expected a square matrix")
    return matrix


def _as_stack(value) -> np.ndarray:
    stack = np.array(value, dtype=float)
    if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
        raise ValueError("expected a stack of square matrices, one per slave")
    return stack


SquareMatrix = Annotated[np.ndarray, BeforeValidator(_as_matrix)]
MatrixStack = Annotated[np.ndarray, BeforeValidator(_as_stack)]


class StabilityQuery(BaseModel):
    """One cell of a margin table: network size, gains, delay bound and protocol."""

    model_config = ConfigDict(frozen=True)

    n_slaves: int = Field(ge=2)
    n_joints: int = Field(default=2, ge=1)
    gains: GainSet
    mad: float = Field(ge=0.0)
    protocol: Protocol

    @model_validator(mode="after")
    def check_gains(self) -> "StabilityQuery":
        if self.gains.n_slaves != self.n_slaves or self.gains.n_joints != self.n_joints:
            raise DimensionError(
                "gains do not match the query dimensions",
                {
                    "slaves": (self.n_slaves, self.gains.n_slaves),
                    "joints": (self.n_joints, self.gains.n_joints),
                },
            )
        return self


class LmiVariablesRR(BaseModel):
    """Decision variables R_m, R_si of the round-robin criterion."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    r_m: SquareMatrix
    r_s: MatrixStack

    @property
    def n_slaves(self) -> int:
        return int(self.r_s.shape[0])


class LmiVariablesTOD(LmiVariablesRR):
    """Decision variables of the try-once-discard criterion."""

    q: MatrixStack
    u: MatrixStack
    g: MatrixStack


LmiVariables = Union[LmiVariablesTOD, LmiVariablesRR]


class FeasibilityStatus(str, Enum):
    """Outcome of one feasibility test."""

    FEASIBLE = "feasible"
    INFEASIBLE = "infeasible"
    UNDECIDED = "undecided"


class FeasibilityResult(BaseModel):
    """Result of a feasibility test at one MATI."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    feasible: bool
    status: FeasibilityStatus
    max_block_eigenvalue: float
    witness: Optional[LmiVariables] = None
    h_m: float
    h_s: float
    iterations: int = 0


class MarginResult(BaseModel):
    """Largest MATI found feasible for a query."""

    model_config = ConfigDict(arbitrary_types_allowed=True)

    query: StabilityQuery
    mati: float
    h_m: float
    h_s: float
    feasible: bool
    tolerance: float
    result: Optional[FeasibilityResult] = None
