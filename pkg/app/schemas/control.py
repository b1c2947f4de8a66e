from typing import List, Sequence, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, field_validator, model_validator

from app.core.exceptions import DimensionError, UnsupportedGainsError

SYMMETRY_TOL = 1e-12
FORMATION_SUM_TOL = 1e-12

# Offsets of the three-slave formation used throughout the reference set-up
REFERENCE_OFFSETS = ((0.1, -0.3), (-0.3, 0.15), (0.2, 0.15))


def _is_spd(matrix: np.ndarray) -> bool:
    if np.max(np.abs(matrix - matrix.T)) > SYMMETRY_TOL * max(1.0, np.max(np.abs(matrix))):
        return False
    return bool(np.linalg.eigvalsh(0.5 * (matrix + matrix.T))[0] > 0.0)


class GainSet(BaseModel):
    """Proportional and damping gains per slave (N·m/rad, N·m·s/rad)."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    kp: np.ndarray
    kd: np.ndarray

    @field_validator("kp", "kd", mode="before")
    @classmethod
    def as_matrix_stack(cls, value) -> np.ndarray:
        stack = np.array(value, dtype=float)
        if stack.ndim != 3 or stack.shape[1] != stack.shape[2]:
            raise ValueError("gains must be a stack of square matrices, one per slave")
        return stack

    @model_validator(mode="after")
    def check_gains(self) -> "GainSet":
        if self.kp.shape != self.kd.shape:
            raise DimensionError(
                "kp and kd must have the same shape",
                {"kp": self.kp.shape, "kd": self.kd.shape},
            )
        for name, stack in (("kp", self.kp), ("kd", self.kd)):
            for i, matrix in enumerate(stack, start=1):
                if not _is_spd(matrix):
                    raise ValueError(f"{name} of slave {i} must be symmetric positive definite")
        return self

    @classmethod
    def uniform(cls, kp: float, kd: float, n_slaves: int, n_joints: int = 2) -> "GainSet":
        """Same scaled-identity gains for every slave."""
        return cls.from_scalars([kp] * n_slaves, [kd] * n_slaves, n_joints)

    @classmethod
    def from_scalars(
        cls, kp: Sequence[float], kd: Sequence[float], n_joints: int = 2
    ) -> "GainSet":
        """Scaled-identity gains k·I with one scalar per slave."""
        if len(kp) != len(kd):
            raise DimensionError(
                "kp and kd lists must have one entry per slave",
                {"kp": len(kp), "kd": len(kd)},
            )
        eye = np.eye(n_joints)
        return cls(
            kp=np.array([k * eye for k in kp]),
            kd=np.array([k * eye for k in kd]),
        )

    @property
    def n_slaves(self) -> int:
        return int(self.kp.shape[0])

    @property
    def n_joints(self) -> int:
        return int(self.kp.shape[1])

    def scalar_gains(self) -> Tuple[np.ndarray, np.ndarray]:
        """Return (k_p,i), (k_d,i) when every gain is a scaled identity."""
        scalars = []
        for name, stack in (("kp", self.kp), ("kd", self.kd)):
            values = stack[:, 0, 0].copy()
            expected = values[:, None, None] * np.eye(self.n_joints)
            if not np.allclose(stack, expected, rtol=0.0, atol=SYMMETRY_TOL * (1.0 + np.max(np.abs(stack)))):
                raise UnsupportedGainsError({"gain": name})
            scalars.append(values)
        return scalars[0], scalars[1]


class FormationGeometry(BaseModel):
    """Offsets γ_i (rad) of each slave from the formation centre."""

    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    offsets: np.ndarray

    @field_validator("offsets", mode="before")
    @classmethod
    def as_offsets(cls, value) -> np.ndarray:
        offsets = np.array(value, dtype=float)
        if offsets.ndim != 2 or offsets.shape[0] < 1:
            raise ValueError("offsets must be an (N, n) array")
        return offsets

    @model_validator(mode="after")
    def check_offsets(self) -> "FormationGeometry":
        total = np.abs(self.offsets.sum(axis=0))
        if np.any(total > FORMATION_SUM_TOL):
            raise ValueError(f"formation offsets must sum to zero, got {self.offsets.sum(axis=0)}")
        n_slaves = self.offsets.shape[0]
        for i in range(n_slaves):
            for j in range(i + 1, n_slaves):
                if np.array_equal(self.offsets[i], self.offsets[j]):
                    raise ValueError(f"offsets of slaves {i + 1} and {j + 1} coincide")
        return self

    @classmethod
    def default(cls, n_slaves: int, n_joints: int = 2) -> "FormationGeometry":
        """The reference offsets for three slaves; a centred circle otherwise."""
        if n_slaves == 3 and n_joints == 2:
            return cls(offsets=REFERENCE_OFFSETS)
        if n_joints == 1:
            spread = 0.2 * np.arange(n_slaves, dtype=float)[:, None]
            return cls(offsets=spread - spread.mean(axis=0))
        angles = 2.0 * np.pi * np.arange(1, n_slaves + 1) / n_slaves
        phases = 0.5 * np.pi * np.arange(n_joints)
        circle = 0.2 * np.cos(angles[:, None] - phases[None, :])
        # Re-centre so round-off does not break the zero-sum check
        return cls(offsets=circle - circle.mean(axis=0))

    @property
    def n_slaves(self) -> int:
        return int(self.offsets.shape[0])

    def corrected(self, slave_positions: np.ndarray) -> np.ndarray:
        """q̌_si = q_si − γ_i for a (N, n) stack of slave positions."""
        positions = np.asarray(slave_positions, dtype=float)
        if positions.shape != self.offsets.shape:
            raise DimensionError(
                "slave positions do not match the formation",
                {"positions": positions.shape, "offsets": self.offsets.shape},
            )
        return positions - self.offsets
