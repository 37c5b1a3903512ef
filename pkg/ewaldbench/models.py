"""
Data Models Module
------------------
This module defines the Pydantic schemas shared by every engine: the particle system,
per-particle field results, error reports, the Ewald split, mesh parameters and the
runtime cost model. Array-valued fields are coerced to float64 numpy arrays so the
engines can work on them directly.
"""

import logging
import math
from typing import Dict, List, Optional, Sequence

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator, model_validator

from ewaldbench.config import SHAPE_CONSTANT

logger = logging.getLogger(__name__)


def _readonly(array: np.ndarray) -> np.ndarray:
    array.setflags(write=False)
    return array


class ParticleSystem(BaseModel):
    """Point charges in a cubic periodic box [0, L)^3."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    box_length: float = Field(gt=0)
    positions: np.ndarray
    charges: np.ndarray

    @field_validator("positions", mode="before")
    @classmethod
    def _wrap_positions(cls, value, info):
        positions = np.array(value, dtype=float)
        if positions.ndim != 2 or positions.shape[1] != 3:
            raise ValueError(f"positions must have shape (n, 3), got {positions.shape}")
        if not np.all(np.isfinite(positions)):
            raise ValueError("positions must be finite")
        box_length = info.data.get("box_length")
        if box_length is not None:
            positions = np.mod(positions, box_length)
            # np.mod can return exactly L for tiny negative inputs
            positions[positions >= box_length] = 0.0
        return _readonly(positions)

    @field_validator("charges", mode="before")
    @classmethod
    def _coerce_charges(cls, value):
        charges = np.array(value, dtype=float).reshape(-1)
        if not np.all(np.isfinite(charges)):
            raise ValueError("charges must be finite")
        return _readonly(charges)

    @model_validator(mode="after")
    def _check_consistency(self):
        if self.positions.shape[0] == 0:
            raise ValueError("a particle system needs at least one particle")
        if self.positions.shape[0] != self.charges.shape[0]:
            raise ValueError(
                f"{self.positions.shape[0]} positions but {self.charges.shape[0]} charges"
            )
        if not self.is_neutral:
            logger.warning(
                "System is not charge neutral: total charge %.6g (n=%d)", self.total_charge, self.n
            )
        return self

    @property
    def n(self) -> int:
        return int(self.charges.shape[0])

    @property
    def total_charge(self) -> float:
        return float(np.sum(self.charges))

    @property
    def charge_squared_sum(self) -> float:
        """Q = sum of squared charges, the scale entering every error estimate."""
        return float(np.dot(self.charges, self.charges))

    @property
    def is_neutral(self) -> bool:
        return abs(self.total_charge) <= 1e-12 * max(math.sqrt(self.charge_squared_sum), 1.0)

    @property
    def density(self) -> float:
        return self.n / self.box_length ** 3

    def with_positions(self, positions) -> "ParticleSystem":
        return ParticleSystem(box_length=self.box_length, positions=positions, charges=self.charges)

    def translated(self, shift: Sequence[float]) -> "ParticleSystem":
        """Rigidly shift every particle, wrapping back into the box."""
        return self.with_positions(self.positions + np.asarray(shift, dtype=float))


class FieldResult(BaseModel):
    """Per-particle potentials and forces with the total energy."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    potentials: np.ndarray
    forces: np.ndarray
    energy: float
    # Indices of the particles the rows refer to; None means all particles in order
    targets: Optional[np.ndarray] = None
    timings: Dict[str, float] = Field(default_factory=dict)

    @field_validator("potentials", mode="before")
    @classmethod
    def _coerce_potentials(cls, value):
        return _readonly(np.array(value, dtype=float).reshape(-1))

    @field_validator("forces", mode="before")
    @classmethod
    def _coerce_forces(cls, value):
        forces = np.array(value, dtype=float)
        if forces.ndim != 2 or forces.shape[1] != 3:
            raise ValueError(f"forces must have shape (n, 3), got {forces.shape}")
        return _readonly(forces)

    @field_validator("targets", mode="before")
    @classmethod
    def _coerce_targets(cls, value):
        if value is None:
            return None
        return _readonly(np.array(value, dtype=np.int64).reshape(-1))

    @model_validator(mode="after")
    def _check_lengths(self):
        if self.forces.shape[0] != self.potentials.shape[0]:
            raise ValueError("potentials and forces must describe the same particles")
        if self.targets is not None and self.targets.shape[0] != self.potentials.shape[0]:
            raise ValueError("targets must index every row of the result")
        return self

    @property
    def n(self) -> int:
        return int(self.potentials.shape[0])

    @classmethod
    def combine(cls, parts: Sequence["FieldResult"]) -> "FieldResult":
        """Sum partial results (real space, k-space, self term) of the same particles."""
        first = parts[0]
        timings: Dict[str, float] = {}
        for part in parts:
            if part.n != first.n:
                raise ValueError("cannot combine results of different sizes")
            for stage, seconds in part.timings.items():
                timings[stage] = timings.get(stage, 0.0) + seconds
        return cls(
            potentials=sum(part.potentials for part in parts),
            forces=sum(part.forces for part in parts),
            energy=sum(part.energy for part in parts),
            targets=first.targets,
            timings=timings,
        )

    def subset(self, indices, charges) -> "FieldResult":
        """Rows for the given particle indices; energy is re-summed over the subset."""
        indices = np.asarray(indices, dtype=np.int64)
        potentials = self.potentials[indices]
        return FieldResult(
            potentials=potentials,
            forces=self.forces[indices],
            energy=0.5 * float(np.dot(np.asarray(charges)[indices], potentials)),
            targets=indices,
            timings=self.timings,
        )

    def scaled(self, factor: float) -> "FieldResult":
        """Multiply every quantity by a unit conversion factor."""
        return self.model_copy(
            update={
                "potentials": _readonly(self.potentials * factor),
                "forces": _readonly(self.forces * factor),
                "energy": self.energy * factor,
            }
        )

    def net_force(self) -> np.ndarray:
        return self.forces.sum(axis=0)

    def without_drift(self) -> "FieldResult":
        """Subtract the mean force so the forces sum to zero."""
        return self.model_copy(
            update={"forces": _readonly(self.forces - self.forces.mean(axis=0))}
        )


class ErrorReport(BaseModel):
    """Absolute and relative rms deviations of a result from a reference."""
    abs_rms_potential: float = Field(ge=0)
    abs_rms_force: float = Field(ge=0)
    abs_rms_energy: float = Field(ge=0)
    rel_rms_potential: float = Field(ge=0)
    rel_rms_force: float = Field(ge=0)


class EwaldSplit(BaseModel):
    """Ewald parameter with real-space and Fourier-space cutoffs."""
    model_config = ConfigDict(frozen=True)

    xi: float = Field(gt=0)
    r_c: float = Field(gt=0)
    k_inf: int = Field(ge=1)


class RealGrid(BaseModel):
    """Real values on a uniform M^3 grid over the box, indexed [ix, iy, iz]."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    values: np.ndarray
    box_length: float = Field(gt=0)

    @field_validator("values", mode="before")
    @classmethod
    def _coerce_values(cls, value):
        values = np.asarray(value, dtype=float)
        if values.ndim != 3 or len(set(values.shape)) != 1:
            raise ValueError(f"grid values must be a cube, got shape {values.shape}")
        if values.shape[0] % 2:
            raise ValueError(f"grid size must be even, got {values.shape[0]}")
        if not np.all(np.isfinite(values)):
            raise ValueError("grid values must be finite")
        return values

    @property
    def M(self) -> int:
        return int(self.values.shape[0])

    @property
    def h(self) -> float:
        return self.box_length / self.M


class SpectralGrid(BaseModel):
    """Half spectrum of a real M^3 grid: shape (M, M, M//2 + 1), unnormalized."""
    model_config = ConfigDict(arbitrary_types_allowed=True)

    coefficients: np.ndarray
    box_length: float = Field(gt=0)

    @field_validator("coefficients", mode="before")
    @classmethod
    def _coerce_coefficients(cls, value):
        coefficients = np.asarray(value, dtype=complex)
        if coefficients.ndim != 3:
            raise ValueError("spectral coefficients must be three dimensional")
        M = coefficients.shape[0]
        if M % 2 or coefficients.shape != (M, M, M // 2 + 1):
            raise ValueError(f"inconsistent half-spectrum shape {coefficients.shape}")
        return coefficients

    @property
    def M(self) -> int:
        return int(self.coefficients.shape[0])


class SEGridParams(BaseModel):
    """Spectral Ewald mesh: grid size, Gaussian support and the derived window shape."""
    model_config = ConfigDict(frozen=True)

    M: int = Field(ge=2)
    P: int = Field(ge=2)
    xi: float = Field(gt=0)
    box_length: float = Field(gt=0)
    shape_constant: float = Field(default=SHAPE_CONSTANT, gt=0)

    @model_validator(mode="after")
    def _check_support(self):
        if self.M % 2:
            raise ValueError(f"grid size M must be even, got {self.M}")
        if self.P % 2:
            raise ValueError(f"support P must be even, got {self.P}")
        if self.P > self.M:
            raise ValueError(f"support P={self.P} exceeds grid size M={self.M}")
        return self

    @property
    def h(self) -> float:
        return self.box_length / self.M

    @property
    def w(self) -> float:
        return self.P * self.h / 2

    @property
    def m_shape(self) -> float:
        return self.shape_constant * math.sqrt(math.pi * self.P)

    @property
    def eta(self) -> float:
        return (2 * self.w * self.xi / self.m_shape) ** 2

    @property
    def gaussian_exponent(self) -> float:
        """Coefficient a of the window e^{-a |x - x_n|^2}, a = 2 xi^2 / eta."""
        return 2 * self.xi ** 2 / self.eta


class FGGTables(BaseModel):
    """Per-particle Gaussian window factors for fast Gaussian gridding."""
    model_config = ConfigDict(arbitrary_types_allowed=True, frozen=True)

    # (n, 3, P) wrapped grid indices of the support points
    indices: np.ndarray
    # (n, 3, P) one-dimensional window factors e^{-a (x_grid - x_n)^2}
    factors: np.ndarray
    # (n, 3, P) signed offsets x_grid - x_n (unwrapped)
    offsets: np.ndarray
    # (P,) grid-independent table e^{-a (j h)^2}
    static: np.ndarray
    # scalar exp() evaluations spent building the tables
    exp_count: int = Field(ge=0)


class SPMEGridParams(BaseModel):
    """SPME mesh: grid size and cardinal B-spline order."""
    model_config = ConfigDict(frozen=True)

    M: int = Field(ge=2)
    p: int = Field(ge=2)
    xi: float = Field(gt=0)
    box_length: float = Field(gt=0)

    @model_validator(mode="after")
    def _check_order(self):
        if self.M % 2:
            raise ValueError(f"grid size M must be even, got {self.M}")
        if self.p > self.M:
            raise ValueError(f"B-spline order p={self.p} exceeds grid size M={self.M}")
        return self

    @property
    def h(self) -> float:
        return self.box_length / self.M


class RuntimeModel(BaseModel):
    """Cost constants in seconds per elementary unit of work."""
    c_ns: float = Field(default=0.0, ge=0)
    c_force: float = Field(default=0.0, ge=0)
    c_fft: float = Field(default=0.0, ge=0)
    c_solve: float = Field(default=0.0, ge=0)
    c_spga: float = Field(default=0.0, ge=0)
    calibrated: bool = False

    @model_validator(mode="after")
    def _check_calibrated(self):
        if self.calibrated:
            zero = [name for name in ("c_ns", "c_force", "c_fft", "c_solve", "c_spga")
                    if getattr(self, name) <= 0]
            if zero:
                raise ValueError(f"calibrated model needs positive constants: {', '.join(zero)}")
        return self


class TuningCandidate(BaseModel):
    """One point of the tuner's xi scan."""
    xi: float
    r_c: float
    M: int
    P: Optional[int] = None
    p: Optional[int] = None
    predicted_real_time: float = 0.0
    predicted_fourier_time: float = 0.0
    feasible: bool = True
    reason: str = ""

    @property
    def predicted_total_time(self) -> float:
        return self.predicted_real_time + self.predicted_fourier_time


class TunedParams(BaseModel):
    """Parameter set chosen by the tuner with its predicted cost."""
    method: str
    split: EwaldSplit
    M: int
    P: Optional[int] = None
    p: Optional[int] = None
    predicted_real_time: float
    predicted_fourier_time: float
    abs_tol: float
    reference_rms: float
    candidates: List[TuningCandidate] = Field(default_factory=list)

    @model_validator(mode="after")
    def _check_mesh(self):
        if self.M % 2:
            raise ValueError(f"tuned grid size must be even, got {self.M}")
        if self.P is not None and (self.P % 2 or self.P > self.M):
            raise ValueError(f"tuned support P={self.P} must be even and at most M={self.M}")
        if self.p is not None and self.p not in (3, 5, 7):
            raise ValueError(f"tuned B-spline order must be 3, 5 or 7, got {self.p}")
        return self

    @property
    def predicted_total_time(self) -> float:
        return self.predicted_real_time + self.predicted_fourier_time


class CalibrationReport(BaseModel):
    """Fitted runtime model with the held-out Fourier-time check."""
    model: RuntimeModel
    # kernel name -> list of (feature, median seconds) ladder points
    samples: Dict[str, List[List[float]]] = Field(default_factory=dict)
    holdout_predicted: float = Field(ge=0)
    holdout_measured: float = Field(gt=0)

    @property
    def holdout_ratio(self) -> float:
        return self.holdout_predicted / self.holdout_measured


class VerificationReport(BaseModel):
    """Outcome of checking tuned parameters against the direct oracle."""
    passed: bool
    rel_tol: float
    measured: ErrorReport
    n_targets: int
