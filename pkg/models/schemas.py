"""
Pydantic models for images, patch sets, moments, models, configs and reports
"""
import math
from datetime import datetime
from typing import Optional, List, Dict, Any, Literal, Tuple

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, computed_field, field_validator, model_validator

from services.errors import ModelValidationError


class ArrayModel(BaseModel):
    """Base for models that carry numpy arrays"""
    model_config = ConfigDict(arbitrary_types_allowed=True)


# Images

class GrayImage(ArrayModel):
    """Grayscale image, samples[y, x] in [0, maxval]"""
    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)
    maxval: int = Field(..., ge=1, le=65535)
    samples: np.ndarray

    @field_validator("samples", mode="before")
    @classmethod
    def _as_int_array(cls, v):
        return np.asarray(v, dtype=np.int64)

    @model_validator(mode="after")
    def _check_shape(self):
        if self.samples.shape != (self.height, self.width):
            raise ModelValidationError(
                f"samples shape {self.samples.shape} does not match {self.height}x{self.width}"
            )
        if self.samples.size and (self.samples.min() < 0 or self.samples.max() > self.maxval):
            raise ModelValidationError("samples outside [0, maxval]")
        return self


class BinaryImage(ArrayModel):
    """Binarized image, spins[y, x] in {+1, -1}; +1 is black"""
    width: int = Field(..., ge=1)
    height: int = Field(..., ge=1)
    spins: np.ndarray

    @field_validator("spins", mode="before")
    @classmethod
    def _as_spin_array(cls, v):
        return np.asarray(v, dtype=np.int8)

    @model_validator(mode="after")
    def _check_spins(self):
        if self.spins.shape != (self.height, self.width):
            raise ModelValidationError(
                f"spins shape {self.spins.shape} does not match {self.height}x{self.width}"
            )
        if not np.all(np.abs(self.spins) == 1):
            raise ModelValidationError("spins must be +1 or -1")
        return self


# Patches and moments

class SpinPatch(ArrayModel):
    """L x L patch; spins[y-1, x-1] is the pixel at coordinate (x, y)"""
    L: int = Field(..., ge=1)
    spins: np.ndarray

    @field_validator("spins", mode="before")
    @classmethod
    def _as_spin_array(cls, v):
        return np.asarray(v, dtype=np.int8)

    def at(self, x: int, y: int) -> int:
        """Spin at 1-based coordinate (x, y), origin at the upper left"""
        return int(self.spins[y - 1, x - 1])


class PatchSet(ArrayModel):
    """Collection of B patches sharing side L, stored as a (B, L, L) int8 array"""
    L: int = Field(..., ge=1)
    patches: np.ndarray

    @field_validator("patches", mode="before")
    @classmethod
    def _as_spin_stack(cls, v):
        return np.asarray(v, dtype=np.int8)

    @model_validator(mode="after")
    def _check_stack(self):
        if self.patches.ndim != 3 or self.patches.shape[1:] != (self.L, self.L):
            raise ModelValidationError(
                f"patches shape {self.patches.shape} is not (B, {self.L}, {self.L})"
            )
        if self.patches.shape[0] < 1:
            raise ModelValidationError("a patch set needs at least one patch")
        if not np.all(np.abs(self.patches) == 1):
            raise ModelValidationError("spins must be +1 or -1")
        return self

    @property
    def B(self) -> int:
        return int(self.patches.shape[0])

    def patch(self, index: int) -> SpinPatch:
        return SpinPatch(L=self.L, spins=self.patches[index])

    def flat(self) -> np.ndarray:
        """(B, N) view with sites in row-major order"""
        return self.patches.reshape(self.B, self.L * self.L)


def _site_count(L: Optional[int], n: int) -> None:
    if L is not None and L * L != n:
        raise ModelValidationError(f"vector length {n} does not match L={L}")


class EmpiricalMoments(ArrayModel):
    """Magnetizations mu and connected correlations gamma of a patch set.

    B = 0 marks moments computed exactly from a distribution.
    """
    L: Optional[int] = Field(default=None, ge=1)
    B: int = Field(..., ge=0)
    mu: np.ndarray
    gamma: np.ndarray

    @field_validator("mu", "gamma", mode="before")
    @classmethod
    def _as_float_array(cls, v):
        return np.array(v, dtype=np.float64)

    @model_validator(mode="after")
    def _check_moments(self):
        n = self.mu.shape[0]
        _site_count(self.L, n)
        if self.gamma.shape != (n, n):
            raise ModelValidationError(f"gamma shape {self.gamma.shape} is not ({n}, {n})")
        if not (np.all(np.isfinite(self.mu)) and np.all(np.isfinite(self.gamma))):
            raise ModelValidationError("moments must be finite")
        if np.any(np.abs(self.mu) > 1.0 + 1e-12):
            raise ModelValidationError("|mu_i| must not exceed 1")
        if not np.allclose(self.gamma, self.gamma.T, rtol=0.0, atol=1e-12):
            raise ModelValidationError("gamma must be symmetric")
        return self

    @property
    def N(self) -> int:
        return int(self.mu.shape[0])

    def to_report(self) -> Dict[str, Any]:
        return {"L": self.L, "B": self.B, "mu": self.mu.tolist(), "gamma": self.gamma.tolist()}

    @classmethod
    def from_report(cls, data: Dict[str, Any]) -> "EmpiricalMoments":
        return cls(L=data.get("L"), B=data["B"], mu=data["mu"], gamma=data["gamma"])


class IsingModel(ArrayModel):
    """Couplings w (symmetric, zero diagonal) and fields h of a Boltzmann machine.

    L is None for systems that are not square lattices.
    """
    L: Optional[int] = Field(default=None, ge=1)
    w: np.ndarray
    h: np.ndarray

    @field_validator("w", "h", mode="before")
    @classmethod
    def _as_float_array(cls, v):
        return np.array(v, dtype=np.float64)

    @model_validator(mode="after")
    def _check_model(self):
        n = self.h.shape[0]
        _site_count(self.L, n)
        if self.w.shape != (n, n):
            raise ModelValidationError(f"w shape {self.w.shape} is not ({n}, {n})")
        if not (np.all(np.isfinite(self.w)) and np.all(np.isfinite(self.h))):
            raise ModelValidationError("couplings and fields must be finite")
        if not np.allclose(self.w, self.w.T, rtol=0.0, atol=1e-12):
            raise ModelValidationError("w must be symmetric")
        if np.any(np.diag(self.w) != 0.0):
            raise ModelValidationError("w must have a zero diagonal")
        self.w = 0.5 * (self.w + self.w.T)
        return self

    @property
    def N(self) -> int:
        return int(self.h.shape[0])

    def energy(self, states: np.ndarray) -> np.ndarray:
        """H(S) = -sum_{i<j} w_ij S_i S_j - sum_i h_i S_i for a (..., N) stack"""
        s = np.asarray(states, dtype=np.float64)
        return -0.5 * np.einsum("...i,ij,...j->...", s, self.w, s) - s @ self.h

    def to_report(self) -> Dict[str, Any]:
        return {"L": self.L, "h": self.h.tolist(), "w": self.w.tolist()}

    @classmethod
    def from_report(cls, data: Dict[str, Any]) -> "IsingModel":
        return cls(L=data.get("L"), w=data["w"], h=data["h"])


# Monte Carlo

class McConfig(BaseModel):
    """Metropolis chain settings; one sweep is N proposed single-spin flips"""
    sweeps: int = Field(default=10000, ge=1)
    burn_in: int = Field(default=1000, ge=0)
    chains: int = Field(default=4, ge=1)
    seed: int = Field(default=0, ge=0, lt=2**64)
    temperature: float = Field(default=1.0, gt=0)
    record_every: int = Field(default=0, ge=0)
    threads: Optional[int] = Field(default=None, ge=1)


class McEstimate(ArrayModel):
    """Model-side averages estimated from Metropolis chains"""
    m: np.ndarray
    c: np.ndarray
    second_moment: np.ndarray
    energy_mean: float
    energy_var: float = Field(..., ge=0)
    samples_used: int
    energy_series: Optional[np.ndarray] = None
    states: Optional[np.ndarray] = None
    # Boltzmann weights in all_states order; set only by exact enumeration
    probabilities: Optional[np.ndarray] = None

    def stderr(self) -> float:
        """Naive per-site standard error scale 1/sqrt(samples)"""
        return 1.0 / math.sqrt(max(self.samples_used, 1))


class LearnConfig(BaseModel):
    """Settings for Monte Carlo maximum-likelihood learning"""
    grad_tol: float = Field(default=1e-3, gt=0)
    max_iters: int = Field(default=200, ge=1)
    ridge: float = Field(default=1e-4, ge=0)
    max_step: float = Field(default=0.5, gt=0)
    learning_rate: float = Field(default=0.5, gt=0)
    backtrack_steps: int = Field(default=4, ge=0)
    reject_tol: float = Field(default=0.02, ge=0)
    max_full_curvature: int = Field(default=4096, ge=0)
    mc: McConfig = Field(default_factory=McConfig)


class LearnStep(BaseModel):
    iter: int
    grad_inf_norm: float
    step_type: Literal["init", "newton", "gradient", "rejected"]


class LearnResult(ArrayModel):
    """Learned model plus convergence record"""
    model: IsingModel
    converged: bool
    iterations: int
    grad_inf_norm: float
    history: List[LearnStep] = Field(default_factory=list)


class HeatPoint(BaseModel):
    T: float
    C: float
    C_stderr: float


class HeatCurve(BaseModel):
    points: List[HeatPoint]
    peak_T: float


# Analysis

class LinkClass(BaseModel):
    """Sublattice class of a NN or NNN link"""
    model_config = ConfigDict(frozen=True)
    kind: Literal["NN", "NNN"]
    cls: Literal[1, 2]


class DistanceProfile(BaseModel):
    origin_parity: Literal["A", "B"]
    r_values: List[int]
    w_bar: List[float]
    stderr: List[float]


class ExpFit(BaseModel):
    """w_bar(r) = a exp(-(r - 2) / b)"""
    a: float
    b: float
    a_err: float
    b_err: float
    r_range: Tuple[int, int]


class Histogram(BaseModel):
    edges: List[float]
    counts: List[int]

    @computed_field
    @property
    def mass(self) -> List[float]:
        total = sum(self.counts)
        return [c / total for c in self.counts] if total else [0.0 for _ in self.counts]

    @property
    def centers(self) -> List[float]:
        return [0.5 * (lo + hi) for lo, hi in zip(self.edges[:-1], self.edges[1:])]


class FrustrationResult(BaseModel):
    count: int
    plaquettes: List[Tuple[int, int]]


class RBodySolution(BaseModel):
    m: float
    w_pair: float
    h: float


class Spectrum(BaseModel):
    frequencies: List[float]
    amplitude: List[float]
    slope: Optional[float] = None


class PriorParams(BaseModel):
    """Six-parameter prior plus the uniform field and tail cutoff"""
    w_nn_1: float
    w_nn_2: float
    w_nnn_1: float
    w_nnn_2: float
    a: float
    b: float = Field(..., gt=0)
    h0: float = 0.0
    r_cut: float = Field(default=8.0, gt=0)

    @model_validator(mode="after")
    def _check_finite(self):
        values = [self.w_nn_1, self.w_nn_2, self.w_nnn_1, self.w_nnn_2, self.a, self.b, self.h0]
        if not all(math.isfinite(v) for v in values):
            raise ModelValidationError("prior parameters must be finite")
        return self


# Reports

class Provenance(BaseModel):
    """Everything needed to re-run the command that produced a report"""
    command: str
    inputs: List[str] = Field(default_factory=list)
    seed: Optional[int] = None
    flags: Dict[str, Any] = Field(default_factory=dict)
    tool_version: str
    schema_version: int
    created_at: datetime = Field(default_factory=datetime.now)


class AnalysisReport(BaseModel):
    """Post-inference analytics of one model"""
    provenance: Provenance
    moments_summary: Optional[Dict[str, Any]] = None
    model_summary: Dict[str, Any]
    profiles: Dict[str, DistanceProfile]
    histograms: Dict[str, Dict[str, Histogram]]
    fits: Dict[str, Optional[ExpFit]]
    frustration: FrustrationResult
    spectrum_slope: Optional[float] = None
