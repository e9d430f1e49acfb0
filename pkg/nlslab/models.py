import hashlib
import json
import math
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, ConfigDict, Field, field_validator

from nlslab.grid import Grid
from nlslab.nonlinearity import Nonlinearity, NonlinearityKind


class GridSpec(BaseModel):
    """Grid block: dimension, points per axis, half length per axis."""

    d: int = Field(1, description="Spatial dimension (1 or 2)")
    n: List[int] = Field(..., description="Even point count per axis")
    L: List[float] = Field(..., description="Half length per axis; box is [-L, L)")

    @field_validator("d")
    @classmethod
    def validate_dimension(cls, v):
        if v not in (1, 2):
            raise ValueError("d must be 1 or 2")
        return v

    @field_validator("n", "L", mode="before")
    @classmethod
    def broadcast_scalar(cls, v, info):
        if isinstance(v, (int, float)):
            return [v] * info.data.get("d", 1)
        return v

    @field_validator("n")
    @classmethod
    def validate_points(cls, v):
        for n in v:
            if n < 16 or n % 2:
                raise ValueError("each point count must be even and >= 16")
        return v

    @field_validator("L")
    @classmethod
    def validate_half_length(cls, v):
        for length in v:
            if not length > 0 or not math.isfinite(length):
                raise ValueError("each half length must be positive and finite")
        return v

    def to_grid(self) -> Grid:
        return Grid(tuple(self.n), tuple(self.L))


class NonlinearitySpec(BaseModel):
    kind: NonlinearityKind = Field(NonlinearityKind.PURE_POWER, description="Nonlinearity family")
    p: float = Field(3.0, description="Exponent for pure powers")

    @field_validator("p")
    @classmethod
    def validate_exponent(cls, v):
        if not v > 1:
            raise ValueError("p must be > 1")
        return v

    def build(self, dim: int) -> Nonlinearity:
        return Nonlinearity(self.kind, self.p, dim)


class SolitonParams(BaseModel):
    """One soliton: frequency, velocity, initial center and phase."""

    model_config = ConfigDict(frozen=True)

    omega: float = Field(..., gt=0, description="Frequency")
    v: Tuple[float, ...] = Field(..., description="Velocity vector")
    x0: Tuple[float, ...] = Field(..., description="Initial center")
    gamma: float = Field(0.0, description="Phase")

    @field_validator("v", "x0", mode="before")
    @classmethod
    def accept_scalar(cls, v):
        if isinstance(v, (int, float)):
            return (float(v),)
        return v

    @field_validator("v", "x0")
    @classmethod
    def validate_vector(cls, v):
        if len(v) not in (1, 2):
            raise ValueError("vectors must have 1 or 2 components")
        if not all(math.isfinite(c) for c in v):
            raise ValueError("vector components must be finite")
        return v

    @property
    def dim(self) -> int:
        return len(self.v)


class PlanSpec(BaseModel):
    """Time stepping block. dt is a magnitude; the direction comes from the run."""

    dt: Optional[float] = Field(None, gt=0, description="Step magnitude; defaults per dimension")
    t_start: float = Field(0.0, description="Start time of a forward run")
    t_end: float = Field(5.0, description="End time of a forward run")
    snapshot_stride: int = Field(100, ge=1, description="Steps between snapshots")
    dealias: Optional[bool] = Field(None, description="2/3-rule dealiasing; default on for p >= 5")
    ladder: List[float] = Field(default_factory=list, description="Final times S_n")


class AnalysisSpec(BaseModel):
    s_max: int = Field(3, ge=0, le=6, description="Highest Sobolev index tracked")
    t1: float = Field(2.0, gt=0, description="Analysis start time T1")
    a0: Optional[float] = Field(None, description="Cutoff half width; defaults to a quarter of the minimal gap")
    g_order: int = Field(2, ge=2, le=4, description="Sobolev index of the G functional")
    critical: Optional[bool] = Field(None, description="Use the scaling direction; defaults to criticality")
    constraints: List[str] = Field(default_factory=lambda: ["Q", "dQ"])
    ladder_b: List[float] = Field(default_factory=list, description="Second ladder for uniqueness runs")

    @field_validator("constraints")
    @classmethod
    def validate_constraints(cls, v):
        allowed = {"Q", "dQ", "xdQ"}
        unknown = [name for name in v if name not in allowed]
        if unknown:
            raise ValueError(f"unknown constraint names {unknown}; allowed: {sorted(allowed)}")
        return v


class OutputSpec(BaseModel):
    directory: str = Field("out", description="Run directory")
    snapshots: bool = Field(True, description="Write .nlsf snapshots")


class ExperimentConfig(BaseModel):
    """A complete experiment description as read from a config file."""

    name: str = Field("experiment", description="Run name")
    grid: GridSpec
    nonlinearity: NonlinearitySpec = Field(default_factory=NonlinearitySpec)
    solitons: List[SolitonParams] = Field(..., min_length=1)
    plan: PlanSpec = Field(default_factory=PlanSpec)
    analysis: AnalysisSpec = Field(default_factory=AnalysisSpec)
    output: OutputSpec = Field(default_factory=OutputSpec)
    seed: int = Field(0, description="Seed for randomized checks")
    threads: Optional[int] = Field(None, ge=1, description="Worker threads for ladder runs")

    def canonical_json(self) -> str:
        return json.dumps(self.model_dump(mode="json"), sort_keys=True, separators=(",", ":"))

    def config_hash(self) -> str:
        return hashlib.sha256(self.canonical_json().encode()).hexdigest()

    def build_nonlinearity(self) -> Nonlinearity:
        return self.nonlinearity.build(self.grid.d)

    def summary(self) -> Dict[str, Any]:
        return {
            "name": self.name,
            "d": self.grid.d,
            "K": len(self.solitons),
            "nonlinearity": self.nonlinearity.kind.value,
            "p": self.nonlinearity.p,
        }
