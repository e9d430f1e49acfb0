"""Strang split-step integration of  du/dt = i(Delta u + f(|u|^2) u)  on the periodic grid."""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Tuple

import numpy as np
from pydantic import BaseModel, Field as PydanticField, field_validator, model_validator
from scipy import fft as spfft
from structlog import get_logger

from nlslab.config import settings
from nlslab.errors import BlowUpError, PlanError, PreconditionError
from nlslab.grid import Field, Grid
from nlslab.nonlinearity import Nonlinearity

logger = get_logger(__name__)

DEALIAS_FRACTION = 2.0 / 3.0
BOUNDARY_BAND = 0.1
RESOLUTION_FACTOR = 0.5


class PropagationPlan(BaseModel):
    """Signed step and time window. Negative dt runs backward in time."""

    dt: float = PydanticField(..., description="Signed time step")
    t_start: float = PydanticField(..., description="Initial time")
    t_end: float = PydanticField(..., description="Final time")
    snapshot_stride: int = PydanticField(100, ge=1, description="Steps between snapshots")
    dealias: Optional[bool] = PydanticField(None, description="2/3-rule dealiasing; None picks by nonlinearity")

    @field_validator("dt")
    @classmethod
    def validate_step(cls, v):
        if v == 0 or not math.isfinite(v):
            raise ValueError("dt must be finite and non-zero")
        return v

    @model_validator(mode="after")
    def validate_direction(self):
        span = self.t_end - self.t_start
        if span != 0 and math.copysign(1.0, span) != math.copysign(1.0, self.dt):
            raise ValueError("sign(dt) must equal sign(t_end - t_start)")
        return self

    @property
    def n_steps(self) -> int:
        span = abs(self.t_end - self.t_start)
        return int(math.ceil(span / abs(self.dt) - 1e-9)) if span > 0 else 0

    @property
    def effective_dt(self) -> float:
        """Step actually taken: the span split into n_steps equal steps."""
        if self.n_steps == 0:
            return self.dt
        return (self.t_end - self.t_start) / self.n_steps

    def check_resolution(self, grid: Grid) -> None:
        limit = RESOLUTION_FACTOR * min(grid.spacing) ** 2
        if abs(self.dt) > limit:
            raise PlanError(
                f"|dt|={abs(self.dt)} exceeds the resolution guard {limit:.3e}",
                {"dt": self.dt, "limit": limit, "spacing": list(grid.spacing)},
            )

    def wants_dealias(self, nl: Nonlinearity) -> bool:
        if self.dealias is not None:
            return self.dealias
        return nl.is_pure_power and nl.p >= 5


def conserved_quantities(field_u: Field, nl: Nonlinearity) -> Dict[str, object]:
    """Mass, energy, momentum vector and boundary-tail magnitude of one field."""
    grid = field_u.grid
    spectrum = spfft.fftn(field_u.values)
    power = np.abs(spectrum) ** 2
    weight = grid.cell_volume / grid.size
    density = np.abs(field_u.values) ** 2

    mass = float(grid.cell_volume * np.sum(density))
    kinetic = 0.5 * weight * float(np.sum(grid.k_squared() * power))
    potential = 0.5 * grid.cell_volume * float(np.sum(nl.F(density)))

    momentum = []
    for axis in range(grid.dim):
        k = grid.wavenumbers(axis).copy()
        k[grid.n_points[axis] // 2] = 0.0
        shape = [1] * grid.dim
        shape[axis] = k.size
        momentum.append(weight * float(np.sum(k.reshape(shape) * power)))

    return {
        "mass": mass,
        "energy": kinetic - potential,
        "momentum": tuple(momentum),
        "boundary_tail": boundary_tail(field_u),
    }


def boundary_tail(field_u: Field) -> float:
    """max |u| in the outer band of the box."""
    grid = field_u.grid
    band = np.zeros(grid.shape, dtype=bool)
    for axis, coords in enumerate(grid.coordinates()):
        band |= np.abs(coords) >= (1.0 - BOUNDARY_BAND) * grid.half_length[axis]
    return float(np.max(np.abs(field_u.values[band])))


@dataclass
class ConservedLedger:
    times: List[float] = field(default_factory=list)
    mass: List[float] = field(default_factory=list)
    energy: List[float] = field(default_factory=list)
    momentum: List[Tuple[float, ...]] = field(default_factory=list)
    boundary_tail: List[float] = field(default_factory=list)

    def record(self, field_u: Field, nl: Nonlinearity) -> None:
        quantities = conserved_quantities(field_u, nl)
        self.times.append(field_u.time)
        self.mass.append(quantities["mass"])
        self.energy.append(quantities["energy"])
        self.momentum.append(quantities["momentum"])
        self.boundary_tail.append(quantities["boundary_tail"])

    def relative_drift(self, name: str) -> float:
        series = np.asarray(getattr(self, name), dtype=float)
        if series.size == 0:
            return 0.0
        reference = abs(series[0]) if abs(series[0]) > 1e-12 else 1.0
        return float(np.max(np.abs(series - series[0])) / reference)

    def columns(self) -> List[str]:
        dim = len(self.momentum[0]) if self.momentum else 1
        return ["t", "mass", "energy"] + [f"momentum_{i}" for i in range(dim)] + ["boundary_tail"]

    def as_array(self) -> np.ndarray:
        rows = [
            [t, m, e, *p, b]
            for t, m, e, p, b in zip(self.times, self.mass, self.energy, self.momentum, self.boundary_tail)
        ]
        return np.asarray(rows, dtype=float).reshape(len(rows), len(self.columns()))


@dataclass
class Trajectory:
    snapshots: List[Field]
    ledger: ConservedLedger
    plan: PropagationPlan
    flags: List[str] = field(default_factory=list)

    @property
    def times(self) -> np.ndarray:
        return np.array([s.time for s in self.snapshots])

    @property
    def final(self) -> Field:
        return self.snapshots[-1]

    def at(self, t: float) -> Field:
        times = self.times
        index = int(np.argmin(np.abs(times - t)))
        if abs(times[index] - t) > 0.5 * abs(self.plan.effective_dt):
            raise PreconditionError(
                f"No snapshot at t={t}",
                {"t": t, "nearest": float(times[index])},
            )
        return self.snapshots[index]


class _SplitStepper:
    """Precomputed multipliers for one (grid, dt, nonlinearity) triple."""

    def __init__(self, grid: Grid, dt: float, nl: Nonlinearity, dealias: bool):
        self.grid = grid
        self.dt = dt
        self.nl = nl
        self.linear = np.exp(-1j * grid.k_squared() * dt)
        if dealias:
            self.linear = self.linear * dealias_mask(grid)

    def half_nonlinear(self, values: np.ndarray) -> np.ndarray:
        return values * np.exp(0.5j * self.dt * self.nl.f(np.abs(values) ** 2))

    def step(self, values: np.ndarray) -> np.ndarray:
        values = self.half_nonlinear(values)
        values = spfft.ifftn(self.linear * spfft.fftn(values))
        return self.half_nonlinear(values)


def dealias_mask(grid: Grid) -> np.ndarray:
    mask = np.ones(grid.shape)
    for axis in range(grid.dim):
        k = np.abs(grid.wavenumbers(axis))
        keep = (k <= DEALIAS_FRACTION * k.max()).astype(float)
        shape = [1] * grid.dim
        shape[axis] = k.size
        mask = mask * keep.reshape(shape)
    return mask


def step_strang(field_u: Field, dt: float, nl: Nonlinearity, dealias: bool = False) -> Field:
    """One Strang step: half nonlinear phase, exact linear flow, half nonlinear phase."""
    stepper = _SplitStepper(field_u.grid, dt, nl, dealias)
    values = stepper.step(field_u.values)
    if not np.all(np.isfinite(values)):
        raise BlowUpError(
            "Non-finite values after a split step",
            {"t": field_u.time, "last_max_amplitude": float(np.max(np.abs(field_u.values)))},
        )
    return field_u.with_values(values, time=field_u.time + dt)


def _check_memory(grid: Grid, plan: PropagationPlan) -> None:
    snapshots = plan.n_steps // plan.snapshot_stride + 2
    needed_mb = snapshots * grid.size * 16 / 2**20
    if needed_mb > settings.snapshot_memory_mb:
        raise PlanError(
            f"Snapshots need {needed_mb:.1f} MB, limit is {settings.snapshot_memory_mb} MB",
            {"snapshots": snapshots, "needed_mb": needed_mb},
        )


def propagate(field_u: Field, plan: PropagationPlan, nl: Nonlinearity) -> Trajectory:
    grid = field_u.grid
    plan.check_resolution(grid)
    _check_memory(grid, plan)
    if not math.isclose(field_u.time, plan.t_start, rel_tol=0.0, abs_tol=1e-12):
        raise PlanError(
            "Initial field time does not match plan.t_start",
            {"field_time": field_u.time, "t_start": plan.t_start},
        )

    dt = plan.effective_dt
    dealias = plan.wants_dealias(nl)
    stepper = _SplitStepper(grid, dt, nl, dealias)
    ledger = ConservedLedger()
    snapshots = [field_u]
    ledger.record(field_u, nl)

    values = np.array(field_u.values)
    n_steps = plan.n_steps
    for n in range(1, n_steps + 1):
        previous_peak = float(np.max(np.abs(values)))
        values = stepper.step(values)
        if not np.all(np.isfinite(values)):
            t_fail = plan.t_start + (n - 1) * dt
            logger.error("Blow-up during propagation", t=t_fail, last_max_amplitude=previous_peak)
            raise BlowUpError(
                "Non-finite values during propagation",
                {"t": t_fail, "step": n, "last_max_amplitude": previous_peak},
            )
        if n % plan.snapshot_stride == 0 or n == n_steps:
            t = plan.t_start + n * dt
            snapshot = Field(grid, values, t, label=field_u.label, flags=field_u.flags)
            snapshots.append(snapshot)
            ledger.record(snapshot, nl)

    trajectory = Trajectory(snapshots, ledger, plan)
    mass_drift = ledger.relative_drift("mass")
    energy_drift = ledger.relative_drift("energy")
    if mass_drift > settings.mass_drift_ceiling:
        trajectory.flags.append("mass_drift")
        logger.warning("Mass drift above ceiling", drift=mass_drift, ceiling=settings.mass_drift_ceiling)
    if energy_drift > settings.energy_drift_ceiling:
        trajectory.flags.append("energy_drift")
        logger.warning("Energy drift above ceiling", drift=energy_drift, ceiling=settings.energy_drift_ceiling)

    logger.info(
        "Propagation finished",
        t_start=plan.t_start,
        t_end=plan.t_end,
        steps=n_steps,
        dt=dt,
        dealias=dealias,
        mass_drift=mass_drift,
        energy_drift=energy_drift,
        boundary_tail=max(ledger.boundary_tail),
    )
    return trajectory
