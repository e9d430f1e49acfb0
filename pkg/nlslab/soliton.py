"""Boosted solitons R_k, their sum R and the symmetry transforms of the flow.

    R_k(t, x) = Q(x - x0 - v t) exp(i(v.x/2 + (omega - |v|^2/4) t + gamma))
"""

import itertools
import math
from dataclasses import dataclass
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft as spfft
from structlog import get_logger

from nlslab.errors import ConfigError, DegenerateVelocityError, PreconditionError
from nlslab.grid import Field, Grid, check_same_grid, laplacian, spectral_interpolate
from nlslab.groundstate import GroundState, solve_ground_state
from nlslab.models import ExperimentConfig, SolitonParams
from nlslab.nonlinearity import Nonlinearity

logger = get_logger(__name__)

BOUNDARY_MARGIN = 5.0

__all__ = [
    "SolitonParams",
    "MultiSolitonConfig",
    "evaluate_soliton",
    "soliton_gradient",
    "soliton_time_derivative",
    "evaluate_multisoliton",
    "apply_invariance",
    "apply_scaling",
]


@dataclass(frozen=True)
class MultiSolitonConfig:
    solitons: Tuple[SolitonParams, ...]
    nonlinearity: Nonlinearity

    def __post_init__(self):
        solitons = tuple(self.solitons)
        object.__setattr__(self, "solitons", solitons)
        if not solitons:
            raise ConfigError("A configuration needs at least one soliton")
        dim = self.nonlinearity.dim
        for index, soliton in enumerate(solitons):
            if len(soliton.v) != dim or len(soliton.x0) != dim:
                raise ConfigError(
                    f"solitons[{index}]: v and x0 must have {dim} components",
                    {"index": index, "v": soliton.v, "x0": soliton.x0},
                )
            self.nonlinearity.check_omega(soliton.omega)
        for (i, a), (j, b) in itertools.combinations(enumerate(solitons), 2):
            if np.allclose(a.v, b.v, rtol=0.0, atol=1e-14):
                raise DegenerateVelocityError(
                    f"solitons[{i}] and solitons[{j}] share the velocity {list(a.v)}",
                    {"pair": [i, j], "v": list(a.v)},
                )

    @classmethod
    def from_experiment(cls, config: ExperimentConfig) -> "MultiSolitonConfig":
        return cls(tuple(config.solitons), config.build_nonlinearity())

    @property
    def K(self) -> int:
        return len(self.solitons)

    @property
    def dim(self) -> int:
        return self.nonlinearity.dim

    def ground_states(self) -> List[GroundState]:
        """One ground state per soliton; solves are cached per omega."""
        return [solve_ground_state(self.nonlinearity, s.omega) for s in self.solitons]

    def single(self, index: int) -> "MultiSolitonConfig":
        return MultiSolitonConfig((self.solitons[index],), self.nonlinearity)


def soliton_center(params: SolitonParams, t: float) -> np.ndarray:
    return np.asarray(params.x0, dtype=float) + np.asarray(params.v, dtype=float) * t


def soliton_centers(config: MultiSolitonConfig, t: float) -> np.ndarray:
    return np.array([soliton_center(s, t) for s in config.solitons])


def min_separation(config: MultiSolitonConfig, t: float) -> float:
    centers = soliton_centers(config, t)
    if len(centers) < 2:
        return math.inf
    return min(
        float(np.linalg.norm(a - b)) for a, b in itertools.combinations(centers, 2)
    )


def _phase(params: SolitonParams, grid: Grid, t: float) -> np.ndarray:
    v = np.asarray(params.v, dtype=float)
    galilean = sum(0.5 * vi * xi for vi, xi in zip(v, grid.coordinates()))
    return galilean + (params.omega - float(v @ v) / 4.0) * t + params.gamma


def _check_pair(params: SolitonParams, gs: GroundState) -> None:
    if not math.isclose(gs.omega, params.omega, rel_tol=1e-12):
        raise PreconditionError(
            "Ground state frequency does not match the soliton",
            {"gs_omega": gs.omega, "omega": params.omega},
        )
    if not gs.amplitude > 0:
        raise PreconditionError("Ground state has zero amplitude", {"omega": gs.omega})


def _boundary_flags(params: SolitonParams, grid: Grid, t: float) -> Tuple[str, ...]:
    center = soliton_center(params, t)
    margin = BOUNDARY_MARGIN / math.sqrt(params.omega)
    for c, length in zip(center, grid.half_length):
        if abs(c) > length - margin:
            logger.warning(
                "Soliton center near the box boundary",
                center=center.tolist(),
                half_length=list(grid.half_length),
                t=t,
            )
            return ("near_boundary",)
    return ()


def evaluate_soliton(params: SolitonParams, gs: GroundState, grid: Grid, t: float) -> Field:
    _check_pair(params, gs)
    q = gs.on_grid(grid, soliton_center(params, t))
    values = q * np.exp(1j * _phase(params, grid, t))
    return Field(grid, values, t, label="R", flags=_boundary_flags(params, grid, t))


def soliton_gradient(params: SolitonParams, gs: GroundState, grid: Grid, t: float) -> List[Field]:
    """grad R_k = (grad Q + (i v/2) Q) e^{i phase}, from the analytic profile derivative."""
    _check_pair(params, gs)
    center = soliton_center(params, t)
    q = gs.on_grid(grid, center)
    dq = gs.gradient_on_grid(grid, center)
    rotation = np.exp(1j * _phase(params, grid, t))
    return [
        Field(grid, (dq[i] + 0.5j * params.v[i] * q) * rotation, t, label=f"dR/dx{i}")
        for i in range(grid.dim)
    ]


def soliton_time_derivative(
    params: SolitonParams, gs: GroundState, grid: Grid, t: float
) -> Tuple[Field, Field]:
    """Both expressions for dR_k/dt.

    Returns (-v.grad R + i(omega + |v|^2/4) R,  i(Delta R + f(|R|^2) R)).
    """
    r = evaluate_soliton(params, gs, grid, t)
    grad = soliton_gradient(params, gs, grid, t)
    v = np.asarray(params.v, dtype=float)
    transport = -sum(vi * g.values for vi, g in zip(v, grad))
    first = transport + 1j * (params.omega + float(v @ v) / 4.0) * r.values
    nl = gs.nonlinearity
    second = 1j * (laplacian(r).values + nl.f(np.abs(r.values) ** 2) * r.values)
    return (
        r.with_values(first, label="dR/dt[kinematic]"),
        r.with_values(second, label="dR/dt[equation]"),
    )


def nls_residual(params: SolitonParams, gs: GroundState, grid: Grid, t: float) -> float:
    """||dR/dt - i(Delta R + f R)|| / ||R|| with the kinematic dR/dt."""
    kinematic, equation = soliton_time_derivative(params, gs, grid, t)
    norm = evaluate_soliton(params, gs, grid, t).l2_norm()
    return (kinematic - equation).l2_norm() / norm


def evaluate_multisoliton(
    config: MultiSolitonConfig,
    ground_states: Optional[Sequence[GroundState]],
    grid: Grid,
    t: float,
) -> Field:
    ground_states = ground_states or config.ground_states()
    total = np.zeros(grid.shape, dtype=np.complex128)
    flags: List[str] = []
    for params, gs in zip(config.solitons, ground_states):
        r_k = evaluate_soliton(params, gs, grid, t)
        total += r_k.values
        flags.extend(f for f in r_k.flags if f not in flags)
    return Field(grid, total, t, label="R", flags=tuple(flags))


def _translate(values: np.ndarray, grid: Grid, shift: Sequence[float]) -> np.ndarray:
    spectrum = spfft.fftn(values)
    for axis, a in enumerate(shift):
        if a == 0.0:
            continue
        multiplier = np.exp(-1j * grid.wavenumbers(axis) * a)
        shape = [1] * grid.dim
        shape[axis] = grid.n_points[axis]
        spectrum = spectrum * multiplier.reshape(shape)
    return spfft.ifftn(spectrum)


def apply_invariance(
    field: Field,
    t0: float,
    x0: Sequence[float],
    v: Sequence[float],
    gamma: float,
) -> Field:
    """Galilean/translation/phase image u(t - t0, x - x0 - v t) e^{i(v.x/2 - |v|^2 t/4 + gamma)}.

    A field holding u at time s becomes the transformed solution at time s + t0.
    """
    grid = field.grid
    x0 = np.asarray(x0, dtype=float)
    v = np.asarray(v, dtype=float)
    if x0.size != grid.dim or v.size != grid.dim:
        raise PreconditionError("x0 and v must have one entry per axis", {"dim": grid.dim})
    t = field.time + t0
    shifted = _translate(field.values, grid, x0 + v * t)
    galilean = sum(0.5 * vi * xi for vi, xi in zip(v, grid.coordinates()))
    phase = galilean - float(v @ v) * t / 4.0 + gamma
    return field.with_values(shifted * np.exp(1j * phase), time=t, label=f"G[{field.label}]")


def apply_scaling(field: Field, lam: float, p: float) -> Field:
    """lam^(-1/(p-1)) u(t/lam, x/sqrt(lam)); a field at time s maps to time lam s.

    Points x/sqrt(lam) outside the box wrap periodically.
    """
    if not lam > 0:
        raise PreconditionError("Scaling parameter must be positive", {"lambda": lam})
    if not p > 1:
        raise PreconditionError("Scaling needs a pure power exponent p > 1", {"p": p})
    grid = field.grid
    points = [grid.axis(i) / math.sqrt(lam) for i in range(grid.dim)]
    values = lam ** (-1.0 / (p - 1.0)) * spectral_interpolate(field, points)
    return field.with_values(values, time=lam * field.time, label=f"S[{field.label}]")


def cross_overlap(a: Field, b: Field) -> float:
    """Quadrature of |a b|; measures the interaction of two separated solitons."""
    check_same_grid(a, b)
    return float(a.grid.cell_volume * np.sum(np.abs(a.values * b.values)))
