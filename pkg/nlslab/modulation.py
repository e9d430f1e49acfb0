"""Modulation decomposition  z~ = z + sum_k (i a_k R_k + b_k . grad R_k [+ c_k D_k]).

The coefficients are fixed by the orthogonality conditions Re<z~, e_l> = 0 for every
direction e_l in (i R_k, d_1 R_k, ..., d_d R_k [, D_k]). The system matrix is the real
Gram matrix of the directions, blocks ordered [a; b_.1; ...; b_.d; c].
"""

import math
from dataclasses import dataclass, field
from typing import List, Optional, Sequence, Tuple

import numpy as np
from scipy import linalg
from scipy.linalg import lapack
from structlog import get_logger

from nlslab.config import settings
from nlslab.errors import PreconditionError, SingularModulationError
from nlslab.grid import Field, Grid, check_same_grid, integrate
from nlslab.groundstate import GroundState
from nlslab.soliton import (
    MultiSolitonConfig,
    evaluate_soliton,
    min_separation,
    soliton_center,
    soliton_gradient,
)

logger = get_logger(__name__)

SINGULARITY_RATIO = 1e-10
SEPARATION_FACTOR = 3.0


@dataclass
class ModulationSystem:
    time: float
    matrix: np.ndarray
    directions: List[Field]
    labels: List[str]
    K: int
    dim: int
    critical: bool
    scaling_moments: List[float] = field(default_factory=list)
    flags: List[str] = field(default_factory=list)

    @property
    def det(self) -> float:
        return float(linalg.det(self.matrix))

    @property
    def cond(self) -> float:
        return float(np.linalg.cond(self.matrix))

    @property
    def diagonal_scale(self) -> float:
        return float(np.prod(np.abs(np.diag(self.matrix))))

    def rhs(self, z: Field) -> np.ndarray:
        """y_l = Re<z, e_l>."""
        return np.array([_real_pairing(z.values, e.values, z.grid) for e in self.directions])


@dataclass
class ModulationState:
    time: float
    a: np.ndarray
    b: np.ndarray
    c: Optional[np.ndarray]
    residuals: np.ndarray
    det: float
    cond: float
    flags: List[str] = field(default_factory=list)

    def vector(self) -> np.ndarray:
        blocks = [self.a] + [self.b[:, i] for i in range(self.b.shape[1])]
        if self.c is not None:
            blocks.append(self.c)
        return np.concatenate(blocks)

    def columns(self) -> List[str]:
        K, dim = self.b.shape
        names = ["t"] + [f"a_{k}" for k in range(K)]
        names += [f"b_{k}_{i}" for i in range(dim) for k in range(K)]
        if self.c is not None:
            names += [f"c_{k}" for k in range(K)]
        names += ["det", "cond"] + [f"residual_{l}" for l in range(self.residuals.size)]
        return names

    def as_row(self) -> List[float]:
        return [self.time, *self.vector(), self.det, self.cond, *self.residuals]


def _real_pairing(a: np.ndarray, b: np.ndarray, grid: Grid) -> float:
    return float(grid.cell_volume * np.real(np.vdot(b.ravel(), a.ravel())))


def scaling_direction(params, gs: GroundState, grid: Grid, t: float) -> Field:
    """D_k = (d/2) R_k + y . grad R_k - (i/2)(v . y) R_k with y = x - x0 - v t."""
    r_k = evaluate_soliton(params, gs, grid, t)
    grad = soliton_gradient(params, gs, grid, t)
    center = soliton_center(params, t)
    offsets = [c - x0 for c, x0 in zip(grid.coordinates(), center)]
    v = np.asarray(params.v, dtype=float)
    values = 0.5 * grid.dim * r_k.values
    values = values + sum(y * g.values for y, g in zip(offsets, grad))
    values = values - 0.5j * sum(vi * y for vi, y in zip(v, offsets)) * r_k.values
    return r_k.with_values(values, label="D")


def scaling_moment(params, gs: GroundState, grid: Grid, t: float) -> float:
    """Quadrature of (y . grad Q)^2 around the soliton center."""
    center = soliton_center(params, t)
    offsets = [c - x0 for c, x0 in zip(grid.coordinates(), center)]
    dq = gs.gradient_on_grid(grid, center)
    return integrate(grid, sum(y * g for y, g in zip(offsets, dq)) ** 2)


def modulation_directions(
    config: MultiSolitonConfig,
    ground_states: Sequence[GroundState],
    grid: Grid,
    t: float,
    critical: bool = False,
) -> Tuple[List[str], List[Field]]:
    pairs = list(zip(config.solitons, ground_states))
    labels: List[str] = []
    fields: List[Field] = []
    for k, (params, gs) in enumerate(pairs):
        labels.append(f"iR_{k}")
        fields.append(1j * evaluate_soliton(params, gs, grid, t))
    gradients = [soliton_gradient(params, gs, grid, t) for params, gs in pairs]
    for i in range(grid.dim):
        for k in range(len(pairs)):
            labels.append(f"d{i}R_{k}")
            fields.append(gradients[k][i])
    if critical:
        for k, (params, gs) in enumerate(pairs):
            labels.append(f"D_{k}")
            fields.append(scaling_direction(params, gs, grid, t))
    return labels, fields


def assemble_modulation_matrix(
    config: MultiSolitonConfig,
    ground_states: Sequence[GroundState],
    grid: Grid,
    t: float,
    critical: bool = False,
) -> ModulationSystem:
    labels, directions = modulation_directions(config, ground_states, grid, t, critical)
    n = len(directions)
    matrix = np.empty((n, n))
    for l in range(n):
        for m in range(l, n):
            matrix[l, m] = matrix[m, l] = _real_pairing(directions[m].values, directions[l].values, grid)

    system = ModulationSystem(
        time=t,
        matrix=matrix,
        directions=directions,
        labels=labels,
        K=config.K,
        dim=grid.dim,
        critical=critical,
    )
    if critical:
        system.scaling_moments = [
            scaling_moment(params, gs, grid, t) for params, gs in zip(config.solitons, ground_states)
        ]
    if config.K > 1:
        separation = min_separation(config, t)
        floor = SEPARATION_FACTOR / math.sqrt(min(s.omega for s in config.solitons))
        if separation < floor:
            system.flags.append("under_separated")
            logger.warning("Solitons insufficiently separated for modulation", t=t, separation=separation, floor=floor)
    return system


def _full_pivot_solve(matrix: np.ndarray, rhs: np.ndarray) -> np.ndarray:
    lu, ipiv, jpiv, info = lapack.dgetc2(matrix)
    if info > 0:
        # dgetc2 replaced pivot `info` by its smallest admissible value
        raise SingularModulationError(
            "Full-pivot factorization hit a vanishing pivot",
            {"pivot": int(info), "size": int(matrix.shape[0])},
        )
    x, scale = lapack.dgesc2(lu, rhs, ipiv, jpiv)
    return x / scale


def solve_modulation(
    z: Field,
    config: MultiSolitonConfig,
    ground_states: Sequence[GroundState],
    t: float,
    critical: bool = False,
    system: Optional[ModulationSystem] = None,
) -> ModulationState:
    if critical and not config.nonlinearity.is_critical:
        logger.info("Scaling direction requested for a non-critical nonlinearity")
    system = system or assemble_modulation_matrix(config, ground_states, z.grid, t, critical)
    check_same_grid(z, system.directions[0])
    det = system.det
    if abs(det) < SINGULARITY_RATIO * system.diagonal_scale:
        raise SingularModulationError(
            "Modulation matrix is numerically singular",
            {"t": t, "det": det, "diagonal_scale": system.diagonal_scale},
        )

    x = _full_pivot_solve(system.matrix, -system.rhs(z))
    ztilde = build_ztilde(z, x, system)
    residuals = system.rhs(ztilde)

    K, dim = system.K, system.dim
    state = ModulationState(
        time=t,
        a=x[:K].copy(),
        b=np.stack([x[K * (1 + i) : K * (2 + i)] for i in range(dim)], axis=1),
        c=x[K * (1 + dim) :].copy() if system.critical else None,
        residuals=residuals,
        det=det,
        cond=system.cond,
        flags=list(system.flags),
    )
    tolerance = settings.orthogonality_tolerance * max(z.l2_norm(), 1e-300)
    if np.max(np.abs(residuals), initial=0.0) > tolerance:
        state.flags.append("orthogonality_residual")
        logger.warning(
            "Post-solve orthogonality residual above tolerance",
            t=t,
            residual=float(np.max(np.abs(residuals))),
            tolerance=tolerance,
        )
    return state


def build_ztilde(z: Field, x: np.ndarray, system: ModulationSystem) -> Field:
    values = np.array(z.values)
    for coefficient, direction in zip(x, system.directions):
        values += coefficient * direction.values
    return z.with_values(values, label="ztilde")


def ztilde_from_state(z: Field, state: ModulationState, system: ModulationSystem) -> Field:
    return build_ztilde(z, state.vector(), system)


@dataclass
class DetLimitReport:
    times: np.ndarray
    dets: np.ndarray
    limit: float
    gaps: np.ndarray
    shrinking: bool
    log_slope: float


def limiting_determinant(
    config: MultiSolitonConfig,
    ground_states: Sequence[GroundState],
    grid: Grid,
    critical: bool = False,
) -> float:
    """prod_k (int Q_k^2) det[int d_i Q_k d_j Q_k] (times |Lambda Q_k|^2 when critical)."""
    limit = 1.0
    zero = (0.0,) * grid.dim
    for gs in ground_states:
        q = gs.on_grid(grid, zero)
        dq = gs.gradient_on_grid(grid, zero)
        gram = np.array([[integrate(grid, a * b) for b in dq] for a in dq])
        factor = integrate(grid, q**2) * float(linalg.det(gram))
        if critical:
            offsets = grid.coordinates()
            moment = integrate(grid, sum(y * g for y, g in zip(offsets, dq)) ** 2)
            factor *= moment - grid.dim**2 / 4.0 * integrate(grid, q**2)
        limit *= factor
    return limit


def verify_det_limit(
    config: MultiSolitonConfig,
    ground_states: Sequence[GroundState],
    grid: Grid,
    t_samples: Sequence[float],
    critical: bool = False,
) -> DetLimitReport:
    times = np.asarray(t_samples, dtype=float)
    if np.any(np.diff(times) <= 0):
        raise PreconditionError("t_samples must be increasing", {"t_samples": list(times)})
    dets = np.array(
        [assemble_modulation_matrix(config, ground_states, grid, t, critical).det for t in times]
    )
    limit = limiting_determinant(config, ground_states, grid, critical)
    gaps = np.abs(dets - limit) / abs(limit)
    shrinking = bool(np.all(np.diff(gaps) < 0))
    positive = gaps > 0
    log_slope = (
        float(np.polyfit(times[positive], np.log(gaps[positive]), 1)[0])
        if np.count_nonzero(positive) >= 2
        else 0.0
    )
    logger.info("Determinant limit check", limit=limit, gaps=gaps.tolist(), shrinking=shrinking)
    return DetLimitReport(times, dets, limit, gaps, shrinking, log_slope)


def gram_positivity(gs: GroundState, grid: Grid) -> float:
    """Smallest eigenvalue of [int d_i Q d_j Q]."""
    dq = gs.gradient_on_grid(grid)
    gram = np.array([[integrate(grid, a * b) for b in dq] for a in dq])
    return float(linalg.eigvalsh(gram)[0])


def coefficient_derivatives(states: Sequence[ModulationState]) -> Tuple[np.ndarray, np.ndarray]:
    """Centered finite differences of the coefficient vectors across snapshots."""
    if len(states) < 3:
        raise PreconditionError("At least three states are needed", {"states": len(states)})
    ordered = sorted(states, key=lambda s: s.time)
    times = np.array([s.time for s in ordered])
    vectors = np.array([s.vector() for s in ordered])
    return times, np.gradient(vectors, times, axis=0)
