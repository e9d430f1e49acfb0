"""Linearized operators around a ground state and their constrained spectra.

    L+ w = -Delta w + omega w - (f(Q^2) + 2 Q^2 f'(Q^2)) w
    L- w = -Delta w + omega w - f(Q^2) w

1D operators use a dense Fourier second-derivative matrix on a periodic box. In
d = 2 the operators are reduced to an angular sector m and discretized with a
cell-centred radial scheme in the r dr inner product.
"""

import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Dict, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft as spfft
from scipy import linalg
from structlog import get_logger

from nlslab.errors import (
    DegenerateConstraintError,
    EigenpairNotFoundError,
    NotCriticalError,
    PreconditionError,
    ResolutionError,
)
from nlslab.grid import Field, Grid, integrate, laplacian
from nlslab.groundstate import GroundState
from nlslab.nonlinearity import Criticality

logger = get_logger(__name__)

POINTS_PER_DECAY_LENGTH = 12
CONSTRAINT_GRAM_FLOOR = 1e-10
DEFAULT_POINTS = 512
DEFAULT_HALF_LENGTH = 20.0
RADIAL_POINTS = 400
RADIAL_EXTENT = 20.0
CONSTRAINT_SECTORS = {"Q": 0, "xdQ": 0, "dQ": 1}


class OperatorKind(str, Enum):
    L_PLUS = "L_plus"
    L_MINUS = "L_minus"
    IL_FULL = "iL_full"


@dataclass(frozen=True, eq=False)
class Discretization:
    """Nodes, quadrature weights and the weighted stiffness form of -Delta."""

    nodes: np.ndarray
    weights: np.ndarray
    stiffness: np.ndarray
    radial: bool = False
    mode: int = 0

    @property
    def size(self) -> int:
        return self.nodes.size

    @property
    def spacing(self) -> float:
        return float(self.nodes[1] - self.nodes[0])

    def h1_gram(self) -> np.ndarray:
        return np.diag(self.weights) + self.stiffness

    def inner(self, a: np.ndarray, b: np.ndarray) -> float:
        return float(np.sum(self.weights * a * b))


def fourier_second_derivative(grid: Grid) -> np.ndarray:
    """Dense matrix of the spectral second derivative on a 1D periodic grid."""
    k2 = grid.wavenumbers(0) ** 2
    identity = np.eye(grid.n_points[0])
    matrix = np.real(spfft.ifft(-k2[:, None] * spfft.fft(identity, axis=0), axis=0))
    return 0.5 * (matrix + matrix.T)


def fourier_discretization(grid: Grid) -> Discretization:
    if grid.dim != 1:
        raise PreconditionError("Fourier operators are assembled on 1D grids", {"dim": grid.dim})
    h = grid.spacing[0]
    weights = np.full(grid.n_points[0], h)
    return Discretization(grid.axis(0), weights, -h * fourier_second_derivative(grid))


def radial_discretization(n: int, radius: float, mode: int = 0) -> Discretization:
    """Cell-centred nodes r_j = (j + 1/2) dr; regular at r = 0, zero beyond the last cell."""
    dr = radius / n
    nodes = (np.arange(n) + 0.5) * dr
    faces = (np.arange(n) + 1.0) * dr
    weights = nodes * dr
    lower_faces = np.concatenate(([0.0], faces[:-1]))
    diagonal = (faces + lower_faces) / dr + mode**2 * dr / nodes
    off = -faces[:-1] / dr
    stiffness = np.diag(diagonal) + np.diag(off, 1) + np.diag(off, -1)
    return Discretization(nodes, weights, stiffness, radial=True, mode=mode)


@dataclass(frozen=True, eq=False)
class LinearizedOperator:
    kind: OperatorKind
    gs: GroundState
    disc: Discretization
    potential: np.ndarray
    form: Optional[np.ndarray]
    matrix: np.ndarray

    @property
    def omega(self) -> float:
        return self.gs.omega

    @property
    def size(self) -> int:
        return self.disc.size

    def apply(self, w: np.ndarray) -> np.ndarray:
        return self.matrix @ w

    def quadratic_form(self, w: np.ndarray) -> float:
        return float(w @ self.form @ w)

    def h1_norm_squared(self, w: np.ndarray) -> float:
        return float(w @ self.disc.h1_gram() @ w)

    def rayleigh_quotient(self, w: np.ndarray) -> float:
        return self.quadratic_form(w) / self.h1_norm_squared(w)

    def spectrum(self, count: int = 5) -> np.ndarray:
        """Lowest eigenvalues of the operator (L2-weighted)."""
        count = min(count, self.size)
        return linalg.eigh(
            self.form, np.diag(self.disc.weights), eigvals_only=True, subset_by_index=[0, count - 1]
        )

    def eigenpairs(self, count: int = 5) -> Tuple[np.ndarray, np.ndarray]:
        count = min(count, self.size)
        return linalg.eigh(self.form, np.diag(self.disc.weights), subset_by_index=[0, count - 1])


def _profile_on(disc: Discretization, gs: GroundState) -> np.ndarray:
    return gs.evaluate(disc.nodes)


def _potentials(gs: GroundState, q: np.ndarray) -> Tuple[np.ndarray, np.ndarray]:
    nl = gs.nonlinearity
    rho = q**2
    v_minus = np.asarray(nl.f(rho))
    v_plus = v_minus + 2.0 * rho * np.asarray(nl.f_prime(rho))
    return v_plus, v_minus


def _check_resolution(disc: Discretization, gs: GroundState) -> None:
    limit = 2.0 / math.sqrt(gs.omega) / POINTS_PER_DECAY_LENGTH
    if disc.spacing > limit * (1.0 + 1e-12):
        raise ResolutionError(
            f"Spacing {disc.spacing:.4g} does not resolve Q; need <= {limit:.4g}",
            {"spacing": disc.spacing, "limit": limit, "omega": gs.omega},
        )


def default_discretization(gs: GroundState, mode: int = 0) -> Discretization:
    scale = 1.0 / math.sqrt(gs.omega)
    if gs.dim == 1:
        return fourier_discretization(Grid((DEFAULT_POINTS,), (DEFAULT_HALF_LENGTH * scale,)))
    return radial_discretization(RADIAL_POINTS, RADIAL_EXTENT * scale, mode)


def assemble(
    kind: Union[OperatorKind, str],
    gs: GroundState,
    grid: Optional[Grid] = None,
    disc: Optional[Discretization] = None,
) -> LinearizedOperator:
    kind = OperatorKind(kind)
    if disc is None:
        disc = fourier_discretization(grid) if grid is not None else default_discretization(gs)
    if gs.dim == 2 and not disc.radial:
        raise PreconditionError("Two-dimensional ground states need a radial discretization")
    _check_resolution(disc, gs)

    q = _profile_on(disc, gs)
    v_plus, v_minus = _potentials(gs, q)
    weights = disc.weights

    def symmetric_form(potential: np.ndarray) -> np.ndarray:
        form = disc.stiffness + np.diag(weights * (gs.omega - potential))
        return 0.5 * (form + form.T)

    if kind is OperatorKind.IL_FULL:
        plus = symmetric_form(v_plus) / weights[:, None]
        minus = symmetric_form(v_minus) / weights[:, None]
        n = disc.size
        matrix = np.zeros((2 * n, 2 * n))
        matrix[:n, n:] = minus
        matrix[n:, :n] = -plus
        return LinearizedOperator(kind, gs, disc, v_plus, None, matrix)

    potential = v_plus if kind is OperatorKind.L_PLUS else v_minus
    form = symmetric_form(potential)
    return LinearizedOperator(kind, gs, disc, potential, form, form / weights[:, None])


@dataclass
class CoercivityReport:
    constraint_names: List[str]
    min_eig_constrained: float
    min_eig_unconstrained: float
    mu_plus: float
    spectrum_head: np.ndarray
    minimizer: np.ndarray = field(repr=False, default=None)
    basis: np.ndarray = field(repr=False, default=None)

    def as_dict(self) -> Dict[str, object]:
        return {
            "constraints": self.constraint_names,
            "min_eig_constrained": self.min_eig_constrained,
            "min_eig_unconstrained": self.min_eig_unconstrained,
            "mu_plus": self.mu_plus,
            "spectrum_head": [float(v) for v in self.spectrum_head],
        }


def _constraint_array(constraint: Union[Field, np.ndarray]) -> np.ndarray:
    if isinstance(constraint, Field):
        return np.real(constraint.values).ravel()
    return np.asarray(constraint, dtype=float).ravel()


def constrained_min_eig(
    op: LinearizedOperator,
    constraints: Sequence[Union[Field, np.ndarray]],
    names: Optional[Sequence[str]] = None,
) -> CoercivityReport:
    """min <Lw, w> / |w|^2_{H^1} over w L2-orthogonal to every constraint."""
    if op.form is None:
        raise PreconditionError("Coercivity needs a self-adjoint operator", {"kind": op.kind.value})
    disc = op.disc
    gram_h1 = disc.h1_gram()
    names = list(names) if names is not None else [f"c{i}" for i in range(len(constraints))]
    unconstrained = float(linalg.eigh(op.form, gram_h1, eigvals_only=True, subset_by_index=[0, 0])[0])

    if constraints:
        columns = np.column_stack([_constraint_array(c) for c in constraints])
        if columns.shape[0] != disc.size:
            raise PreconditionError(
                "Constraint size does not match the discretization",
                {"constraint_size": columns.shape[0], "nodes": disc.size},
            )
        constraint_gram = columns.T @ (disc.weights[:, None] * columns)
        eigs = linalg.eigvalsh(constraint_gram)
        if eigs[0] < CONSTRAINT_GRAM_FLOOR * max(eigs[-1], 1.0):
            raise DegenerateConstraintError(
                "Constraints are linearly dependent",
                {"gram_eigenvalues": eigs.tolist(), "names": names},
            )
        basis = linalg.null_space((disc.weights[:, None] * columns).T)
        reduced_form = basis.T @ op.form @ basis
        reduced_gram = basis.T @ gram_h1 @ basis
        values, vectors = linalg.eigh(
            0.5 * (reduced_form + reduced_form.T),
            0.5 * (reduced_gram + reduced_gram.T),
            subset_by_index=[0, 0],
        )
        mu = float(values[0])
        minimizer = basis @ vectors[:, 0]
    else:
        basis = np.eye(disc.size)
        values, vectors = linalg.eigh(op.form, gram_h1, subset_by_index=[0, 0])
        mu = float(values[0])
        minimizer = vectors[:, 0]

    report = CoercivityReport(
        constraint_names=names,
        min_eig_constrained=mu,
        min_eig_unconstrained=unconstrained,
        mu_plus=mu,
        spectrum_head=op.spectrum(5),
        minimizer=minimizer,
        basis=basis,
    )
    logger.info(
        "Constrained coercivity",
        kind=op.kind.value,
        constraints=names,
        mu=mu,
        unconstrained=unconstrained,
    )
    return report


def standard_constraints(gs: GroundState, names: Sequence[str], disc: Discretization) -> List[np.ndarray]:
    """Q, dQ (x-derivative, or the m = 1 radial profile Q') and xdQ (x . grad Q = r Q')."""
    arrays = []
    q = gs.evaluate(disc.nodes)
    dq = gs.radial_derivative(disc.nodes)
    for name in names:
        if name == "Q":
            arrays.append(q)
        elif name == "dQ":
            arrays.append(dq)
        elif name == "xdQ":
            arrays.append(disc.nodes * dq)
        else:
            raise PreconditionError(f"Unknown constraint '{name}'", {"allowed": ["Q", "dQ", "xdQ"]})
    return arrays


def sector_coercivity(
    gs: GroundState,
    names: Sequence[str],
    m_max: int = 3,
    n: int = RADIAL_POINTS,
    radius: Optional[float] = None,
    kind: OperatorKind = OperatorKind.L_PLUS,
) -> Dict[int, CoercivityReport]:
    """Constrained minimum in each angular sector m = 0..m_max (d = 2)."""
    if gs.dim != 2:
        raise PreconditionError("Angular sectors exist for d = 2 only", {"dim": gs.dim})
    radius = radius if radius is not None else RADIAL_EXTENT / math.sqrt(gs.omega)
    reports = {}
    for mode in range(m_max + 1):
        disc = radial_discretization(n, radius, mode)
        op = assemble(kind, gs, disc=disc)
        sector_names = [name for name in names if CONSTRAINT_SECTORS[name] == mode]
        reports[mode] = constrained_min_eig(op, standard_constraints(gs, sector_names, disc), sector_names)
    return reports


@dataclass
class FormCoercivityReport:
    plus: CoercivityReport
    minus: CoercivityReport

    @property
    def mu(self) -> float:
        return min(self.plus.mu_plus, self.minus.mu_plus)


def form_coercivity(
    gs: GroundState,
    plus_constraints: Sequence[str],
    minus_constraints: Sequence[str],
    grid: Optional[Grid] = None,
) -> FormCoercivityReport:
    """H(w) = <L+ w1, w1> + <L- w2, w2> is block diagonal; its constrained minimum is the smaller block minimum."""
    plus_op = assemble(OperatorKind.L_PLUS, gs, grid=grid)
    minus_op = assemble(OperatorKind.L_MINUS, gs, grid=grid)
    plus = constrained_min_eig(
        plus_op, standard_constraints(gs, plus_constraints, plus_op.disc), plus_constraints
    )
    minus = constrained_min_eig(
        minus_op, standard_constraints(gs, minus_constraints, minus_op.disc), minus_constraints
    )
    return FormCoercivityReport(plus, minus)


@dataclass
class CriticalIdentityReport:
    identity_residual: float
    nonzero_value: float
    lambda_norm_squared: float
    relative_gap: float
    moment: float
    ibp_gap: float


def critical_identity_grid(gs: GroundState) -> Grid:
    scale = 1.0 / math.sqrt(gs.omega)
    if gs.dim == 1:
        return Grid((2048,), (30.0 * scale,))
    return Grid((256, 256), (20.0 * scale,) * 2)


def verify_critical_identities(gs: GroundState, grid: Optional[Grid] = None) -> CriticalIdentityReport:
    """L+ Lambda Q = -2 omega Q and int (x.grad Q)^2 - (d^2/4) int Q^2 = |Lambda Q|^2 > 0,
    with Lambda Q = (d/2) Q + x . grad Q."""
    if gs.nonlinearity.criticality is not Criticality.CRITICAL:
        raise NotCriticalError(
            "Critical identities need p = 1 + 4/d",
            {"p": gs.nonlinearity.p, "dim": gs.dim},
        )
    grid = grid or critical_identity_grid(gs)
    d = grid.dim
    q = gs.on_grid(grid)
    dq = gs.gradient_on_grid(grid)
    coords = grid.coordinates()
    x_grad_q = sum(x * g for x, g in zip(coords, dq))
    lam_q = 0.5 * d * q + x_grad_q

    v_plus, _ = _potentials(gs, q)
    lap = laplacian(Field(grid, lam_q, label="LambdaQ")).values.real
    l_plus = -lap + gs.omega * lam_q - v_plus * lam_q
    mass = integrate(grid, q**2)
    residual = math.sqrt(integrate(grid, (l_plus + 2.0 * gs.omega * q) ** 2) / mass)

    moment = integrate(grid, x_grad_q**2)
    nonzero_value = moment - d**2 / 4.0 * mass
    norm_sq = integrate(grid, lam_q**2)
    ibp_gap = abs(integrate(grid, q * x_grad_q) + 0.5 * d * mass) / mass

    report = CriticalIdentityReport(
        identity_residual=residual,
        nonzero_value=nonzero_value,
        lambda_norm_squared=norm_sq,
        relative_gap=abs(nonzero_value - norm_sq) / norm_sq,
        moment=moment,
        ibp_gap=ibp_gap,
    )
    logger.info("Critical identities", residual=residual, nonzero_value=nonzero_value, relative_gap=report.relative_gap)
    return report


@dataclass
class InstabilityReport:
    e0: float
    Y: np.ndarray
    nodes: np.ndarray
    residual: float

    @property
    def w1(self) -> np.ndarray:
        return self.Y.real

    @property
    def w2(self) -> np.ndarray:
        return self.Y.imag

    def as_field(self, grid: Grid) -> Field:
        return Field(grid, self.Y, label="Y")


def instability_eigenpair(
    gs: GroundState,
    grid: Optional[Grid] = None,
    points: int = 500,
    half_length: float = 20.0,
) -> InstabilityReport:
    """Real eigenvalue e0 > 0 of the linearized generator with eigenvector Y = w1 + i w2.

    Convention: |Y|_{L2} = 1 and the first non-negligible entry of (w1, w2) is positive.
    """
    if gs.nonlinearity.criticality is not Criticality.SUPERCRITICAL:
        raise PreconditionError(
            "The instability eigenpair exists for p > 1 + 4/d only",
            {"p": gs.nonlinearity.p, "dim": gs.dim},
        )
    if gs.dim == 1:
        grid = grid or Grid((points,), (half_length / math.sqrt(gs.omega),))
        op = assemble(OperatorKind.IL_FULL, gs, grid=grid)
    else:
        op = assemble(OperatorKind.IL_FULL, gs, disc=radial_discretization(points, half_length / math.sqrt(gs.omega)))
    n = op.size
    weights = op.disc.weights

    eigenvalues, vectors = linalg.eig(op.matrix)
    scale = max(1.0, float(np.max(np.abs(eigenvalues.real))))
    real_mask = (np.abs(eigenvalues.imag) < 1e-8 * scale) & (eigenvalues.real > 1e-6)
    if not np.any(real_mask):
        raise EigenpairNotFoundError(
            "No real positive eigenvalue of the linearized generator",
            {"largest_real_part": float(np.max(eigenvalues.real))},
        )
    candidates = np.flatnonzero(real_mask)
    index = candidates[int(np.argmax(eigenvalues.real[candidates]))]
    e0 = float(eigenvalues.real[index])

    vector = vectors[:, index]
    pivot = int(np.argmax(np.abs(vector)))
    vector = np.real(vector * np.conj(vector[pivot]) / abs(vector[pivot]))
    norm = math.sqrt(float(np.sum(np.concatenate([weights, weights]) * vector**2)))
    vector = vector / norm
    significant = np.flatnonzero(np.abs(vector) > 1e-12 * np.max(np.abs(vector)))
    if vector[significant[0]] < 0:
        vector = -vector

    defect = op.matrix @ vector - e0 * vector
    residual = math.sqrt(float(np.sum(np.concatenate([weights, weights]) * defect**2)))
    y = vector[:n] + 1j * vector[n:]
    logger.info("Instability eigenpair", e0=e0, residual=residual, points=n)
    return InstabilityReport(e0=e0, Y=y, nodes=op.disc.nodes, residual=residual)
