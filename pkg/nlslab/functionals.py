"""Modified Sobolev functional G_s, the moving cutoff family and the localized Weinstein energies."""

import math
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.integrate import cumulative_trapezoid
from structlog import get_logger

from nlslab.errors import CutoffWindowError, DerivativeOrderError, InsufficientDataError, PreconditionError
from nlslab.grid import (
    Field,
    Grid,
    check_same_grid,
    gradient,
    integrate,
    multi_indices,
    multinomial,
    sobolev_norm,
    spectral_derivative,
)
from nlslab.groundstate import GroundState
from nlslab.nonlinearity import Nonlinearity
from nlslab.propagator import Trajectory
from nlslab.soliton import MultiSolitonConfig, evaluate_soliton, min_separation, soliton_gradient

logger = get_logger(__name__)

PSI_SAMPLES = 10001
MAX_G_ORDER = {1: 4, 2: 3}
MIN_FIT_POINTS = 5
# bump values below this are treated as exactly zero
BUMP_FLOOR = 1e-250


@dataclass
class FunctionalReport:
    value: float
    time: float
    parts: Dict[str, float] = field(default_factory=dict)


@dataclass
class DriftReport:
    times: np.ndarray
    values: np.ndarray
    drift: np.ndarray
    envelope: np.ndarray
    slope: float
    intercept: float
    max_drift: float
    reliable: bool
    flags: List[str] = field(default_factory=list)


@dataclass
class GapReport:
    time: float
    h: float
    h_tilde: float
    gap: float
    z_h1: float

    @property
    def z_h1_cubed(self) -> float:
        return self.z_h1**3


# G_s


def eval_G(field_u: Field, nl: Nonlinearity, s: int) -> FunctionalReport:
    """sum_{|a|=s} C(s,a)|d^a u|^2 - sum_{|b|=s-1} C(s-1,b) Re(u^2 (d^b conj u)^2) f'(|u|^2)."""
    dim = field_u.grid.dim
    if s < 2 or s > MAX_G_ORDER[dim]:
        raise DerivativeOrderError(
            f"G is implemented for 2 <= s <= {MAX_G_ORDER[dim]} in d={dim}", {"s": s, "dim": dim}
        )
    grid = field_u.grid
    u = field_u.values

    gradient_part = 0.0
    for alpha in multi_indices(dim, s):
        d_alpha = spectral_derivative(field_u, alpha).values
        gradient_part += multinomial(s, alpha) * integrate(grid, np.abs(d_alpha) ** 2)

    fp = nl.f_prime(np.abs(u) ** 2)
    correction_part = 0.0
    for beta in multi_indices(dim, s - 1):
        d_beta = spectral_derivative(field_u, beta).values
        integrand = np.real(u**2 * np.conj(d_beta) ** 2) * fp
        correction_part += multinomial(s - 1, beta) * integrate(grid, integrand)

    return FunctionalReport(
        value=gradient_part - correction_part,
        time=field_u.time,
        parts={"gradient": gradient_part, "correction": correction_part},
    )


def eval_G_series(trajectory: Trajectory, nl: Nonlinearity, s: int) -> Tuple[np.ndarray, np.ndarray]:
    times = trajectory.times
    values = np.array([eval_G(snapshot, nl, s).value for snapshot in trajectory.snapshots])
    return times, values


def eval_G_drift(
    trajectory: Trajectory,
    nl: Nonlinearity,
    s: int,
    config: Optional[MultiSolitonConfig] = None,
    exclude_fraction: float = 0.1,
) -> DriftReport:
    """G(t) - G(S) along a backward run started at S, with a log-linear fit of the drift envelope.

    The envelope at t is the largest |drift| over snapshots at times >= t.
    """
    times, values = eval_G_series(trajectory, nl, s)
    start_index = int(np.argmax(times))
    drift = values - values[start_index]

    order = np.argsort(times)
    sorted_times = times[order]
    sorted_drift = np.abs(drift[order])
    envelope_sorted = np.maximum.accumulate(sorted_drift[::-1])[::-1]
    envelope = np.empty_like(envelope_sorted)
    envelope[order] = envelope_sorted

    t_low, t_high = sorted_times[0], sorted_times[-1]
    cut = t_high - exclude_fraction * (t_high - t_low)
    usable = (times < cut) & (envelope > 0)
    flags: List[str] = []
    if np.count_nonzero(usable) < MIN_FIT_POINTS:
        raise InsufficientDataError(
            "Fewer than 5 usable points for the drift fit",
            {"usable": int(np.count_nonzero(usable)), "snapshots": int(times.size)},
        )
    slope, intercept = np.polyfit(times[usable], np.log(envelope[usable]), 1)

    reliable = True
    if config is not None and config.K > 1:
        separation = min_separation(config, float(np.min(times[usable])))
        floor = 3.0 / math.sqrt(min(sol.omega for sol in config.solitons))
        if separation < floor:
            reliable = False
            flags.append("overlapping_solitons")
            logger.warning("Drift fit window contains overlapping solitons", separation=separation, floor=floor)

    return DriftReport(
        times=times,
        values=values,
        drift=drift,
        envelope=envelope,
        slope=float(slope),
        intercept=float(intercept),
        max_drift=float(np.max(np.abs(drift))),
        reliable=reliable,
        flags=flags,
    )


# Cutoffs


class PsiTable:
    """psi(x) = int_x^A0 b / int_-A0^A0 b with the bump b(y) = exp(-A0^2/(A0^2 - y^2))."""

    def __init__(self, a0: float, samples: int = PSI_SAMPLES):
        self.a0 = float(a0)
        self.nodes = np.linspace(-self.a0, self.a0, samples)
        bump = self.bump(self.nodes)
        cumulative = cumulative_trapezoid(bump, self.nodes, initial=0.0)
        self.normalization = float(cumulative[-1])
        self.values = 1.0 - cumulative / self.normalization

    def _exponent_terms(self, y: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray, np.ndarray]:
        a2 = self.a0**2
        inside = np.abs(y) < self.a0
        gap = np.where(inside, a2 - y**2, a2)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            g = np.where(inside, -a2 / gap, -np.inf)
            bump = np.exp(g)
            live = bump > BUMP_FLOOR
            g1 = np.where(live, -2.0 * a2 * y / gap**2, 0.0)
            g2 = np.where(live, -2.0 * a2 * (a2 + 3.0 * y**2) / gap**3, 0.0)
        return np.where(live, bump, 0.0), g1, g2, live

    def bump(self, y: np.ndarray) -> np.ndarray:
        return self._exponent_terms(np.asarray(y, dtype=float))[0]

    def __call__(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        return np.interp(x, self.nodes, self.values, left=1.0, right=0.0)

    def derivatives(self, x: np.ndarray) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
        """psi', psi'', psi''' from the analytic bump."""
        b, g1, g2, _ = self._exponent_terms(np.asarray(x, dtype=float))
        first = -b / self.normalization
        second = -g1 * b / self.normalization
        third = -(g2 + g1**2) * b / self.normalization
        return first, second, third


@dataclass(frozen=True, eq=False)
class CutoffFamily:
    a0: float
    sigma: Tuple[float, ...]
    xi: Tuple[float, ...]
    ordering: Tuple[int, ...]
    psi: Optional[PsiTable] = field(repr=False, default=None)

    def __post_init__(self):
        if not self.a0 > 0:
            raise CutoffWindowError("A0 must be positive", {"a0": self.a0})
        if self.psi is None:
            object.__setattr__(self, "psi", PsiTable(self.a0))

    @property
    def K(self) -> int:
        return len(self.ordering)

    @classmethod
    def from_config(cls, config: MultiSolitonConfig, a0: Optional[float] = None) -> "CutoffFamily":
        first_v = [s.v[0] for s in config.solitons]
        ordering = tuple(int(i) for i in np.argsort(first_v, kind="stable"))
        v_sorted = [config.solitons[i].v[0] for i in ordering]
        x_sorted = [config.solitons[i].x0[0] for i in ordering]
        gaps = np.diff(v_sorted)
        if gaps.size and np.min(gaps) <= 0:
            raise CutoffWindowError(
                "First velocity components must be pairwise distinct for the cutoff family",
                {"v1": v_sorted},
            )
        if gaps.size:
            limit = 0.5 * float(np.min(gaps))
            a0 = 0.5 * limit if a0 is None else a0
            if not (0 < a0 < limit):
                raise CutoffWindowError(
                    f"A0={a0} must lie in (0, {limit}), half the minimal velocity gap",
                    {"a0": a0, "upper": limit},
                )
        else:
            a0 = 1.0 if a0 is None else a0
        sigma = tuple(0.5 * (v_sorted[k] + v_sorted[k + 1]) for k in range(len(gaps)))
        xi = tuple(0.5 * (x_sorted[k] + x_sorted[k + 1]) for k in range(len(gaps)))
        return cls(float(a0), sigma, xi, ordering)


@dataclass
class CutoffFields:
    """phi_k and its x1/t derivatives, listed in the config's soliton order."""

    time: float
    phi: List[Field]
    dphi_dx: List[Field]
    d3phi_dx3: List[Field]
    dphi_dt: List[Field]


def eval_cutoffs(cf: CutoffFamily, grid: Grid, t: float) -> CutoffFields:
    if not t > 0:
        raise PreconditionError("Cutoffs are defined for t > 0 only", {"t": t})
    x1 = grid.coordinates()[0]
    zero = np.zeros(grid.shape)
    one = np.ones(grid.shape)

    # psi_0 .. psi_K in sorted order, with their derivatives
    psi = [zero]
    dpsi_dx, d3psi_dx3, dpsi_dt = [zero], [zero], [zero]
    for sigma, xi in zip(cf.sigma, cf.xi):
        eta = (x1 - xi - sigma * t) / t
        first, _, third = cf.psi.derivatives(eta)
        psi.append(cf.psi(eta))
        dpsi_dx.append(first / t)
        d3psi_dx3.append(third / t**3)
        dpsi_dt.append(-first * (eta + sigma) / t)
    psi.append(one)
    dpsi_dx.append(zero)
    d3psi_dx3.append(zero)
    dpsi_dt.append(zero)

    by_soliton: Dict[int, Tuple[np.ndarray, ...]] = {}
    for rank, index in enumerate(cf.ordering):
        k = rank + 1
        by_soliton[index] = (
            psi[k] - psi[k - 1],
            dpsi_dx[k] - dpsi_dx[k - 1],
            d3psi_dx3[k] - d3psi_dx3[k - 1],
            dpsi_dt[k] - dpsi_dt[k - 1],
        )

    def fields(position: int, name: str) -> List[Field]:
        return [
            Field(grid, by_soliton[index][position], t, label=f"{name}_{index}")
            for index in range(cf.K)
        ]

    return CutoffFields(
        time=t,
        phi=fields(0, "phi"),
        dphi_dx=fields(1, "dphi_dx"),
        d3phi_dx3=fields(2, "d3phi_dx3"),
        dphi_dt=fields(3, "dphi_dt"),
    )


@dataclass
class LocalizationReport:
    times: np.ndarray
    values: np.ndarray
    constant: float
    gamma: float


def cutoff_localization_check(
    config: MultiSolitonConfig,
    ground_states: Sequence[GroundState],
    cf: CutoffFamily,
    grid: Grid,
    times: Sequence[float],
) -> LocalizationReport:
    """sup_x (|R_k| + |d_x1 R_k|)|phi_j| e^{(sqrt(omega_k)/4)|x - x_k(t)|} over j != k, fitted as C e^{-gamma t}."""
    values = []
    coords = grid.coordinates()
    for t in times:
        cutoffs = eval_cutoffs(cf, grid, t)
        worst = 0.0
        for k, (params, gs) in enumerate(zip(config.solitons, ground_states)):
            r_k = np.abs(evaluate_soliton(params, gs, grid, t).values)
            dr_k = np.abs(soliton_gradient(params, gs, grid, t)[0].values)
            center = np.asarray(params.x0) + np.asarray(params.v) * t
            distance = np.sqrt(sum((c - x0) ** 2 for c, x0 in zip(coords, center)))
            weight = np.exp(0.25 * math.sqrt(params.omega) * distance)
            for j in range(config.K):
                if j == k:
                    continue
                lhs = (r_k + dr_k) * np.abs(cutoffs.phi[j].values) * weight
                worst = max(worst, float(np.max(lhs)))
        values.append(worst)
    values = np.asarray(values)
    positive = values > 0
    if np.count_nonzero(positive) < 2:
        return LocalizationReport(np.asarray(times), values, float(np.max(values, initial=0.0)), math.inf)
    slope, intercept = np.polyfit(np.asarray(times)[positive], np.log(values[positive]), 1)
    return LocalizationReport(np.asarray(times), values, float(math.exp(intercept)), float(-slope))


# Weinstein functionals


def _kinetic_terms(ztilde: Field) -> Tuple[np.ndarray, List[np.ndarray]]:
    grads = [g.values for g in gradient(ztilde)]
    grad_sq = sum(np.abs(g) ** 2 for g in grads)
    current = [np.imag(g * np.conj(ztilde.values)) for g in grads]
    return grad_sq, current


def eval_weinstein_H(
    ztilde: Field,
    config: MultiSolitonConfig,
    ground_states: Sequence[GroundState],
    cf: CutoffFamily,
    t: float,
) -> FunctionalReport:
    """sum_k int {|grad z|^2 - (f(|R_k|^2)|z|^2 + 2 Re(conj(R_k) z)^2 f'(|R_k|^2))
    + (omega_k + |v_k|^2/4)|z|^2 - v_k . Im(grad z conj z)} phi_k."""
    grid = ztilde.grid
    nl = config.nonlinearity
    cutoffs = eval_cutoffs(cf, grid, t)
    z = ztilde.values
    z_sq = np.abs(z) ** 2
    grad_sq, current = _kinetic_terms(ztilde)

    parts: Dict[str, float] = {}
    total = 0.0
    for k, (params, gs) in enumerate(zip(config.solitons, ground_states)):
        r_k = evaluate_soliton(params, gs, grid, t).values
        rho = np.abs(r_k) ** 2
        phi = cutoffs.phi[k].values
        v = np.asarray(params.v, dtype=float)
        gradient_term = integrate(grid, grad_sq * phi)
        potential_term = integrate(
            grid, (nl.f(rho) * z_sq + 2.0 * np.real(np.conj(r_k) * z) ** 2 * nl.f_prime(rho)) * phi
        )
        mass_term = (params.omega + float(v @ v) / 4.0) * integrate(grid, z_sq * phi)
        momentum_term = sum(vi * integrate(grid, c * phi) for vi, c in zip(v, current))
        parts[f"gradient_{k}"] = gradient_term
        parts[f"potential_{k}"] = -potential_term
        parts[f"mass_{k}"] = mass_term
        parts[f"momentum_{k}"] = -momentum_term
        total += gradient_term - potential_term + mass_term - momentum_term
    return FunctionalReport(value=total, time=t, parts=parts)


def eval_weinstein_Htilde(
    ztilde: Field,
    varphi: Field,
    nl: Nonlinearity,
    config: MultiSolitonConfig,
    cf: CutoffFamily,
    t: float,
) -> FunctionalReport:
    """Same as H with the quadratic potential replaced by
    F(|z + varphi|^2) - F(|varphi|^2) - 2 Re(z conj varphi) f(|varphi|^2)."""
    check_same_grid(ztilde, varphi)
    grid = ztilde.grid
    cutoffs = eval_cutoffs(cf, grid, t)
    z = ztilde.values
    phi_ref = varphi.values
    z_sq = np.abs(z) ** 2
    rho = np.abs(phi_ref) ** 2
    remainder = nl.F(np.abs(z + phi_ref) ** 2) - nl.F(rho) - 2.0 * np.real(z * np.conj(phi_ref)) * nl.f(rho)
    grad_sq, current = _kinetic_terms(ztilde)

    parts: Dict[str, float] = {}
    total = 0.0
    for k, params in enumerate(config.solitons):
        phi = cutoffs.phi[k].values
        v = np.asarray(params.v, dtype=float)
        gradient_term = integrate(grid, grad_sq * phi)
        potential_term = integrate(grid, remainder * phi)
        mass_term = (params.omega + float(v @ v) / 4.0) * integrate(grid, z_sq * phi)
        momentum_term = sum(vi * integrate(grid, c * phi) for vi, c in zip(v, current))
        parts[f"gradient_{k}"] = gradient_term
        parts[f"potential_{k}"] = -potential_term
        parts[f"mass_{k}"] = mass_term
        parts[f"momentum_{k}"] = -momentum_term
        total += gradient_term - potential_term + mass_term - momentum_term
    return FunctionalReport(value=total, time=t, parts=parts)


def compare_H_Htilde(
    ztilde: Field,
    varphi: Field,
    config: MultiSolitonConfig,
    ground_states: Sequence[GroundState],
    cf: CutoffFamily,
    t: float,
) -> GapReport:
    h = eval_weinstein_H(ztilde, config, ground_states, cf, t).value
    h_tilde = eval_weinstein_Htilde(ztilde, varphi, config.nonlinearity, config, cf, t).value
    return GapReport(time=t, h=h, h_tilde=h_tilde, gap=abs(h - h_tilde), z_h1=sobolev_norm(ztilde, 1))


def eval_main_term(
    ztilde: Field, cf: CutoffFamily, config: MultiSolitonConfig, t: float
) -> FunctionalReport:
    """Dominant part of dH~/dt; every term carries a cutoff derivative, hence O(|z|^2_{H^1}/t)."""
    grid = ztilde.grid
    cutoffs = eval_cutoffs(cf, grid, t)
    z_sq = np.abs(ztilde.values) ** 2
    grad_sq, current = _kinetic_terms(ztilde)

    first = second = third = 0.0
    for k, params in enumerate(config.solitons):
        v = np.asarray(params.v, dtype=float)
        dt_phi = cutoffs.dphi_dt[k].values
        dx_phi = cutoffs.dphi_dx[k].values
        d3x_phi = cutoffs.d3phi_dx3[k].values
        frequency = params.omega + float(v @ v) / 4.0
        first += frequency * (integrate(grid, z_sq * dt_phi) + 2.0 * integrate(grid, current[0] * dx_phi))
        second += v[0] * (2.0 * integrate(grid, grad_sq * dx_phi) - 0.5 * integrate(grid, z_sq * d3x_phi))
        third += sum(vi * integrate(grid, c * dt_phi) for vi, c in zip(v, current))
    return FunctionalReport(
        value=first - second - third,
        time=t,
        parts={"frequency": first, "transport": -second, "current": -third},
    )
