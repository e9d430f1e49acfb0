"""Ground states Q of  Delta Q + f(Q^2) Q = omega Q,  Q > 0 radial.

1D pure powers use the sech closed form. Everything else is found by radial
shooting on Q(0) and stored as a cubic spline with a decaying-mode tail.
"""

import math
from dataclasses import dataclass, field, replace
from enum import Enum
from functools import lru_cache
from typing import Any, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import special
from scipy.integrate import quad, simpson, solve_ivp
from scipy.interpolate import CubicSpline
from structlog import get_logger

from nlslab.errors import PreconditionError, ShootingError
from nlslab.grid import Field, Grid, laplacian
from nlslab.nonlinearity import Nonlinearity, NonlinearityKind

logger = get_logger(__name__)

SHOOT_START = 1e-6
SHOOT_RTOL = 1e-12
SHOOT_ATOL = 1e-14
BISECTION_RTOL = 1e-12
MAX_SCAN_STEPS = 200
MAX_BISECTIONS = 200
PROFILE_SAMPLES = 20001
# Q/Q(0) range searched for the spline-to-tail splice point
SPLICE_WINDOW = (1e-5, 1e-2)
RESIDUAL_TOLERANCE = 1e-7


class MassSlope(str, Enum):
    POSITIVE = "positive"
    ZERO = "zero"
    NEGATIVE = "negative"
    INDETERMINATE = "indeterminate"


@dataclass(frozen=True)
class _SechProfile:
    """Q(y) = A sech^(2/(p-1))(beta y) for the 1D pure power."""

    p: float
    omega: float

    @property
    def amplitude(self) -> float:
        return ((self.p + 1.0) * self.omega / 2.0) ** (1.0 / (self.p - 1.0))

    @property
    def beta(self) -> float:
        return (self.p - 1.0) * math.sqrt(self.omega) / 2.0

    def evaluate(self, y: np.ndarray) -> np.ndarray:
        a = np.abs(self.beta * np.asarray(y, dtype=float))
        log_sech = -a - np.log1p(np.exp(-2.0 * a)) + math.log(2.0)
        return self.amplitude * np.exp((2.0 / (self.p - 1.0)) * log_sech)

    def derivative(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        return -math.sqrt(self.omega) * np.tanh(self.beta * y) * self.evaluate(y)

    def mass(self) -> float:
        exponent = 4.0 / (self.p - 1.0)
        return self.amplitude**2 / self.beta * special.beta(exponent / 2.0, 0.5)


class _SplineProfile:
    """Shooting profile on [0, R] with the linear decaying mode r^-nu K_nu(sqrt(omega) r) beyond R."""

    def __init__(self, spline: CubicSpline, cutoff: float, omega: float, dim: int):
        self.spline = spline
        self.spline_derivative = spline.derivative()
        self.cutoff = float(cutoff)
        self.q_cut = float(spline(cutoff))
        self.rate = math.sqrt(omega)
        self.nu = (dim - 2) / 2.0

    def tail(self, r: np.ndarray) -> np.ndarray:
        ratio = special.kve(self.nu, self.rate * r) / special.kve(self.nu, self.rate * self.cutoff)
        return self.q_cut * (r / self.cutoff) ** (-self.nu) * ratio * np.exp(-self.rate * (r - self.cutoff))

    def tail_log_derivative(self, r: np.ndarray) -> np.ndarray:
        return tail_log_derivative(self.nu, self.rate, r)

    def evaluate(self, y: np.ndarray) -> np.ndarray:
        r = np.abs(np.asarray(y, dtype=float))
        inner = self.spline(np.minimum(r, self.cutoff))
        outer = self.tail(np.maximum(r, self.cutoff))
        return np.where(r <= self.cutoff, inner, outer)

    def derivative(self, y: np.ndarray) -> np.ndarray:
        y = np.asarray(y, dtype=float)
        r = np.abs(y)
        inner = self.spline_derivative(np.minimum(r, self.cutoff))
        outer_r = np.maximum(r, self.cutoff)
        outer = self.tail(outer_r) * self.tail_log_derivative(outer_r)
        return np.sign(y) * np.where(r <= self.cutoff, inner, outer)


def tail_log_derivative(nu: float, rate: float, r: np.ndarray) -> np.ndarray:
    """d/dr log(r^-nu K_nu(rate r))."""
    x = rate * np.asarray(r, dtype=float)
    return -2.0 * nu / r - rate * special.kve(nu - 1.0, x) / special.kve(nu, x)


@dataclass(frozen=True, eq=False)
class GroundState:
    omega: float
    nonlinearity: Nonlinearity
    amplitude: float
    mass: float
    residual: float
    method: str
    solver_meta: Dict[str, Any]
    profile: Any = field(repr=False)
    amplitude_scale: float = 1.0
    length_scale: float = 1.0
    flags: Tuple[str, ...] = ()

    @property
    def dim(self) -> int:
        return self.nonlinearity.dim

    def evaluate(self, r: np.ndarray) -> np.ndarray:
        return self.amplitude_scale * self.profile.evaluate(self.length_scale * np.asarray(r, dtype=float))

    def radial_derivative(self, r: np.ndarray) -> np.ndarray:
        scaled = self.length_scale * np.asarray(r, dtype=float)
        return self.amplitude_scale * self.length_scale * self.profile.derivative(scaled)

    def _offsets(self, grid: Grid, center: Optional[Sequence[float]]) -> List[np.ndarray]:
        center = tuple(center) if center is not None else (0.0,) * grid.dim
        return [axis - c for axis, c in zip(grid.coordinates(), center)]

    def on_grid(self, grid: Grid, center: Optional[Sequence[float]] = None) -> np.ndarray:
        offsets = self._offsets(grid, center)
        if grid.dim == 1:
            return self.evaluate(offsets[0])
        return self.evaluate(np.sqrt(sum(y**2 for y in offsets)))

    def gradient_on_grid(self, grid: Grid, center: Optional[Sequence[float]] = None) -> List[np.ndarray]:
        offsets = self._offsets(grid, center)
        if grid.dim == 1:
            return [self.radial_derivative(offsets[0])]
        r = np.sqrt(sum(y**2 for y in offsets))
        dq = self.radial_derivative(r)
        safe_r = np.where(r > 0, r, 1.0)
        return [np.where(r > 0, dq * y / safe_r, 0.0) for y in offsets]

    def decay_constant(self) -> float:
        """C in Q(r) <= C exp(-(sqrt(omega)/2) r) for r >= 5/sqrt(omega)."""
        rate = math.sqrt(self.omega)
        r = np.linspace(5.0 / rate, 60.0 / rate, 4001)
        return float(np.max(self.evaluate(r) * np.exp(0.5 * rate * r)))

    def profile_table(self, samples: int = 2001, r_max: Optional[float] = None) -> Tuple[np.ndarray, np.ndarray]:
        r_max = r_max if r_max is not None else 20.0 / math.sqrt(self.omega)
        r = np.linspace(0.0, r_max, samples)
        return r, self.evaluate(r)


def residual_grid(omega: float, dim: int) -> Grid:
    if dim == 1:
        return Grid((2048,), (40.0 / math.sqrt(omega),))
    return Grid((256, 256), (20.0 / math.sqrt(omega),) * 2)


def residual_on_grid(gs: GroundState, grid: Optional[Grid] = None) -> float:
    """Relative L2 residual of Delta Q + f(Q^2) Q - omega Q."""
    grid = grid or residual_grid(gs.omega, gs.dim)
    q = gs.on_grid(grid)
    field_q = Field(grid, q, label="Q")
    lap = laplacian(field_q).values.real
    residual = lap + gs.nonlinearity.f(q**2) * q - gs.omega * q
    norm_q = math.sqrt(grid.cell_volume * np.sum(q**2))
    return float(math.sqrt(grid.cell_volume * np.sum(residual**2)) / norm_q)


def _sphere_area(dim: int) -> float:
    return 2.0 if dim == 1 else 2.0 * math.pi


def _shooting_bracket_floor(nl: Nonlinearity, omega: float) -> float:
    """Q(0) where f(Q(0)^2) = omega; below it Q cannot start decreasing."""
    if nl.kind is NonlinearityKind.CUBIC_QUINTIC:
        return math.sqrt((1.0 - math.sqrt(1.0 - 4.0 * omega)) / 2.0)
    return omega ** (1.0 / (nl.p - 1.0))


def _shooting_cap(nl: Nonlinearity, omega: float) -> float:
    if nl.kind is NonlinearityKind.CUBIC_QUINTIC:
        return math.sqrt((1.0 + math.sqrt(1.0 - 4.0 * omega)) / 2.0)
    return math.inf


class _Shooter:
    def __init__(self, nl: Nonlinearity, omega: float):
        self.nl = nl
        self.omega = omega
        self.dim = nl.dim
        self.rate = math.sqrt(omega)
        self.r_max = 60.0 / self.rate

    def _rhs(self, r, y):
        q, dq = y
        return [dq, -(self.dim - 1) / r * dq + (self.omega - self.nl.f(q * q)) * q]

    def _start(self, q0: float) -> List[float]:
        curvature = (self.omega - self.nl.f(q0 * q0)) * q0 / self.dim
        return [q0 + 0.5 * curvature * SHOOT_START**2, curvature * SHOOT_START]

    def integrate(self, q0: float, dense: bool = False):
        def crossed_zero(r, y):
            return y[0]

        def turned_up(r, y):
            return y[1]

        crossed_zero.terminal = True
        crossed_zero.direction = -1
        turned_up.terminal = True
        turned_up.direction = 1
        return solve_ivp(
            self._rhs,
            (SHOOT_START, self.r_max),
            self._start(q0),
            method="DOP853",
            rtol=SHOOT_RTOL,
            atol=SHOOT_ATOL,
            events=(crossed_zero, turned_up),
            dense_output=dense,
        )

    def classify(self, q0: float) -> int:
        """+1 when Q(0) overshoots (Q crosses zero), -1 when it undershoots."""
        sol = self.integrate(q0)
        if sol.t_events[0].size:
            return 1
        if sol.t_events[1].size:
            return -1
        q, dq = sol.y[:, -1]
        # sign of the growing-mode coefficient of the linearized tail
        return -1 if dq + self.rate * q > 0 else 1


def _shoot(nl: Nonlinearity, omega: float) -> Tuple[_SplineProfile, Dict[str, Any]]:
    shooter = _Shooter(nl, omega)
    history: List[Dict[str, float]] = []
    floor = _shooting_bracket_floor(nl, omega)
    cap = _shooting_cap(nl, omega)

    lo = floor * (1.0 + 1e-6)
    if shooter.classify(lo) != -1:
        raise ShootingError(
            "Lower shooting bracket does not undershoot",
            {"omega": omega, "q0": lo, "history": history},
        )
    hi = lo
    for _ in range(MAX_SCAN_STEPS):
        candidate = hi * 1.1
        if candidate >= cap:
            candidate = 0.5 * (hi + cap)
        hi = candidate
        outcome = shooter.classify(hi)
        history.append({"q0": hi, "outcome": outcome})
        if outcome == 1:
            break
        lo = hi
    else:
        raise ShootingError(
            "No overshooting Q(0) found", {"omega": omega, "history": history}
        )

    iterations = 0
    while hi - lo > BISECTION_RTOL * hi:
        iterations += 1
        if iterations > MAX_BISECTIONS:
            raise ShootingError(
                "Bisection on Q(0) did not converge",
                {"omega": omega, "bracket": [lo, hi], "history": history[-20:]},
            )
        mid = 0.5 * (lo + hi)
        outcome = shooter.classify(mid)
        history.append({"q0": mid, "outcome": outcome})
        if outcome == 1:
            hi = mid
        else:
            lo = mid

    q0 = 0.5 * (lo + hi)
    sol = shooter.integrate(q0, dense=True)
    r_end = float(sol.t[-1])
    r_fine = np.linspace(SHOOT_START, r_end, PROFILE_SAMPLES)
    q_fine, dq_fine = sol.sol(r_fine)

    ratio = q_fine / q0
    window = (ratio > SPLICE_WINDOW[0]) & (ratio < SPLICE_WINDOW[1]) & (dq_fine < 0)
    if not np.any(window):
        raise ShootingError(
            "Shot never entered the splice window",
            {"omega": omega, "q0": q0, "r_end": r_end, "history": history[-20:]},
        )
    nu = (nl.dim - 2) / 2.0
    candidates = r_fine[window]
    mismatch = np.abs(dq_fine[window] / q_fine[window] - tail_log_derivative(nu, shooter.rate, candidates))
    cutoff = float(candidates[int(np.argmin(mismatch))])

    r_spline = np.linspace(0.0, cutoff, PROFILE_SAMPLES)
    q_spline = np.empty_like(r_spline)
    q_spline[0] = q0
    q_spline[1:] = sol.sol(r_spline[1:].clip(min=SHOOT_START))[0]
    dq_cut = float(sol.sol(cutoff)[1])
    spline = CubicSpline(r_spline, q_spline, bc_type=((1, 0.0), (1, dq_cut)))

    meta = {
        "method": "shooting",
        "q0": q0,
        "bracket": [lo, hi],
        "iterations": iterations,
        "cutoff_radius": cutoff,
        "history_length": len(history),
    }
    return _SplineProfile(spline, cutoff, omega, nl.dim), meta


def _shooting_mass(profile: _SplineProfile, dim: int) -> float:
    r = np.linspace(0.0, profile.cutoff, PROFILE_SAMPLES)
    inner = simpson(profile.evaluate(r) ** 2 * r ** (dim - 1), x=r)
    outer, _ = quad(lambda s: float(profile.tail(s)) ** 2 * s ** (dim - 1), profile.cutoff, np.inf, limit=200)
    return _sphere_area(dim) * (inner + outer)


@lru_cache(maxsize=64)
def _solve_cached(nl: Nonlinearity, omega: float, method: str) -> GroundState:
    if nl.kind is NonlinearityKind.FREE:
        raise PreconditionError("The free nonlinearity has no ground state", {"kind": nl.kind.value})
    nl.check_omega(omega)

    use_closed_form = nl.is_pure_power and nl.dim == 1 and method != "shooting"
    if use_closed_form:
        profile = _SechProfile(nl.p, omega)
        mass = profile.mass()
        amplitude = profile.amplitude
        meta: Dict[str, Any] = {"method": "closed_form", "q0": amplitude}
    else:
        profile, meta = _shoot(nl, omega)
        mass = _shooting_mass(profile, nl.dim)
        amplitude = meta["q0"]

    gs = GroundState(
        omega=omega,
        nonlinearity=nl,
        amplitude=amplitude,
        mass=mass,
        residual=0.0,
        method=meta["method"],
        solver_meta=meta,
        profile=profile,
    )
    return _finalize(gs)


def _finalize(gs: GroundState) -> GroundState:
    residual = residual_on_grid(gs)
    flags = list(gs.nonlinearity.flags)
    if residual > RESIDUAL_TOLERANCE:
        flags.append("residual_above_tolerance")
        logger.warning("Ground state residual above tolerance", omega=gs.omega, residual=residual)
    meta = dict(gs.solver_meta, residual=residual)
    gs = replace(gs, residual=residual, solver_meta=meta, flags=tuple(flags))
    logger.info(
        "Ground state ready",
        omega=gs.omega,
        dim=gs.dim,
        method=gs.method,
        amplitude=gs.amplitude,
        mass=gs.mass,
        residual=residual,
    )
    return gs


def solve_ground_state(
    nl: Nonlinearity, omega: float, d: Optional[int] = None, method: str = "auto"
) -> GroundState:
    """Ground state at frequency omega; method is "auto" or "shooting"."""
    if method not in ("auto", "shooting"):
        raise PreconditionError("method must be 'auto' or 'shooting'", {"method": method})
    if d is not None and d != nl.dim:
        nl = replace(nl, dim=d)
    return _solve_cached(nl, float(omega), method)


def rescale_ground_state(base: GroundState, omega: float) -> GroundState:
    """Q_omega(x) = (omega/omega_b)^(1/(p-1)) Q_b(sqrt(omega/omega_b) x)."""
    nl = base.nonlinearity
    if not nl.is_pure_power:
        raise PreconditionError(
            "Only pure powers have a scaling law", {"kind": nl.kind.value}
        )
    nl.check_omega(omega)
    ratio = omega / base.omega
    amplitude_factor = ratio ** (1.0 / (nl.p - 1.0))
    length_factor = math.sqrt(ratio)
    gs = replace(
        base,
        omega=float(omega),
        amplitude=base.amplitude * amplitude_factor,
        mass=base.mass * amplitude_factor**2 * length_factor ** (-nl.dim),
        amplitude_scale=base.amplitude_scale * amplitude_factor,
        length_scale=base.length_scale * length_factor,
        solver_meta=dict(base.solver_meta, rescaled_from=base.omega),
    )
    return _finalize(gs)


def mass_derivative_sign(nl: Nonlinearity, omega: float, d: Optional[int] = None) -> MassSlope:
    """Sign of d/domega of the ground-state mass."""
    if d is not None and d != nl.dim:
        nl = replace(nl, dim=d)
    if nl.is_pure_power:
        slope = 2.0 / (nl.p - 1.0) - nl.dim / 2.0
        if math.isclose(slope, 0.0, abs_tol=1e-12):
            return MassSlope.ZERO
        return MassSlope.POSITIVE if slope > 0 else MassSlope.NEGATIVE

    low, high = nl.existence_window()
    step = 1e-3 * min(omega - low, high - omega)
    m_plus = solve_ground_state(nl, omega + step).mass
    m_minus = solve_ground_state(nl, omega - step).mass
    delta = m_plus - m_minus
    noise = 1e-7 * max(m_plus, m_minus)
    logger.info("Mass slope by finite difference", omega=omega, step=step, delta=delta)
    if abs(delta) < noise:
        return MassSlope.INDETERMINATE
    return MassSlope.POSITIVE if delta > 0 else MassSlope.NEGATIVE
