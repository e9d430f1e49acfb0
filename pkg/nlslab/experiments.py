"""Construction ladder and uniqueness diagnostic.

A construction rung integrates the exact sum of solitons backward from a final
time S_n down to T1 and records |u_n(t) - R(t)|_{H^s}. Rates are fitted on a
common separated window; the run with the largest S_n is the designated
multi-soliton.
"""

import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from structlog import get_logger

from nlslab.config import settings
from nlslab.errors import BlowUpError, GridMismatchError, PlanError, PreconditionError
from nlslab.functionals import (
    CutoffFamily,
    eval_main_term,
    eval_weinstein_H,
    eval_weinstein_Htilde,
)
from nlslab.grid import Field, Grid, inner_product_real, sobolev_norm
from nlslab.groundstate import GroundState
from nlslab.modulation import (
    assemble_modulation_matrix,
    coefficient_derivatives,
    solve_modulation,
    ztilde_from_state,
)
from nlslab.models import ExperimentConfig
from nlslab.nonlinearity import Criticality
from nlslab.propagator import PropagationPlan, Trajectory, propagate
from nlslab.soliton import MultiSolitonConfig, evaluate_multisoliton, evaluate_soliton, min_separation

logger = get_logger(__name__)

SEPARATION_FACTOR = 3.0
FINAL_TRANSIENT_FRACTION = 0.1
TIME_DIGITS = 9
DECAY_GAMMAS = np.linspace(0.0, 4.0, 81)
DECAY_GROWTH = 10.0
COERCIVITY_PROJECTION_WEIGHT = 10.0
UNIQUENESS_WINDOW_FRACTION = 2.0 / 3.0


@dataclass
class ConstructionSetup:
    config: MultiSolitonConfig
    grid: Grid
    dt: float
    ladder: Tuple[float, ...]
    t1: float
    s_max: int = 3
    snapshot_stride: int = 100
    dealias: Optional[bool] = None
    threads: int = 1
    a0: Optional[float] = None
    critical: Optional[bool] = None

    def __post_init__(self):
        self.ladder = tuple(float(s) for s in self.ladder)
        if not self.dt > 0:
            raise PlanError("dt is a positive step magnitude", {"dt": self.dt})

    @classmethod
    def from_experiment(
        cls,
        experiment: ExperimentConfig,
        ladder: Optional[Sequence[float]] = None,
        threads: Optional[int] = None,
    ) -> "ConstructionSetup":
        grid = experiment.grid.to_grid()
        default_dt = settings.default_dt_1d if grid.dim == 1 else settings.default_dt_2d
        return cls(
            config=MultiSolitonConfig.from_experiment(experiment),
            grid=grid,
            dt=experiment.plan.dt or default_dt,
            ladder=tuple(ladder if ladder is not None else experiment.plan.ladder),
            t1=experiment.analysis.t1,
            s_max=experiment.analysis.s_max,
            snapshot_stride=experiment.plan.snapshot_stride,
            dealias=experiment.plan.dealias,
            threads=threads or experiment.threads or settings.threads,
            a0=experiment.analysis.a0,
            critical=experiment.analysis.critical,
        )

    @property
    def uses_scaling_direction(self) -> bool:
        if self.critical is not None:
            return self.critical
        return self.config.nonlinearity.is_critical

    def plan_for(self, s_final: float) -> PropagationPlan:
        return PropagationPlan(
            dt=-self.dt,
            t_start=s_final,
            t_end=self.t1,
            snapshot_stride=self.snapshot_stride,
            dealias=self.dealias,
        )


@dataclass
class LadderRun:
    s_final: float
    times: np.ndarray
    errors: Dict[int, np.ndarray]
    floor: Dict[int, np.ndarray]
    rates: Dict[int, float] = field(default_factory=dict)
    fit_points: int = 0
    trajectory: Optional[Trajectory] = field(default=None, repr=False)
    failed: bool = False
    failure: Dict[str, object] = field(default_factory=dict)
    flags: List[str] = field(default_factory=list)

    @property
    def at_t1(self) -> Optional[Field]:
        return None if self.trajectory is None else self.trajectory.final


@dataclass
class ThetaScheduleRow:
    s: int
    theta_s: float
    interpolated: float


@dataclass
class ConstructionReport:
    ladder: Tuple[float, ...]
    t1: float
    s_max: int
    runs: List[LadderRun]
    fit_window: Tuple[float, float]
    theta_fit: float
    schedule: List[ThetaScheduleRow]
    cauchy_gaps: Dict[int, List[float]]
    rate_spread: float
    flags: List[str] = field(default_factory=list)

    @property
    def designated(self) -> LadderRun:
        completed = [run for run in self.runs if not run.failed]
        if not completed:
            raise BlowUpError("Every ladder run failed", {"ladder": list(self.ladder)})
        return completed[-1]

    def rates(self, s: int = 1) -> List[float]:
        return [run.rates.get(s, math.nan) for run in self.runs if not run.failed]

    def series_columns(self) -> List[str]:
        return ["S_n", "t"] + [f"err_H{s}" for s in range(self.s_max + 1)] + [
            f"floor_H{s}" for s in range(self.s_max + 1)
        ]

    def series_rows(self) -> np.ndarray:
        rows = []
        for run in self.runs:
            for i, t in enumerate(run.times):
                rows.append(
                    [run.s_final, t]
                    + [run.errors[s][i] for s in range(self.s_max + 1)]
                    + [run.floor[s][i] for s in range(self.s_max + 1)]
                )
        return np.asarray(rows, dtype=float).reshape(len(rows), len(self.series_columns()))

    def rate_columns(self) -> List[str]:
        return ["S_n"] + [f"rho_{s}" for s in range(self.s_max + 1)] + ["fit_points"]

    def rate_rows(self) -> np.ndarray:
        rows = [
            [run.s_final] + [run.rates.get(s, math.nan) for s in range(self.s_max + 1)] + [run.fit_points]
            for run in self.runs
        ]
        return np.asarray(rows, dtype=float).reshape(len(rows), len(self.rate_columns()))

    def gap_columns(self) -> List[str]:
        return ["S_n", "S_n+1"] + [f"gap_H{s}" for s in range(self.s_max + 1)]

    def gap_rows(self) -> np.ndarray:
        completed = [run.s_final for run in self.runs if not run.failed]
        rows = [
            [a, b] + [self.cauchy_gaps[s][i] for s in range(self.s_max + 1)]
            for i, (a, b) in enumerate(zip(completed[:-1], completed[1:]))
        ]
        return np.asarray(rows, dtype=float).reshape(len(rows), len(self.gap_columns()))


def predict_theta_schedule(theta: float, d: int, s_max: int) -> List[ThetaScheduleRow]:
    """theta_0 = 2 theta, theta_1 = theta, theta_s = min(theta_{s-1}/2, 2 theta/(d+1)),
    next to the interpolated exponent 2 theta/(s+1)."""
    if not theta > 0 or not math.isfinite(theta):
        raise PreconditionError("theta must be positive and finite", {"theta": theta})
    rows = []
    previous = 0.0
    for s in range(s_max + 1):
        if s == 0:
            value = 2.0 * theta
        elif s == 1:
            value = theta
        else:
            value = min(previous / 2.0, 2.0 * theta / (d + 1))
        rows.append(ThetaScheduleRow(s, value, 2.0 * theta / (s + 1)))
        previous = value
    return rows


def _sobolev_series(
    trajectory: Trajectory,
    config: MultiSolitonConfig,
    ground_states: Sequence[GroundState],
    s_max: int,
) -> Dict[int, np.ndarray]:
    series: Dict[int, List[float]] = {s: [] for s in range(s_max + 1)}
    for snapshot in trajectory.snapshots:
        reference = evaluate_multisoliton(config, ground_states, snapshot.grid, snapshot.time)
        difference = snapshot - reference
        for s in series:
            series[s].append(sobolev_norm(difference, s))
    return {s: np.asarray(values) for s, values in series.items()}


def backward_trajectory(
    setup: ConstructionSetup,
    s_final: float,
    config: Optional[MultiSolitonConfig] = None,
    ground_states: Optional[Sequence[GroundState]] = None,
) -> Trajectory:
    """Solve backward from u(S) = R(S) down to T1."""
    config = config or setup.config
    ground_states = ground_states or config.ground_states()
    initial = evaluate_multisoliton(config, ground_states, setup.grid, s_final)
    return propagate(initial, setup.plan_for(s_final), config.nonlinearity)


def _backward_run(
    setup: ConstructionSetup,
    config: MultiSolitonConfig,
    ground_states: Sequence[GroundState],
    s_final: float,
) -> Tuple[Optional[Trajectory], Dict[str, object]]:
    try:
        return backward_trajectory(setup, s_final, config, ground_states), {}
    except BlowUpError as exc:
        logger.error("Backward run blew up", s_final=s_final, **exc.details)
        return None, exc.to_dict()


def _ladder_rung(
    setup: ConstructionSetup, ground_states: Sequence[GroundState], s_final: float
) -> LadderRun:
    config = setup.config
    trajectory, failure = _backward_run(setup, config, ground_states, s_final)
    if trajectory is None:
        return LadderRun(s_final, np.array([]), {}, {}, failed=True, failure=failure, flags=["blow_up"])

    errors = _sobolev_series(trajectory, config, ground_states, setup.s_max)
    if config.K == 1:
        floor = {s: values.copy() for s, values in errors.items()}
    else:
        floor = {s: np.zeros_like(values) for s, values in errors.items()}
        for k in range(config.K):
            single = config.single(k)
            single_gs = [ground_states[k]]
            single_run, single_failure = _backward_run(setup, single, single_gs, s_final)
            if single_run is None:
                return LadderRun(
                    s_final, np.array([]), {}, {}, failed=True, failure=single_failure, flags=["blow_up"]
                )
            for s, values in _sobolev_series(single_run, single, single_gs, setup.s_max).items():
                floor[s] = floor[s] + values

    run = LadderRun(
        s_final=s_final,
        times=trajectory.times,
        errors=errors,
        floor=floor,
        trajectory=trajectory,
        flags=list(trajectory.flags),
    )
    logger.info("Ladder rung finished", s_final=s_final, snapshots=run.times.size, flags=run.flags)
    return run


def _fit_mask(run: LadderRun, setup: ConstructionSetup, window: Tuple[float, float], s: int) -> np.ndarray:
    times = run.times
    cut = run.s_final - FINAL_TRANSIENT_FRACTION * (run.s_final - setup.t1)
    floor_factor = settings.fit_floor_factor
    config = setup.config
    separation_floor = SEPARATION_FACTOR / math.sqrt(min(sol.omega for sol in config.solitons))
    separated = np.array([min_separation(config, t) >= separation_floor for t in times])
    return (
        (times >= window[0] - 1e-12)
        & (times <= window[1] + 1e-12)
        & (times < cut)
        & separated
        & (run.errors[s] > 0)
        & (run.errors[s] > floor_factor * run.floor[s])
    )


def fit_decay_rate(times: np.ndarray, values: np.ndarray, mask: np.ndarray) -> float:
    """rho in values ~ C exp(-rho t) by least squares on ln(values); NaN without enough points."""
    if np.count_nonzero(mask) < settings.fit_min_points:
        return math.nan
    slope, _ = np.polyfit(times[mask], np.log(values[mask]), 1)
    return float(-slope)


def rate_spread(rates: Sequence[float]) -> float:
    """(max - min) / mean of the finite rates."""
    finite = np.asarray([r for r in rates if math.isfinite(r)])
    if finite.size < 2 or np.mean(finite) == 0:
        return math.nan
    return float((finite.max() - finite.min()) / abs(finite.mean()))


def _check_construction(setup: ConstructionSetup) -> None:
    nl = setup.config.nonlinearity
    if nl.criticality is Criticality.SUPERCRITICAL:
        raise PreconditionError(
            "Backward construction from R(S_n) needs a stable or critical nonlinearity",
            {"p": nl.p, "dim": nl.dim},
        )
    ladder = setup.ladder
    if len(ladder) < 3:
        raise PlanError("The ladder needs at least three final times", {"ladder": list(ladder)})
    if any(b <= a for a, b in zip(ladder[:-1], ladder[1:])):
        raise PlanError("The ladder must be strictly increasing", {"ladder": list(ladder)})
    if not ladder[0] > setup.t1:
        raise PlanError("T1 must lie below every final time", {"t1": setup.t1, "ladder": list(ladder)})


def run_construction(setup: ConstructionSetup) -> ConstructionReport:
    _check_construction(setup)
    ground_states = setup.config.ground_states()
    logger.info(
        "Construction started",
        ladder=list(setup.ladder),
        t1=setup.t1,
        s_max=setup.s_max,
        dt=setup.dt,
        threads=setup.threads,
    )
    with ThreadPoolExecutor(max_workers=max(1, setup.threads)) as pool:
        runs = list(pool.map(lambda s: _ladder_rung(setup, ground_states, s), setup.ladder))
    runs.sort(key=lambda run: run.s_final)

    window = (setup.t1, setup.t1 + settings.fit_fraction * (setup.ladder[0] - setup.t1))
    flags: List[str] = []
    for run in runs:
        if run.failed:
            continue
        for s in range(setup.s_max + 1):
            mask = _fit_mask(run, setup, window, s)
            run.rates[s] = fit_decay_rate(run.times, run.errors[s], mask)
            if s == 1:
                run.fit_points = int(np.count_nonzero(mask))
        if not math.isfinite(run.rates.get(1, math.nan)):
            run.flags.append("unreliable_fit")
            logger.warning("Too few points above the integrator floor", s_final=run.s_final)
    if any(run.failed for run in runs):
        flags.append("partial")

    completed = [run for run in runs if not run.failed]
    gaps: Dict[int, List[float]] = {s: [] for s in range(setup.s_max + 1)}
    for previous, current in zip(completed[:-1], completed[1:]):
        difference = current.at_t1 - previous.at_t1
        for s in gaps:
            gaps[s].append(sobolev_norm(difference, s))
    if len(gaps[1]) >= 2 and any(b >= a for a, b in zip(gaps[1][:-1], gaps[1][1:])):
        flags.append("cauchy_not_decreasing")
        logger.warning("Cauchy gaps do not decrease along the ladder", gaps=gaps[1])

    theta_fit = math.nan
    schedule: List[ThetaScheduleRow] = []
    if completed:
        rho_1 = completed[-1].rates.get(1, math.nan)
        if math.isfinite(rho_1) and rho_1 > 0:
            theta_fit = 0.5 * rho_1
            schedule = predict_theta_schedule(theta_fit, setup.grid.dim, setup.s_max)

    report = ConstructionReport(
        ladder=setup.ladder,
        t1=setup.t1,
        s_max=setup.s_max,
        runs=runs,
        fit_window=window,
        theta_fit=theta_fit,
        schedule=schedule,
        cauchy_gaps=gaps,
        rate_spread=rate_spread([run.rates.get(1, math.nan) for run in completed]),
        flags=flags,
    )
    logger.info(
        "Construction finished",
        rates=report.rates(1),
        theta_fit=theta_fit,
        cauchy_gaps=gaps[1],
        rate_spread=report.rate_spread,
        flags=flags,
    )
    return report


# Uniqueness


@dataclass
class UniquenessReport:
    times: np.ndarray
    z_h1: np.ndarray
    ztilde_h1: np.ndarray
    coefficients: np.ndarray
    h: np.ndarray
    h_tilde: np.ndarray
    main: np.ndarray
    projections: np.ndarray
    z_max: float
    cauchy_reference: float
    decay_exponent: float
    derivative_constant: float
    projection_constant: float
    projection_gamma: float
    main_constant: float
    coercivity: float
    flags: List[str] = field(default_factory=list)

    def columns(self) -> List[str]:
        K = self.projections.shape[1]
        return (
            ["t", "z_H1", "ztilde_H1", "H", "H_tilde", "main"]
            + [f"proj_{k}" for k in range(K)]
            + [f"x_{i}" for i in range(self.coefficients.shape[1])]
        )

    def rows(self) -> np.ndarray:
        return np.column_stack(
            [self.times, self.z_h1, self.ztilde_h1, self.h, self.h_tilde, self.main, self.projections, self.coefficients]
        )

    def summary(self) -> Dict[str, float]:
        return {
            "z_max": self.z_max,
            "cauchy_reference": self.cauchy_reference,
            "decay_exponent": self.decay_exponent,
            "derivative_constant": self.derivative_constant,
            "projection_constant": self.projection_constant,
            "projection_gamma": self.projection_gamma,
            "main_constant": self.main_constant,
            "coercivity": self.coercivity,
        }


def fit_ratio_bound(numerator: np.ndarray, denominator: np.ndarray) -> float:
    """Smallest C with numerator <= C denominator at every sample."""
    numerator = np.abs(np.asarray(numerator, dtype=float))
    denominator = np.asarray(denominator, dtype=float)
    mask = denominator > 0
    if not np.any(mask):
        return 0.0
    return float(np.max(numerator[mask] / denominator[mask]))


def fit_two_term_bound(
    times: np.ndarray,
    lhs: np.ndarray,
    z_norm: np.ndarray,
    gammas: np.ndarray = DECAY_GAMMAS,
    growth: float = DECAY_GROWTH,
) -> Tuple[float, float]:
    """(C, gamma) with lhs <= C (exp(-gamma t) z + z^2).

    gamma is the largest grid value whose constant stays within `growth` times the gamma = 0 constant.
    """
    times = np.asarray(times, dtype=float)
    z_norm = np.asarray(z_norm, dtype=float)
    constants = [
        fit_ratio_bound(lhs, np.exp(-gamma * times) * z_norm + z_norm**2) for gamma in gammas
    ]
    baseline = constants[0]
    best = 0
    for index, constant in enumerate(constants):
        if constant <= growth * baseline:
            best = index
    return constants[best], float(gammas[best])


def coercivity_constant(
    h: np.ndarray, n: np.ndarray, p: np.ndarray, weight: float = COERCIVITY_PROJECTION_WEIGHT
) -> float:
    """Largest c with H >= c N - weight P at every sample.

    N = |z~|^2_{H^1} and P = sum_k (Re int z~ conj R_k)^2. A negative value means H fails to
    control N even after the projections are paid for.
    """
    h, n, p = (np.asarray(a, dtype=float) for a in (h, n, p))
    mask = n > 0
    if not np.any(mask):
        return math.nan
    h, n, p = h[mask], n[mask], p[mask]
    return float(np.min((h + weight * p) / n))


def _snapshot_index(trajectory: Trajectory) -> Dict[float, Field]:
    return {round(snapshot.time, TIME_DIGITS): snapshot for snapshot in trajectory.snapshots}


def _describe_config(config: MultiSolitonConfig) -> Dict[str, object]:
    return {
        "solitons": [params.model_dump() for params in config.solitons],
        "nonlinearity": config.nonlinearity.describe(),
    }


def run_uniqueness(
    setup_a: ConstructionSetup,
    setup_b: ConstructionSetup,
    report_a: Optional[ConstructionReport] = None,
    report_b: Optional[ConstructionReport] = None,
    window: Optional[Tuple[float, float]] = None,
) -> UniquenessReport:
    """Compare two independent constructions through z = u - phi on a common window.

    Both setups must describe the same solitons and nonlinearity on the same grid. The default
    window is [T1, T1 + 2/3 (S_1 - T1)], with S_1 the smallest final time of either ladder.
    """
    if setup_a.config != setup_b.config:
        raise PreconditionError(
            "Uniqueness runs must construct the same multi-soliton",
            {"a": _describe_config(setup_a.config), "b": _describe_config(setup_b.config)},
        )
    if setup_a.grid != setup_b.grid:
        raise GridMismatchError(
            "Uniqueness runs must share the grid",
            {"a": [setup_a.grid.n_points, setup_a.grid.half_length], "b": [setup_b.grid.n_points, setup_b.grid.half_length]},
        )
    report_a = report_a or run_construction(setup_a)
    report_b = report_b or run_construction(setup_b)
    reference = report_a.designated.trajectory
    candidate = report_b.designated.trajectory

    config = setup_a.config
    ground_states = config.ground_states()
    critical = setup_a.uses_scaling_direction
    cf = CutoffFamily.from_config(config, setup_a.a0)
    t1 = max(setup_a.t1, setup_b.t1)
    s_first = min(setup_a.ladder[0], setup_b.ladder[0])
    window = window or (t1, t1 + UNIQUENESS_WINDOW_FRACTION * (s_first - t1))

    index_a = _snapshot_index(reference)
    index_b = _snapshot_index(candidate)
    common = sorted(t for t in index_a.keys() & index_b.keys() if window[0] - 1e-9 <= t <= window[1] + 1e-9)
    if len(common) < 3:
        raise PreconditionError(
            "Fewer than three common snapshot times in the window",
            {"window": list(window), "common": len(common)},
        )

    records: Dict[str, List] = {key: [] for key in ("z", "zt", "h", "ht", "main", "proj", "x", "states")}
    for t in common:
        phi = index_a[t]
        u = index_b[t]
        z = u - phi
        system = assemble_modulation_matrix(config, ground_states, z.grid, phi.time, critical)
        state = solve_modulation(z, config, ground_states, phi.time, critical, system=system)
        ztilde = ztilde_from_state(z, state, system)
        records["z"].append(sobolev_norm(z, 1))
        records["zt"].append(sobolev_norm(ztilde, 1))
        records["h"].append(eval_weinstein_H(ztilde, config, ground_states, cf, phi.time).value)
        records["ht"].append(
            eval_weinstein_Htilde(ztilde, phi, config.nonlinearity, config, cf, phi.time).value
        )
        records["main"].append(eval_main_term(ztilde, cf, config, phi.time).value)
        records["proj"].append(
            [
                inner_product_real(ztilde, evaluate_soliton(params, gs, z.grid, phi.time))
                for params, gs in zip(config.solitons, ground_states)
            ]
        )
        records["x"].append(state.vector())
        records["states"].append(state)

    times = np.asarray(common)
    z_h1 = np.asarray(records["z"])
    ztilde_h1 = np.asarray(records["zt"])
    h = np.asarray(records["h"])
    projections = np.asarray(records["proj"])
    main = np.asarray(records["main"])
    flags: List[str] = []

    _, derivatives = coefficient_derivatives(records["states"])
    derivative_constant = fit_ratio_bound(np.max(np.abs(derivatives), axis=1), z_h1)
    projection_rates = np.abs(np.gradient(projections, times, axis=0)).max(axis=1)
    projection_constant, projection_gamma = fit_two_term_bound(times, projection_rates, z_h1)
    main_constant = fit_ratio_bound(main * times, ztilde_h1**2)
    coercivity = coercivity_constant(h, ztilde_h1**2, np.sum(projections**2, axis=1))

    positive = z_h1 > 0
    if np.count_nonzero(positive) >= 2:
        slope, _ = np.polyfit(np.log(times[positive]), np.log(z_h1[positive]), 1)
        decay_exponent = float(-slope)
    else:
        decay_exponent = math.nan
        flags.append("zero_difference")

    cauchy = [gap for report in (report_a, report_b) for gap in report.cauchy_gaps.get(1, [])]
    report = UniquenessReport(
        times=times,
        z_h1=z_h1,
        ztilde_h1=ztilde_h1,
        coefficients=np.asarray(records["x"]),
        h=h,
        h_tilde=np.asarray(records["ht"]),
        main=main,
        projections=projections,
        z_max=float(np.max(z_h1)),
        cauchy_reference=float(max(cauchy)) if cauchy else math.nan,
        decay_exponent=decay_exponent,
        derivative_constant=derivative_constant,
        projection_constant=projection_constant,
        projection_gamma=projection_gamma,
        main_constant=main_constant,
        coercivity=coercivity,
        flags=flags,
    )
    if math.isfinite(report.cauchy_reference) and report.z_max >= report.cauchy_reference:
        report.flags.append("difference_above_cauchy_gap")
        logger.warning("Constructions disagree beyond their Cauchy gaps", z_max=report.z_max, cauchy=report.cauchy_reference)
    if not report.coercivity > 0:
        report.flags.append("coercivity_not_observed")
        logger.warning("Localized energy does not control the difference", coercivity=report.coercivity)
    logger.info("Uniqueness diagnostic finished", **report.summary())
    return report
