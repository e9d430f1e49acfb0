"""Command-line entry point: ``python -m nlslab <subcommand> --config run.cfg``.

Exit codes: 0 success, 1 configuration, 2 numerical failure, 3 I/O.
"""

import argparse
import json
import logging
import sys
from pathlib import Path
from typing import Any, Callable, Dict, List, Optional, Sequence

import numpy as np
import structlog
from pydantic import ValidationError

from nlslab.config import settings
from nlslab.errors import ConfigError, NlsLabError
from nlslab.experiments import (
    ConstructionSetup,
    backward_trajectory,
    run_construction,
    run_uniqueness,
)
from nlslab.functionals import CutoffFamily, cutoff_localization_check, eval_G_drift
from nlslab.grid import sobolev_norm
from nlslab.groundstate import MassSlope, mass_derivative_sign, solve_ground_state
from nlslab.linops import (
    OperatorKind,
    assemble,
    constrained_min_eig,
    instability_eigenpair,
    sector_coercivity,
    standard_constraints,
    verify_critical_identities,
)
from nlslab.modulation import assemble_modulation_matrix, solve_modulation, verify_det_limit, ztilde_from_state
from nlslab.models import ExperimentConfig
from nlslab.nonlinearity import Criticality
from nlslab.propagator import PropagationPlan, propagate
from nlslab.soliton import MultiSolitonConfig, evaluate_multisoliton
from nlslab.storage import RunStorage
from nlslab.validation import parse_config

logger = structlog.get_logger(__name__)

RAYLEIGH_SAMPLES = 100
DET_SAMPLES = 5


def configure_logging() -> None:
    """structlog over stdlib logging on stderr; JSON or console lines per settings.log_format."""
    logging.basicConfig(format="%(message)s", stream=sys.stderr, level=settings.log_level.upper())
    renderer = (
        structlog.processors.JSONRenderer()
        if settings.log_format == "json"
        else structlog.dev.ConsoleRenderer(colors=False)
    )
    structlog.configure(
        processors=[
            structlog.stdlib.filter_by_level,
            structlog.stdlib.add_logger_name,
            structlog.stdlib.add_log_level,
            structlog.stdlib.PositionalArgumentsFormatter(),
            structlog.processors.TimeStamper(fmt="iso"),
            structlog.processors.StackInfoRenderer(),
            structlog.processors.format_exc_info,
            structlog.processors.UnicodeDecoder(),
            renderer,
        ],
        context_class=dict,
        logger_factory=structlog.stdlib.LoggerFactory(),
        wrapper_class=structlog.stdlib.BoundLogger,
        cache_logger_on_first_use=True,
    )


def _float_list(text: str) -> List[float]:
    try:
        return [float(part) for part in text.split(",") if part.strip()]
    except ValueError as exc:
        raise argparse.ArgumentTypeError(f"expected comma-separated numbers, got '{text}'") from exc


def _name_list(text: str) -> List[str]:
    return [part.strip() for part in text.split(",") if part.strip()]


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="nlslab", description="NLS multi-soliton numerical lab")
    subparsers = parser.add_subparsers(dest="command", required=True)

    def common(name: str, help_text: str, needs_config: bool = True) -> argparse.ArgumentParser:
        sub = subparsers.add_parser(name, help=help_text)
        if needs_config:
            sub.add_argument("--config", required=True, type=Path, help="Experiment config (JSON)")
        sub.add_argument("--out", type=Path, default=None, help="Run directory; defaults to output.directory")
        sub.add_argument("--threads", type=int, default=None, help="Worker threads (fallback NLSLAB_THREADS)")
        sub.add_argument("--seed", type=int, default=None, help="Seed for randomized checks")
        return sub

    common("groundstate", "Solve and export the ground states of a config")

    propagate_parser = common("propagate", "Propagate the multi-soliton sum forward")
    propagate_parser.add_argument("--t-end", type=float, default=None, dest="t_end")

    construct_parser = common("construct", "Backward construction ladder with rate fits")
    construct_parser.add_argument("--ladder", type=_float_list, default=None)
    construct_parser.add_argument("--t1", type=float, default=None)
    construct_parser.add_argument("--smax", type=int, default=None)

    common("diagnose", "G drift, cutoff localization and modulation determinant along a backward run")
    common("modulate", "Modulation coefficients of u - R along a backward run")

    coerce_parser = common("coerce", "Constrained coercivity of the linearized operators")
    coerce_parser.add_argument("--constraints", type=_name_list, default=None)

    uniq_parser = common("uniq", "Compare two independent constructions", needs_config=False)
    uniq_parser.add_argument("--a", required=True, type=Path, dest="config_a")
    uniq_parser.add_argument("--b", required=True, type=Path, dest="config_b")
    uniq_parser.add_argument("--window", type=_float_list, default=None)
    return parser


def _overrides(args: argparse.Namespace) -> Dict[str, Any]:
    overrides: Dict[str, Any] = {}
    for attribute, path in (
        ("ladder", "plan.ladder"),
        ("t1", "analysis.t1"),
        ("smax", "analysis.s_max"),
        ("t_end", "plan.t_end"),
        ("constraints", "analysis.constraints"),
        ("seed", "seed"),
    ):
        value = getattr(args, attribute, None)
        if value is not None:
            overrides[path] = value
    return overrides


def resolve_threads(args: argparse.Namespace, config: ExperimentConfig) -> int:
    """--threads, then NLSLAB_THREADS, then the config, then 1."""
    if args.threads is not None:
        return max(1, args.threads)
    if "threads" in settings.model_fields_set:
        return max(1, settings.threads)
    return config.threads or 1


def _storage(args: argparse.Namespace, config: ExperimentConfig) -> RunStorage:
    return RunStorage(args.out or Path(config.output.directory), config.config_hash())


def cmd_groundstate(args: argparse.Namespace, config: ExperimentConfig) -> Dict[str, Any]:
    store = _storage(args, config)
    nl = config.build_nonlinearity()
    rows = []
    for omega in sorted({s.omega for s in config.solitons}):
        gs = solve_ground_state(nl, omega)
        store.write_profile(gs)
        slope = mass_derivative_sign(nl, omega)
        rows.append([omega, gs.amplitude, gs.mass, gs.residual, gs.decay_constant(), float(slope is MassSlope.POSITIVE)])
    store.write_csv(
        "groundstates",
        ["omega", "amplitude", "mass", "residual", "decay_constant", "mass_slope_positive"],
        np.asarray(rows),
    )
    return {"ground_states": len(rows)}


def cmd_propagate(args: argparse.Namespace, config: ExperimentConfig) -> Dict[str, Any]:
    store = _storage(args, config)
    msc = MultiSolitonConfig.from_experiment(config)
    ground_states = msc.ground_states()
    grid = config.grid.to_grid()
    dt = config.plan.dt or (settings.default_dt_1d if grid.dim == 1 else settings.default_dt_2d)
    direction = 1.0 if config.plan.t_end >= config.plan.t_start else -1.0
    plan = PropagationPlan(
        dt=direction * dt,
        t_start=config.plan.t_start,
        t_end=config.plan.t_end,
        snapshot_stride=config.plan.snapshot_stride,
        dealias=config.plan.dealias,
    )
    initial = evaluate_multisoliton(msc, ground_states, grid, plan.t_start)
    trajectory = propagate(initial, plan, msc.nonlinearity)

    store.write_csv("ledger", trajectory.ledger.columns(), trajectory.ledger.as_array())
    rows = []
    for snapshot in trajectory.snapshots:
        reference = evaluate_multisoliton(msc, ground_states, grid, snapshot.time)
        error = (snapshot - reference).l2_norm()
        rows.append([snapshot.time, error, error / reference.l2_norm(), sobolev_norm(snapshot - reference, 1)])
        if config.output.snapshots:
            store.write_snapshot(snapshot)
    store.write_csv("error_vs_R", ["t", "l2", "l2_relative", "h1"], np.asarray(rows))
    return {"snapshots": len(trajectory.snapshots), "flags": trajectory.flags}


def cmd_construct(args: argparse.Namespace, config: ExperimentConfig) -> Dict[str, Any]:
    store = _storage(args, config)
    setup = ConstructionSetup.from_experiment(config, threads=resolve_threads(args, config))
    report = run_construction(setup)
    store.write_csv("decay_series", report.series_columns(), report.series_rows())
    store.write_csv("rates", report.rate_columns(), report.rate_rows())
    store.write_csv("cauchy_gaps", report.gap_columns(), report.gap_rows())
    store.write_csv(
        "theta_schedule",
        ["s", "theta_s", "interpolated"],
        np.asarray([[row.s, row.theta_s, row.interpolated] for row in report.schedule]).reshape(-1, 3),
    )
    if config.output.snapshots:
        for run in report.runs:
            if not run.failed:
                store.write_snapshot(run.at_t1, f"u_S{run.s_final:g}_T1")
    summary = {
        "theta_fit": report.theta_fit,
        "rates": report.rates(1),
        "rate_spread": report.rate_spread,
        "cauchy_gaps_H1": report.cauchy_gaps[1],
        "flags": report.flags,
    }
    store.write_json("construction", summary)
    return summary


def _designated_trajectory(args: argparse.Namespace, config: ExperimentConfig):
    setup = ConstructionSetup.from_experiment(config, threads=resolve_threads(args, config))
    s_final = max(config.plan.ladder) if config.plan.ladder else config.plan.t_end
    ground_states = setup.config.ground_states()
    return setup, ground_states, backward_trajectory(setup, s_final, ground_states=ground_states)


def cmd_diagnose(args: argparse.Namespace, config: ExperimentConfig) -> Dict[str, Any]:
    store = _storage(args, config)
    setup, ground_states, trajectory = _designated_trajectory(args, config)
    msc = setup.config
    drift = eval_G_drift(trajectory, msc.nonlinearity, config.analysis.g_order, config=msc)
    store.write_csv(
        "g_drift",
        ["t", "G", "drift", "envelope"],
        np.column_stack([drift.times, drift.values, drift.drift, drift.envelope]),
    )
    summary: Dict[str, Any] = {
        "g_order": config.analysis.g_order,
        "g_log_slope": drift.slope,
        "g_max_drift": drift.max_drift,
        "g_reliable": drift.reliable,
    }
    if msc.K > 1:
        cf = CutoffFamily.from_config(msc, config.analysis.a0)
        times = np.linspace(setup.t1, trajectory.times.max(), DET_SAMPLES)
        localization = cutoff_localization_check(msc, ground_states, cf, setup.grid, times)
        store.write_csv("localization", ["t", "value"], np.column_stack([localization.times, localization.values]))
        det = verify_det_limit(msc, ground_states, setup.grid, times, setup.uses_scaling_direction)
        store.write_csv("det_limit", ["t", "det", "gap"], np.column_stack([det.times, det.dets, det.gaps]))
        summary.update(
            localization_constant=localization.constant,
            localization_gamma=localization.gamma,
            det_limit=det.limit,
            det_gap_shrinking=det.shrinking,
        )
    store.write_json("diagnose", summary)
    return summary


def cmd_modulate(args: argparse.Namespace, config: ExperimentConfig) -> Dict[str, Any]:
    store = _storage(args, config)
    setup, ground_states, trajectory = _designated_trajectory(args, config)
    msc = setup.config
    critical = setup.uses_scaling_direction
    rows = []
    columns: List[str] = []
    for snapshot in sorted(trajectory.snapshots, key=lambda s: s.time):
        z = snapshot - evaluate_multisoliton(msc, ground_states, setup.grid, snapshot.time)
        system = assemble_modulation_matrix(msc, ground_states, setup.grid, snapshot.time, critical)
        state = solve_modulation(z, msc, ground_states, snapshot.time, critical, system=system)
        ztilde = ztilde_from_state(z, state, system)
        columns = state.columns() + ["z_H1", "ztilde_H1"]
        rows.append(state.as_row() + [sobolev_norm(z, 1), sobolev_norm(ztilde, 1)])
    store.write_csv("modulation", columns, np.asarray(rows))
    return {"states": len(rows), "critical": critical}


def _rayleigh_check(op, report, seed: int) -> float:
    """Smallest Rayleigh quotient over random vectors in the constrained subspace."""
    rng = np.random.default_rng(seed)
    coefficients = rng.standard_normal((report.basis.shape[1], RAYLEIGH_SAMPLES))
    samples = report.basis @ coefficients
    return float(min(op.rayleigh_quotient(samples[:, j]) for j in range(RAYLEIGH_SAMPLES)))


def cmd_coerce(args: argparse.Namespace, config: ExperimentConfig) -> Dict[str, Any]:
    store = _storage(args, config)
    nl = config.build_nonlinearity()
    gs = solve_ground_state(nl, config.solitons[0].omega)
    names = list(config.analysis.constraints)
    summary: Dict[str, Any] = {"criticality": nl.criticality.value, "constraints": names, "nonlinearity": nl.describe()}

    if gs.dim == 1:
        plus = assemble(OperatorKind.L_PLUS, gs)
        report = constrained_min_eig(plus, standard_constraints(gs, names, plus.disc), names)
        minus = assemble(OperatorKind.L_MINUS, gs)
        minus_report = constrained_min_eig(minus, standard_constraints(gs, ["Q"], minus.disc), ["Q"])
        summary.update(
            plus=report.as_dict(),
            minus=minus_report.as_dict(),
            rayleigh_sample_min=_rayleigh_check(plus, report, config.seed),
        )
        store.write_csv(
            "spectrum",
            ["index", "L_plus", "L_minus"],
            np.column_stack([np.arange(report.spectrum_head.size), report.spectrum_head, minus_report.spectrum_head]),
        )
    else:
        sectors = sector_coercivity(gs, names)
        summary["sectors"] = {str(m): r.as_dict() for m, r in sectors.items()}
        summary["mu_plus"] = min(r.mu_plus for r in sectors.values())

    if nl.criticality is Criticality.CRITICAL:
        identities = verify_critical_identities(gs)
        summary["critical_identities"] = {
            "identity_residual": identities.identity_residual,
            "nonzero_value": identities.nonzero_value,
            "relative_gap": identities.relative_gap,
        }
    elif nl.criticality is Criticality.SUPERCRITICAL:
        eigenpair = instability_eigenpair(gs)
        summary["instability"] = {"e0": eigenpair.e0, "residual": eigenpair.residual}
        store.write_csv(
            "instability_Y", ["x", "w1", "w2"], np.column_stack([eigenpair.nodes, eigenpair.w1, eigenpair.w2])
        )
    store.write_json("coercivity", summary)
    return summary


def cmd_uniq(args: argparse.Namespace) -> Dict[str, Any]:
    config_a = parse_config(args.config_a, "uniq", _overrides(args))
    config_b = parse_config(args.config_b, "uniq", _overrides(args))
    threads = resolve_threads(args, config_a)
    setup_a = ConstructionSetup.from_experiment(config_a, threads=threads)
    setup_b = ConstructionSetup.from_experiment(config_b, threads=threads)
    window = tuple(args.window) if args.window else None
    if window is not None and len(window) != 2:
        raise ConfigError("--window takes two times", {"window": list(window)})
    report = run_uniqueness(setup_a, setup_b, window=window)

    store = RunStorage(args.out or Path(config_a.output.directory), config_a.config_hash())
    store.write_csv("uniqueness", report.columns(), report.rows())
    summary = dict(report.summary(), flags=report.flags, config_b_sha256=config_b.config_hash())
    store.write_json("uniqueness", summary)
    return summary


COMMANDS: Dict[str, Callable[[argparse.Namespace, ExperimentConfig], Dict[str, Any]]] = {
    "groundstate": cmd_groundstate,
    "propagate": cmd_propagate,
    "construct": cmd_construct,
    "diagnose": cmd_diagnose,
    "modulate": cmd_modulate,
    "coerce": cmd_coerce,
}


def run(command: str, args: argparse.Namespace) -> Dict[str, Any]:
    if command == "uniq":
        return cmd_uniq(args)
    config = parse_config(args.config, command, _overrides(args))
    return COMMANDS[command](args, config)


def main(argv: Optional[Sequence[str]] = None) -> int:
    configure_logging()
    args = build_parser().parse_args(argv)
    try:
        summary = run(args.command, args)
    except NlsLabError as e:
        logger.error("Command failed", command=args.command, error=type(e).__name__, message=e.message)
        print(json.dumps(e.to_dict(), default=str), file=sys.stderr)
        return e.exit_code
    except ValidationError as e:
        print(json.dumps({"error": "ValidationError", "message": str(e), "details": {}}), file=sys.stderr)
        return ConfigError.exit_code
    logger.info("Command finished", command=args.command, **{k: v for k, v in summary.items() if not isinstance(v, dict)})
    return 0


if __name__ == "__main__":
    sys.exit(main())
