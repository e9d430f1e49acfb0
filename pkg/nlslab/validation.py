import json
from pathlib import Path
from typing import Any, Dict, List, Optional, Tuple, Union

from pydantic import ValidationError
from structlog import get_logger

from nlslab.errors import ConfigValidationError, OutputError
from nlslab.grid import minimum_half_length
from nlslab.models import ExperimentConfig
from nlslab.nonlinearity import Criticality

logger = get_logger(__name__)

LADDER_COMMANDS = {"construct", "uniq"}
MIN_LADDER = 3


class ConfigValidator:
    """Field-level and cross-field checks of experiment configs."""

    @staticmethod
    def validate_experiment(
        data: Dict[str, Any], command: Optional[str] = None
    ) -> Tuple[bool, Optional[str], Optional[List[str]]]:
        """Validate a config document, collecting every violation."""
        try:
            config = ExperimentConfig(**data)
        except ValidationError as e:
            errors = [
                f"{'.'.join(str(part) for part in error['loc'])}: {error['msg']}" for error in e.errors()
            ]
            return False, "Config validation error", errors
        except TypeError as e:
            return False, f"Config structure error: {str(e)}", [str(e)]

        errors = ConfigValidator.cross_field_errors(config, command)
        if errors:
            return False, "Cross-field validation failed", errors
        return True, None, None

    @staticmethod
    def cross_field_errors(config: ExperimentConfig, command: Optional[str] = None) -> List[str]:
        errors: List[str] = []
        d = config.grid.d
        solitons = config.solitons

        if len(config.grid.n) != d or len(config.grid.L) != d:
            errors.append(f"grid: n and L need {d} entries")
        for index, soliton in enumerate(solitons):
            if soliton.dim != d or len(soliton.x0) != d:
                errors.append(f"solitons.{index}: v and x0 need {d} components")
        shapes_ok = not errors

        for i in range(len(solitons)):
            for j in range(i + 1, len(solitons)):
                if tuple(solitons[i].v) == tuple(solitons[j].v):
                    errors.append(
                        f"solitons.{i} and solitons.{j}: velocities must be distinct (both {list(solitons[i].v)})"
                    )

        nl = config.build_nonlinearity()
        low, high = nl.existence_window()
        for index, soliton in enumerate(solitons):
            if not low < soliton.omega < high:
                errors.append(f"solitons.{index}.omega: {soliton.omega} outside the existence window ({low}, {high})")

        errors.extend(ConfigValidator._ladder_errors(config, command))
        errors.extend(ConfigValidator._cutoff_errors(config))

        if shapes_ok:
            errors.extend(ConfigValidator._box_errors(config))
        if command == "construct" and nl.criticality is Criticality.SUPERCRITICAL:
            errors.append(f"nonlinearity.p: construction needs p <= 1 + 4/d = {nl.critical_exponent}")
        return errors

    @staticmethod
    def _ladder_errors(config: ExperimentConfig, command: Optional[str]) -> List[str]:
        errors = []
        for name, ladder in (("plan.ladder", config.plan.ladder), ("analysis.ladder_b", config.analysis.ladder_b)):
            if any(b <= a for a, b in zip(ladder[:-1], ladder[1:])):
                errors.append(f"{name}: final times must be strictly increasing, got {ladder}")
            if ladder and ladder[0] <= config.analysis.t1:
                errors.append(f"{name}: every final time must exceed analysis.t1 = {config.analysis.t1}")
        if command in LADDER_COMMANDS and len(config.plan.ladder) < MIN_LADDER:
            errors.append(f"plan.ladder: '{command}' needs at least {MIN_LADDER} final times")
        return errors

    @staticmethod
    def _cutoff_errors(config: ExperimentConfig) -> List[str]:
        a0 = config.analysis.a0
        if a0 is None:
            return []
        if not a0 > 0:
            return [f"analysis.a0: must be positive, got {a0}"]
        first = sorted(s.v[0] for s in config.solitons)
        gaps = [b - a for a, b in zip(first[:-1], first[1:])]
        if gaps and a0 >= 0.5 * min(gaps):
            return [
                f"analysis.a0: cutoff window rule needs 0 < a0 < (1/2) min velocity gap = {0.5 * min(gaps)}, got {a0}"
            ]
        return []

    @staticmethod
    def _box_errors(config: ExperimentConfig) -> List[str]:
        times = [config.plan.t_start, config.plan.t_end, *config.plan.ladder, *config.analysis.ladder_b]
        t_max = max(abs(t) for t in times)
        required = minimum_half_length(
            [s.x0 for s in config.solitons],
            [s.v for s in config.solitons],
            [s.omega for s in config.solitons],
            t_max,
        )
        errors = []
        for axis, length in enumerate(config.grid.L):
            if length < required:
                errors.append(
                    f"grid.L.{axis}: half length {length} is below the box rule minimum {required:.4g} (t_max = {t_max})"
                )
        return errors


def load_document(path: Union[str, Path]) -> Dict[str, Any]:
    path = Path(path)
    try:
        text = path.read_text()
    except OSError as exc:
        raise OutputError(f"Cannot read config {path}", {"error": str(exc)}) from exc
    try:
        data = json.loads(text)
    except json.JSONDecodeError as exc:
        raise ConfigValidationError([f"{path.name}: invalid JSON ({exc.msg} at line {exc.lineno})"]) from exc
    if not isinstance(data, dict):
        raise ConfigValidationError([f"{path.name}: top level must be an object"])
    return data


def parse_config(
    path: Union[str, Path], command: Optional[str] = None, overrides: Optional[Dict[str, Any]] = None
) -> ExperimentConfig:
    """Load, override and validate a config; raise with every violation found."""
    data = load_document(path)
    for key, value in (overrides or {}).items():
        _set_path(data, key, value)
    is_valid, message, errors = ConfigValidator.validate_experiment(data, command)
    if not is_valid:
        logger.error("Invalid config", path=str(path), message=message, errors=errors)
        raise ConfigValidationError(errors or [message], message or "Configuration is invalid")
    config = ExperimentConfig(**data)
    logger.info("Config loaded", path=str(path), config_hash=config.config_hash(), **config.summary())
    return config


def _set_path(data: Dict[str, Any], dotted: str, value: Any) -> None:
    node = data
    parts = dotted.split(".")
    for part in parts[:-1]:
        node = node.setdefault(part, {})
    node[parts[-1]] = value
