"""Nonlinearity f, its derivatives and primitive, and g(z) = z f(|z|^2)."""

import math
from dataclasses import dataclass
from enum import Enum
from typing import Dict, Tuple, Union

import numpy as np
from structlog import get_logger

from nlslab.errors import ConfigError, ExistenceWindowError, PreconditionError

logger = get_logger(__name__)

ArrayLike = Union[float, complex, np.ndarray]

CUBIC_QUINTIC_OMEGA_MAX = 3.0 / 16.0


class NonlinearityKind(str, Enum):
    PURE_POWER = "pure_power"
    CUBIC_QUINTIC = "cubic_quintic"
    FREE = "free"


class Criticality(str, Enum):
    SUBCRITICAL = "subcritical"
    CRITICAL = "critical"
    SUPERCRITICAL = "supercritical"


def _as_radius(r: ArrayLike) -> Tuple[np.ndarray, bool]:
    scalar = np.isscalar(r)
    values = np.asarray(r, dtype=float)
    if np.any(values < 0):
        raise PreconditionError("f is only defined on r >= 0", {"min_r": float(values.min())})
    return values, scalar


def _out(values: np.ndarray, scalar: bool) -> ArrayLike:
    return float(values) if scalar else values


@dataclass(frozen=True)
class Nonlinearity:
    """f for pure powers f(r) = r^((p-1)/2), the cubic-quintic f(r) = r - r^2, or f = 0."""

    kind: NonlinearityKind = NonlinearityKind.PURE_POWER
    p: float = 3.0
    dim: int = 1

    def __post_init__(self):
        object.__setattr__(self, "kind", NonlinearityKind(self.kind))
        object.__setattr__(self, "p", float(self.p))
        if self.dim not in (1, 2):
            raise ConfigError("Nonlinearity dimension must be 1 or 2", {"dim": self.dim})
        if self.kind is NonlinearityKind.PURE_POWER:
            if not self.p > 1 or not math.isfinite(self.p):
                raise ConfigError(
                    "Pure power exponent must satisfy 1 < p < 1+4/(d-2)_+",
                    {"p": self.p, "dim": self.dim},
                )
        elif self.kind is NonlinearityKind.CUBIC_QUINTIC:
            object.__setattr__(self, "p", 3.0)

    @classmethod
    def pure_power(cls, p: float, dim: int = 1) -> "Nonlinearity":
        return cls(NonlinearityKind.PURE_POWER, p, dim)

    @classmethod
    def cubic_quintic(cls, dim: int = 1) -> "Nonlinearity":
        return cls(NonlinearityKind.CUBIC_QUINTIC, 3.0, dim)

    @classmethod
    def free(cls, dim: int = 1) -> "Nonlinearity":
        return cls(NonlinearityKind.FREE, 3.0, dim)

    @property
    def is_pure_power(self) -> bool:
        return self.kind is NonlinearityKind.PURE_POWER

    @property
    def critical_exponent(self) -> float:
        return 1.0 + 4.0 / self.dim

    @property
    def criticality(self) -> Criticality:
        # cubic-quintic and the free hook have no L2 scaling law; treated as stable
        if not self.is_pure_power:
            return Criticality.SUBCRITICAL
        if math.isclose(self.p, self.critical_exponent, rel_tol=0.0, abs_tol=1e-12):
            return Criticality.CRITICAL
        if self.p < self.critical_exponent:
            return Criticality.SUBCRITICAL
        return Criticality.SUPERCRITICAL

    @property
    def is_critical(self) -> bool:
        return self.criticality is Criticality.CRITICAL

    @property
    def nonsmooth_origin(self) -> bool:
        """True when f'(0) diverges and the f'(0) = 0 convention is in force."""
        return self.is_pure_power and self.p < 3.0

    @property
    def flags(self) -> Tuple[str, ...]:
        return ("nonsmooth_origin",) if self.nonsmooth_origin else ()

    def existence_window(self) -> Tuple[float, float]:
        if self.kind is NonlinearityKind.CUBIC_QUINTIC:
            return 0.0, CUBIC_QUINTIC_OMEGA_MAX
        return 0.0, math.inf

    def check_omega(self, omega: float) -> None:
        low, high = self.existence_window()
        if not (low < omega < high):
            raise ExistenceWindowError(
                f"omega={omega} is outside the existence window ({low}, {high})",
                {"omega": omega, "window": [low, high], "kind": self.kind.value},
            )

    def describe(self) -> Dict[str, object]:
        return {
            "kind": self.kind.value,
            "p": self.p,
            "dim": self.dim,
            "criticality": self.criticality.value,
        }

    # f and friends, vectorized over r >= 0

    def f(self, r: ArrayLike) -> ArrayLike:
        r, scalar = _as_radius(r)
        if self.kind is NonlinearityKind.FREE:
            values = np.zeros_like(r)
        elif self.kind is NonlinearityKind.CUBIC_QUINTIC:
            values = r - r**2
        else:
            values = r ** ((self.p - 1.0) / 2.0)
        return _out(values, scalar)

    def f_prime(self, r: ArrayLike) -> ArrayLike:
        r, scalar = _as_radius(r)
        if self.kind is NonlinearityKind.FREE:
            values = np.zeros_like(r)
        elif self.kind is NonlinearityKind.CUBIC_QUINTIC:
            values = 1.0 - 2.0 * r
        else:
            values = self._power_derivative(r, (self.p - 1.0) / 2.0, 1)
        return _out(values, scalar)

    def f_second(self, r: ArrayLike) -> ArrayLike:
        r, scalar = _as_radius(r)
        if self.kind is NonlinearityKind.FREE:
            values = np.zeros_like(r)
        elif self.kind is NonlinearityKind.CUBIC_QUINTIC:
            values = np.full_like(r, -2.0)
        else:
            values = self._power_derivative(r, (self.p - 1.0) / 2.0, 2)
        return _out(values, scalar)

    def F(self, r: ArrayLike) -> ArrayLike:
        r, scalar = _as_radius(r)
        if self.kind is NonlinearityKind.FREE:
            values = np.zeros_like(r)
        elif self.kind is NonlinearityKind.CUBIC_QUINTIC:
            values = r**2 / 2.0 - r**3 / 3.0
        else:
            values = 2.0 * r ** ((self.p + 1.0) / 2.0) / (self.p + 1.0)
        return _out(values, scalar)

    @staticmethod
    def _power_derivative(r: np.ndarray, exponent: float, order: int) -> np.ndarray:
        coefficient = 1.0
        for j in range(order):
            coefficient *= exponent - j
        reduced = exponent - order
        if coefficient == 0.0:
            return np.zeros_like(r)
        if reduced == 0.0:
            return np.full_like(r, coefficient)
        values = np.zeros_like(r)
        positive = r > 0
        values[positive] = coefficient * r[positive] ** reduced
        # r = 0 with a negative reduced exponent: convention value 0
        return values

    def g(self, z: ArrayLike) -> ArrayLike:
        z = np.asarray(z, dtype=np.complex128)
        values = z * self.f(np.abs(z) ** 2)
        return complex(values) if values.ndim == 0 else values

    def g_partials(self, z: ArrayLike, order: int = 1) -> Dict[str, np.ndarray]:
        """Cartesian partials of g in z = x + iy up to the given order.

        Keys: g, gx, gy and, for order 2, gxx, gxy, gyy.
        """
        if order not in (1, 2):
            raise PreconditionError("g_partials supports order 1 or 2", {"order": order})
        z = np.asarray(z, dtype=np.complex128)
        x, y = z.real, z.imag
        r = x**2 + y**2
        f = np.asarray(self.f(r))
        fp = np.asarray(self.f_prime(r))
        jet = {
            "g": z * f,
            "gx": f + 2.0 * x * z * fp,
            "gy": 1j * f + 2.0 * y * z * fp,
        }
        if order == 2:
            fpp = np.asarray(self.f_second(r))
            jet["gxx"] = 4.0 * x * fp + z * (2.0 * fp + 4.0 * x**2 * fpp)
            jet["gxy"] = 2.0 * y * fp + 2j * x * fp + 4.0 * x * y * z * fpp
            jet["gyy"] = 4j * y * fp + z * (2.0 * fp + 4.0 * y**2 * fpp)
        return jet
