"""Periodic box discretization of R^d (d = 1, 2) with spectral calculus.

Wavenumbers follow the FFT ordering of ``scipy.fft``; odd-order derivative
multipliers drop the Nyquist mode so that derivatives of real data stay real.
"""

import itertools
import math
from dataclasses import dataclass, replace
from functools import cached_property
from typing import Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import fft as spfft
from structlog import get_logger

from nlslab.errors import (
    DerivativeOrderError,
    GridError,
    GridMismatchError,
    NonFiniteFieldError,
)

logger = get_logger(__name__)

MAX_DERIVATIVE_ORDER = 6
MIN_POINTS_PER_AXIS = 16
SUPPORTED_DIMENSIONS = (1, 2)

MultiIndex = Tuple[int, ...]


@dataclass(frozen=True)
class Grid:
    """Box [-L, L)^d sampled with N points per axis."""

    n_points: Tuple[int, ...]
    half_length: Tuple[float, ...]

    def __post_init__(self):
        n_points = tuple(int(n) for n in self.n_points)
        half_length = tuple(float(length) for length in self.half_length)
        object.__setattr__(self, "n_points", n_points)
        object.__setattr__(self, "half_length", half_length)

        if len(n_points) not in SUPPORTED_DIMENSIONS:
            raise GridError(
                "Grid dimension must be 1 or 2", {"dim": len(n_points)}
            )
        if len(half_length) != len(n_points):
            raise GridError(
                "n_points and half_length must have one entry per axis",
                {"n_points": n_points, "half_length": half_length},
            )
        for axis, (n, length) in enumerate(zip(n_points, half_length)):
            if n % 2 or n < MIN_POINTS_PER_AXIS:
                raise GridError(
                    f"Axis {axis}: point count must be even and >= {MIN_POINTS_PER_AXIS}",
                    {"axis": axis, "n_points": n},
                )
            if not length > 0 or not math.isfinite(length):
                raise GridError(
                    f"Axis {axis}: half length must be positive",
                    {"axis": axis, "half_length": length},
                )

    @classmethod
    def uniform(cls, dim: int, n_points: int, half_length: float) -> "Grid":
        return cls((n_points,) * dim, (half_length,) * dim)

    @property
    def dim(self) -> int:
        return len(self.n_points)

    @property
    def shape(self) -> Tuple[int, ...]:
        return self.n_points

    @property
    def size(self) -> int:
        return int(np.prod(self.n_points))

    @property
    def spacing(self) -> Tuple[float, ...]:
        return tuple(2.0 * L / n for L, n in zip(self.half_length, self.n_points))

    @property
    def cell_volume(self) -> float:
        return float(np.prod(self.spacing))

    def axis(self, i: int) -> np.ndarray:
        return -self.half_length[i] + self.spacing[i] * np.arange(self.n_points[i])

    def wavenumbers(self, i: int) -> np.ndarray:
        """Integer multiples of pi/L in FFT order."""
        return 2.0 * np.pi * spfft.fftfreq(self.n_points[i], d=self.spacing[i])

    @cached_property
    def _mesh(self) -> Tuple[np.ndarray, ...]:
        return tuple(
            np.meshgrid(*[self.axis(i) for i in range(self.dim)], indexing="ij")
        )

    def coordinates(self) -> Tuple[np.ndarray, ...]:
        return self._mesh

    @cached_property
    def _k_squared(self) -> np.ndarray:
        total = np.zeros(self.shape)
        for i in range(self.dim):
            total = total + _broadcast_axis(self.wavenumbers(i) ** 2, i, self.dim)
        return total

    def k_squared(self) -> np.ndarray:
        """|k|^2 on the spectral mesh."""
        return self._k_squared


def _broadcast_axis(values: np.ndarray, axis: int, dim: int) -> np.ndarray:
    shape = [1] * dim
    shape[axis] = values.size
    return values.reshape(shape)


@dataclass(frozen=True, eq=False)
class Field:
    """Complex samples of a function on a Grid at time t."""

    grid: Grid
    values: np.ndarray
    time: float = 0.0
    label: str = ""
    flags: Tuple[str, ...] = ()

    def __post_init__(self):
        values = np.array(self.values, dtype=np.complex128)
        if values.shape != self.grid.shape:
            if values.size != self.grid.size:
                raise GridError(
                    "Field values do not match the grid shape",
                    {"values_shape": values.shape, "grid_shape": self.grid.shape},
                )
            values = values.reshape(self.grid.shape)
        if not np.all(np.isfinite(values)):
            raise NonFiniteFieldError(
                "Field contains NaN or Inf", {"label": self.label, "time": self.time}
            )
        values.setflags(write=False)
        object.__setattr__(self, "values", values)
        object.__setattr__(self, "time", float(self.time))
        object.__setattr__(self, "flags", tuple(self.flags))

    @classmethod
    def zeros(cls, grid: Grid, time: float = 0.0, label: str = "zero") -> "Field":
        return cls(grid, np.zeros(grid.shape, dtype=np.complex128), time, label)

    def with_values(
        self,
        values: np.ndarray,
        label: Optional[str] = None,
        time: Optional[float] = None,
        flags: Optional[Tuple[str, ...]] = None,
    ) -> "Field":
        return replace(
            self,
            values=values,
            label=self.label if label is None else label,
            time=self.time if time is None else time,
            flags=self.flags if flags is None else flags,
        )

    def __add__(self, other: "Field") -> "Field":
        check_same_grid(self, other)
        return self.with_values(self.values + other.values)

    def __sub__(self, other: "Field") -> "Field":
        check_same_grid(self, other)
        return self.with_values(self.values - other.values)

    def __mul__(self, scalar: Union[complex, float, np.ndarray]) -> "Field":
        return self.with_values(self.values * scalar)

    __rmul__ = __mul__

    def __neg__(self) -> "Field":
        return self.with_values(-self.values)

    def conj(self) -> "Field":
        return self.with_values(np.conj(self.values))

    def mass(self) -> float:
        return inner_product_real(self, self)

    def l2_norm(self) -> float:
        return math.sqrt(max(self.mass(), 0.0))


def check_same_grid(a: Field, b: Field) -> None:
    if a.grid != b.grid:
        raise GridMismatchError(
            "Fields live on different grids",
            {"a": (a.grid.n_points, a.grid.half_length), "b": (b.grid.n_points, b.grid.half_length)},
        )


def multi_indices(dim: int, order: int) -> Iterator[MultiIndex]:
    """All alpha in N^dim with |alpha| = order, in lexicographic order."""
    for alpha in itertools.product(range(order + 1), repeat=dim):
        if sum(alpha) == order:
            yield alpha


def multinomial(order: int, alpha: Sequence[int]) -> int:
    coefficient = math.factorial(order)
    for a in alpha:
        coefficient //= math.factorial(a)
    return coefficient


def _validate_multi_index(grid: Grid, multi_index: Sequence[int]) -> MultiIndex:
    alpha = tuple(int(a) for a in multi_index)
    if len(alpha) != grid.dim:
        raise DerivativeOrderError(
            "Multi-index length must equal the grid dimension",
            {"multi_index": alpha, "dim": grid.dim},
        )
    if any(a < 0 for a in alpha):
        raise DerivativeOrderError("Multi-index entries must be non-negative", {"multi_index": alpha})
    if sum(alpha) > MAX_DERIVATIVE_ORDER:
        raise DerivativeOrderError(
            f"Derivative order above {MAX_DERIVATIVE_ORDER} is not supported",
            {"multi_index": alpha},
        )
    return alpha


def derivative_multiplier(grid: Grid, multi_index: Sequence[int]) -> np.ndarray:
    """Fourier symbol (ik)^alpha; axes are composed in sorted order."""
    alpha = _validate_multi_index(grid, multi_index)
    symbol = np.ones(grid.shape, dtype=np.complex128)
    for axis in range(grid.dim):
        order = alpha[axis]
        if order == 0:
            continue
        factor = (1j * grid.wavenumbers(axis)) ** order
        if order % 2:
            factor[grid.n_points[axis] // 2] = 0.0
        symbol = symbol * _broadcast_axis(factor, axis, grid.dim)
    return symbol


def spectral_derivative(field: Field, multi_index: Sequence[int]) -> Field:
    alpha = _validate_multi_index(field.grid, multi_index)
    if sum(alpha) == 0:
        return field.with_values(field.values)
    symbol = derivative_multiplier(field.grid, alpha)
    values = spfft.ifftn(symbol * spfft.fftn(field.values))
    return field.with_values(values, label=f"d{alpha}[{field.label}]")


def gradient(field: Field) -> List[Field]:
    return [
        spectral_derivative(field, tuple(int(i == axis) for i in range(field.grid.dim)))
        for axis in range(field.grid.dim)
    ]


def laplacian(field: Field) -> Field:
    values = spfft.ifftn(-field.grid.k_squared() * spfft.fftn(field.values))
    return field.with_values(values, label=f"lap[{field.label}]")


def sobolev_weights(grid: Grid, s: int) -> np.ndarray:
    """sum_{|alpha|<=s} |(ik)^alpha|^2 on the spectral mesh."""
    if int(s) != s or s < 0:
        raise DerivativeOrderError("Sobolev index must be a non-negative integer", {"s": s})
    if s > MAX_DERIVATIVE_ORDER:
        raise DerivativeOrderError(
            f"Sobolev index above {MAX_DERIVATIVE_ORDER} is not supported", {"s": s}
        )
    weights = np.zeros(grid.shape)
    for order in range(int(s) + 1):
        for alpha in multi_indices(grid.dim, order):
            weights = weights + np.abs(derivative_multiplier(grid, alpha)) ** 2
    return weights


def sobolev_norm(field: Field, s: int) -> float:
    weights = sobolev_weights(field.grid, s)
    spectrum = spfft.fftn(field.values)
    total = np.sum(weights * np.abs(spectrum) ** 2)
    return math.sqrt(field.grid.cell_volume * total / field.grid.size)


def parseval_mass(field: Field) -> float:
    """Spectral-side evaluation of the L^2 mass."""
    spectrum = spfft.fftn(field.values)
    return float(field.grid.cell_volume * np.sum(np.abs(spectrum) ** 2) / field.grid.size)


def _pairing(a: Field, b: Field) -> complex:
    check_same_grid(a, b)
    return complex(a.grid.cell_volume * np.vdot(b.values.ravel(), a.values.ravel()))


def inner_product_real(a: Field, b: Field) -> float:
    """Re of the quadrature of a * conj(b)."""
    return _pairing(a, b).real


def inner_product_imag(a: Field, b: Field) -> float:
    """Im of the quadrature of a * conj(b)."""
    return _pairing(a, b).imag


def integrate(grid: Grid, values: np.ndarray) -> float:
    """Rectangle-rule quadrature of real samples."""
    return float(grid.cell_volume * np.sum(np.real(values)))


def spectral_interpolate(field: Field, points: Sequence[np.ndarray]) -> np.ndarray:
    """Evaluate the trigonometric interpolant on the tensor grid of `points`.

    Points outside the box wrap periodically.
    """
    grid = field.grid
    if len(points) != grid.dim:
        raise GridError("One coordinate array per axis is required", {"dim": grid.dim})
    coefficients = spfft.fftn(field.values)
    for axis in range(grid.dim):
        n = grid.n_points[axis]
        k = grid.wavenumbers(axis)
        offset = np.asarray(points[axis], dtype=float) + grid.half_length[axis]
        basis = np.exp(1j * np.outer(offset, k)) / n
        basis[:, n // 2] = np.cos(offset * k[n // 2]) / n
        coefficients = np.moveaxis(
            np.tensordot(basis, np.moveaxis(coefficients, axis, 0), axes=(1, 0)), 0, axis
        )
    return coefficients


def minimum_half_length(
    centers: Sequence[Sequence[float]],
    velocities: Sequence[Sequence[float]],
    omegas: Sequence[float],
    t_max: float,
) -> float:
    """Box rule: max_k(|x_k| + |v_k| T) + 10/sqrt(min omega)."""
    reach = 0.0
    for center, velocity in zip(centers, velocities):
        for x0, v in zip(center, velocity):
            reach = max(reach, abs(x0) + abs(v) * abs(t_max))
    return reach + 10.0 / math.sqrt(min(omegas))
