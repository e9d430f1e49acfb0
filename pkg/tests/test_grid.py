import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from nlslab.errors import DerivativeOrderError, GridError, GridMismatchError, NonFiniteFieldError
from nlslab.grid import (
    Field,
    Grid,
    gradient,
    inner_product_imag,
    inner_product_real,
    laplacian,
    minimum_half_length,
    multi_indices,
    multinomial,
    parseval_mass,
    sobolev_norm,
    spectral_derivative,
    spectral_interpolate,
)


def _sech_field(grid, center=0.0):
    x = grid.coordinates()[0]
    return Field(grid, math.sqrt(2.0) / np.cosh(x - center), label="Q")


class TestGrid:
    """Test cases for Grid."""

    def test_rejects_odd_point_count(self):
        """Test that odd point counts are rejected."""
        with pytest.raises(GridError):
            Grid((63,), (10.0,))

    def test_rejects_too_few_points(self):
        """Test that fewer than 16 points are rejected."""
        with pytest.raises(GridError):
            Grid((8,), (10.0,))

    def test_rejects_three_dimensions(self):
        """Test that d=3 is out of scope."""
        with pytest.raises(GridError):
            Grid((16, 16, 16), (1.0, 1.0, 1.0))

    def test_spacing_times_points_is_box_length(self):
        """Test h N = 2L."""
        grid = Grid((100,), (7.5,))
        assert grid.spacing[0] * grid.n_points[0] == pytest.approx(15.0, abs=1e-14)
        assert grid.axis(0)[0] == -7.5

    def test_wavenumbers_are_multiples_of_pi_over_l(self):
        """Test the FFT ordering of wavenumbers."""
        grid = Grid((16,), (math.pi,))
        k = grid.wavenumbers(0)
        assert_allclose(k[:8], np.arange(8), atol=1e-12)
        assert k[8] == pytest.approx(-8.0)
        assert_allclose(k[9:], -k[1:8][::-1], atol=1e-12)

    def test_two_dimensional_coordinates(self):
        """Test meshgrid coordinates use ij indexing."""
        grid = Grid.uniform(2, 16, 4.0)
        x, y = grid.coordinates()
        assert x.shape == (16, 16)
        assert np.all(x[:, 0] == grid.axis(0))
        assert np.all(y[0, :] == grid.axis(1))


class TestField:
    """Test cases for Field."""

    def test_rejects_nan(self):
        """Test that non-finite values are rejected."""
        grid = Grid((16,), (1.0,))
        values = np.zeros(16)
        values[3] = np.nan
        with pytest.raises(NonFiniteFieldError):
            Field(grid, values)

    def test_values_are_read_only(self):
        """Test that field values cannot be modified in place."""
        field = Field.zeros(Grid((16,), (1.0,)))
        with pytest.raises(ValueError):
            field.values[0] = 1.0

    def test_grid_mismatch_rejected(self):
        """Test that arithmetic across grids is rejected."""
        a = Field.zeros(Grid((16,), (1.0,)))
        b = Field.zeros(Grid((32,), (1.0,)))
        with pytest.raises(GridMismatchError):
            a + b

    def test_scalar_arithmetic(self):
        """Test scalar multiplication and negation."""
        grid = Grid((16,), (1.0,))
        field = Field(grid, np.ones(16))
        assert_allclose((2j * field).values, 2j * np.ones(16))
        assert_allclose((-field).values, -np.ones(16))
        assert_allclose((field - field).values, 0.0)


class TestSpectralDerivative:
    """Test cases for spectral_derivative."""

    def test_derivative_of_constant_is_zero(self):
        """Test the derivative of a constant field."""
        grid = Grid((32,), (3.0,))
        result = spectral_derivative(Field(grid, np.ones(32)), (1,))
        assert np.max(np.abs(result.values)) < 1e-14

    def test_resolved_sine_is_exact(self):
        """Test d/dx sin(pi x / L) on N=64."""
        L = 5.0
        grid = Grid((64,), (L,))
        x = grid.axis(0)
        result = spectral_derivative(Field(grid, np.sin(math.pi * x / L)), (1,))
        assert np.max(np.abs(result.values - math.pi / L * np.cos(math.pi * x / L))) < 1e-12

    def test_second_derivative_of_gaussian(self):
        """Test d^2/dx^2 exp(-x^2) against (4x^2 - 2) exp(-x^2)."""
        grid = Grid((256,), (20.0,))
        x = grid.axis(0)
        result = spectral_derivative(Field(grid, np.exp(-(x**2))), (2,))
        assert np.max(np.abs(result.values - (4 * x**2 - 2) * np.exp(-(x**2)))) < 1e-8

    def test_order_above_six_rejected(self):
        """Test that |alpha| > 6 is rejected."""
        grid = Grid((32,), (3.0,))
        with pytest.raises(DerivativeOrderError):
            spectral_derivative(Field.zeros(grid), (7,))

    def test_mixed_derivatives_commute(self):
        """Test d_x d_y = d_y d_x bit-identically."""
        grid = Grid.uniform(2, 32, 6.0)
        x, y = grid.coordinates()
        field = Field(grid, np.exp(-(x**2) - 2 * y**2) * (1 + 0.3j * x))
        xy = spectral_derivative(spectral_derivative(field, (1, 0)), (0, 1))
        yx = spectral_derivative(spectral_derivative(field, (0, 1)), (1, 0))
        assert_allclose(xy.values, yx.values, atol=1e-12)

    def test_laplacian_matches_gradient_sum(self):
        """Test that the Laplacian equals the sum of second derivatives."""
        grid = Grid.uniform(2, 32, 6.0)
        x, y = grid.coordinates()
        field = Field(grid, np.exp(-(x**2) - y**2))
        expected = spectral_derivative(field, (2, 0)).values + spectral_derivative(field, (0, 2)).values
        assert_allclose(laplacian(field).values, expected, atol=1e-10)
        assert len(gradient(field)) == 2


class TestSobolevNorm:
    """Test cases for sobolev_norm."""

    def test_zero_field(self):
        """Test that the zero field has zero norm."""
        grid = Grid((32,), (2.0,))
        assert sobolev_norm(Field.zeros(grid), 3) == 0.0

    def test_sine_h1_norm(self):
        """Test |sin|_{H^1}^2 = 2 pi on [-pi, pi)."""
        grid = Grid((64,), (math.pi,))
        field = Field(grid, np.sin(grid.axis(0)))
        assert sobolev_norm(field, 1) == pytest.approx(math.sqrt(2 * math.pi), rel=1e-12)

    def test_s0_is_l2_norm(self):
        """Test that s=0 equals the L2 norm for a random field."""
        rng = np.random.default_rng(3)
        grid = Grid((64,), (4.0,))
        field = Field(grid, rng.standard_normal(64) + 1j * rng.standard_normal(64))
        assert sobolev_norm(field, 0) == pytest.approx(field.l2_norm(), rel=1e-12)

    def test_gaussian_h1_norm(self):
        """Test |exp(-x^2)|_{H^1}^2 = 2 sqrt(pi/2)."""
        grid = Grid((256,), (20.0,))
        field = Field(grid, np.exp(-(grid.axis(0) ** 2)))
        assert sobolev_norm(field, 1) ** 2 == pytest.approx(2 * math.sqrt(math.pi / 2), rel=1e-10)

    def test_monotone_in_s(self):
        """Test |w|_{H^s} <= |w|_{H^{s+1}}."""
        grid = Grid.uniform(2, 32, 5.0)
        x, y = grid.coordinates()
        field = Field(grid, np.exp(-(x**2) - y**2) * np.exp(1j * x))
        norms = [sobolev_norm(field, s) for s in range(5)]
        assert all(a <= b for a, b in zip(norms[:-1], norms[1:]))

    def test_parseval(self):
        """Test physical-side and spectral-side masses agree."""
        rng = np.random.default_rng(11)
        grid = Grid.uniform(2, 32, 3.0)
        field = Field(grid, rng.standard_normal(grid.shape) + 1j * rng.standard_normal(grid.shape))
        assert parseval_mass(field) == pytest.approx(field.mass(), rel=1e-12)


class TestInnerProducts:
    """Test cases for the real and imaginary pairings."""

    def test_real_field_has_zero_imaginary_pairing(self):
        """Test Im<Q, Q> = 0."""
        q = _sech_field(Grid((256,), (20.0,)))
        assert inner_product_imag(q, q) == 0.0
        assert inner_product_real(q, q) == pytest.approx(4.0, rel=1e-10)

    def test_phase_rotation(self):
        """Test <iQ, Q> = i int Q^2."""
        q = _sech_field(Grid((256,), (20.0,)))
        assert abs(inner_product_real(1j * q, q)) < 1e-14
        assert inner_product_imag(1j * q, q) == pytest.approx(4.0, rel=1e-10)

    def test_separated_tails_barely_overlap(self):
        """Test the overlap of solitons at -8 and +8 against 2 int sech(x-a) sech(x+a) = 8a/sinh(2a)."""
        grid = Grid((512,), (20.0,))
        a = _sech_field(grid, -8.0)
        b = _sech_field(grid, 8.0)
        overlap = inner_product_real(a, b)
        assert overlap == pytest.approx(64.0 / math.sinh(16.0), rel=1e-6)
        assert abs(overlap) < 2e-5


class TestHelpers:
    """Test cases for multi-index and box helpers."""

    def test_multi_indices_lexicographic(self):
        """Test the canonical order of second-order multi-indices in 2D."""
        assert list(multi_indices(2, 2)) == [(0, 2), (1, 1), (2, 0)]

    def test_multinomial(self):
        """Test multinomial coefficients."""
        assert multinomial(2, (1, 1)) == 2
        assert multinomial(3, (2, 1)) == 3
        assert multinomial(4, (4, 0)) == 1

    def test_minimum_half_length(self):
        """Test the box rule."""
        required = minimum_half_length([(-8.0,), (8.0,)], [(-4.0,), (4.0,)], [1.0, 4.0], 2.0)
        assert required == pytest.approx(16.0 + 10.0)

    def test_spectral_interpolation_exact_for_modes(self):
        """Test band-limited interpolation reproduces resolved modes off the grid."""
        grid = Grid((32,), (math.pi,))
        field = Field(grid, np.cos(3 * grid.axis(0)) + 1j * np.sin(grid.axis(0)))
        points = np.array([0.123, -1.7, 2.9])
        values = spectral_interpolate(field, [points])
        assert_allclose(values, np.cos(3 * points) + 1j * np.sin(points), atol=1e-12)
