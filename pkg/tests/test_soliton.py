import math

import numpy as np
import pytest
from numpy.testing import assert_allclose

from nlslab.errors import ConfigError, DegenerateVelocityError, PreconditionError
from nlslab.grid import Grid, gradient
from nlslab.groundstate import solve_ground_state
from nlslab.models import SolitonParams
from nlslab.nonlinearity import Nonlinearity
from nlslab.soliton import (
    MultiSolitonConfig,
    apply_invariance,
    apply_scaling,
    cross_overlap,
    evaluate_multisoliton,
    evaluate_soliton,
    min_separation,
    nls_residual,
    soliton_center,
    soliton_gradient,
    soliton_time_derivative,
)


def _params(v=0.0, x0=0.0, omega=1.0, gamma=0.0):
    return SolitonParams(omega=omega, v=(v,), x0=(x0,), gamma=gamma)


class TestMultiSolitonConfig:
    """Test cases for MultiSolitonConfig."""

    def test_equal_velocities_rejected(self, cubic):
        """Test that two solitons with the same velocity are rejected."""
        with pytest.raises(DegenerateVelocityError):
            MultiSolitonConfig((_params(0.5, -3.0), _params(0.5, 3.0)), cubic)

    def test_dimension_mismatch_rejected(self, cubic):
        """Test that 2-component vectors are rejected in 1D."""
        params = SolitonParams(omega=1.0, v=(0.0, 1.0), x0=(0.0, 0.0))
        with pytest.raises(ConfigError):
            MultiSolitonConfig((params,), cubic)

    def test_separation(self, cubic):
        """Test centers and their minimum distance."""
        config = MultiSolitonConfig((_params(-1.0, -2.0), _params(1.0, 2.0)), cubic)
        assert config.K == 2
        assert soliton_center(config.solitons[1], 3.0)[0] == pytest.approx(5.0)
        assert min_separation(config, 3.0) == pytest.approx(10.0)
        assert min_separation(config.single(0), 3.0) == math.inf


class TestSolitonFields:
    """Test cases for evaluating boosted solitons."""

    def test_resting_soliton(self, cubic_ground_state, line_grid):
        """Test R(0, x) = sqrt(2) sech(x) at rest."""
        r = evaluate_soliton(_params(), cubic_ground_state, line_grid, 0.0)
        x = line_grid.axis(0)
        assert_allclose(r.values, math.sqrt(2.0) / np.cosh(x), atol=1e-12)
        assert r.time == 0.0

    def test_modulus_moves_with_velocity(self, cubic_ground_state, line_grid):
        """Test |R(t, x)| = Q(x - x0 - v t)."""
        params = _params(v=1.5, x0=-4.0, gamma=0.3)
        r = evaluate_soliton(params, cubic_ground_state, line_grid, 2.0)
        x = line_grid.axis(0)
        assert_allclose(np.abs(r.values), math.sqrt(2.0) / np.cosh(x + 1.0), atol=1e-12)

    def test_phase_at_center(self, cubic_ground_state, line_grid):
        """Test the phase v x/2 + (omega - v^2/4) t + gamma."""
        params = _params(v=1.0, x0=0.0, gamma=0.25)
        t = 1.0
        r = evaluate_soliton(params, cubic_ground_state, line_grid, t)
        x = line_grid.axis(0)
        expected = math.sqrt(2.0) / np.cosh(x - t) * np.exp(1j * (0.5 * x + 0.75 * t + 0.25))
        assert_allclose(r.values, expected, atol=1e-12)

    def test_nls_residual(self, cubic_ground_state, line_grid):
        """Test that a boosted soliton solves the equation on the grid."""
        params = _params(v=0.8, x0=-3.0, gamma=1.0)
        assert nls_residual(params, cubic_ground_state, line_grid, 1.5) < 1e-9

    def test_time_derivative_pair(self, cubic_ground_state, line_grid):
        """Test that kinematic and equation forms of dR/dt agree."""
        kinematic, equation = soliton_time_derivative(_params(v=-1.0), cubic_ground_state, line_grid, 0.5)
        assert_allclose(kinematic.values, equation.values, atol=1e-9)

    def test_gradient_matches_spectral(self, cubic_ground_state, line_grid):
        """Test the analytic gradient against the spectral derivative."""
        params = _params(v=0.6, x0=2.0)
        r = evaluate_soliton(params, cubic_ground_state, line_grid, 0.0)
        analytic = soliton_gradient(params, cubic_ground_state, line_grid, 0.0)[0]
        assert_allclose(analytic.values, gradient(r)[0].values, atol=1e-10)

    def test_mismatched_ground_state(self, cubic_ground_state, line_grid):
        """Test that a ground state at another frequency is rejected."""
        with pytest.raises(PreconditionError):
            evaluate_soliton(_params(omega=2.0), cubic_ground_state, line_grid, 0.0)

    def test_near_boundary_flag(self, cubic_ground_state, line_grid):
        """Test that centers near the box edge are flagged."""
        r = evaluate_soliton(_params(x0=30.0), cubic_ground_state, line_grid, 0.0)
        assert "near_boundary" in r.flags

    def test_sum_of_solitons(self, cubic, cubic_ground_state, line_grid):
        """Test R = R_1 + R_2."""
        a, b = _params(-0.5, -6.0), _params(0.5, 6.0)
        config = MultiSolitonConfig((a, b), cubic)
        total = evaluate_multisoliton(config, None, line_grid, 1.0)
        parts = evaluate_soliton(a, cubic_ground_state, line_grid, 1.0) + evaluate_soliton(
            b, cubic_ground_state, line_grid, 1.0
        )
        assert_allclose(total.values, parts.values, atol=1e-15)


class TestInvariances:
    """Test cases for the symmetry transforms."""

    def test_galilean_boost_of_resting_soliton(self, cubic_ground_state, line_grid):
        """Test that boosting a resting soliton gives the moving soliton."""
        resting = evaluate_soliton(_params(), cubic_ground_state, line_grid, 1.0)
        boosted = apply_invariance(resting, 0.0, [0.0], [1.0], 0.0)
        expected = evaluate_soliton(_params(v=1.0), cubic_ground_state, line_grid, 1.0)
        assert boosted.time == 1.0
        assert_allclose(boosted.values, expected.values, atol=1e-10)

    def test_translation_and_phase(self, cubic_ground_state, line_grid):
        """Test a pure translation combined with a phase rotation."""
        resting = evaluate_soliton(_params(), cubic_ground_state, line_grid, 0.0)
        moved = apply_invariance(resting, 0.0, [3.0], [0.0], 0.5)
        expected = evaluate_soliton(_params(x0=3.0, gamma=0.5), cubic_ground_state, line_grid, 0.0)
        assert_allclose(moved.values, expected.values, atol=1e-10)

    def test_wrong_vector_length(self, cubic_ground_state, line_grid):
        """Test that x0 and v must match the grid dimension."""
        resting = evaluate_soliton(_params(), cubic_ground_state, line_grid, 0.0)
        with pytest.raises(PreconditionError):
            apply_invariance(resting, 0.0, [0.0, 0.0], [0.0], 0.0)

    def test_scaling_changes_frequency(self, cubic_ground_state):
        """Test that lam = 4 maps Q_1 to Q_{1/4}."""
        grid = Grid((512,), (40.0,))
        resting = evaluate_soliton(_params(), cubic_ground_state, grid, 0.0)
        scaled = apply_scaling(resting, 4.0, 3.0)
        x = grid.axis(0)
        assert_allclose(scaled.values, 0.5 * math.sqrt(2.0) / np.cosh(0.5 * x), atol=1e-10)

    def test_scaling_rejects_bad_parameters(self, cubic_ground_state, line_grid):
        """Test that lam <= 0 and p <= 1 are rejected."""
        resting = evaluate_soliton(_params(), cubic_ground_state, line_grid, 0.0)
        with pytest.raises(PreconditionError):
            apply_scaling(resting, -1.0, 3.0)
        with pytest.raises(PreconditionError):
            apply_scaling(resting, 2.0, 1.0)


class TestCrossOverlap:
    """Test cases for cross_overlap."""

    def test_far_apart_solitons(self, cubic_ground_state):
        """Test the overlap of solitons at -8 and +8 against 8a/sinh(2a)."""
        grid = Grid((512,), (20.0,))
        a = evaluate_soliton(_params(x0=-8.0), cubic_ground_state, grid, 0.0)
        b = evaluate_soliton(_params(x0=8.0, v=1.0), cubic_ground_state, grid, 0.0)
        assert cross_overlap(a, b) == pytest.approx(64.0 / math.sinh(16.0), rel=1e-6)

    def test_two_dimensional_soliton(self):
        """Test that a 2D soliton is radial about its center."""
        nl = Nonlinearity.pure_power(3, dim=2)
        gs = solve_ground_state(nl, 1.0)
        grid = Grid.uniform(2, 64, 12.0)
        params = SolitonParams(omega=1.0, v=(0.0, 0.0), x0=(1.0, -1.0))
        r = evaluate_soliton(params, gs, grid, 0.0)
        values = np.abs(r.values)
        x, y = grid.coordinates()
        mirrored = gs.evaluate(np.sqrt((x - 1.0) ** 2 + (y + 1.0) ** 2))
        assert_allclose(values, mirrored, atol=1e-14)
