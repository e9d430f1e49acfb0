import math

import numpy as np
import pytest
from numpy.testing import assert_allclose
from pydantic import ValidationError

from nlslab.errors import PlanError, PreconditionError
from nlslab.grid import Field, Grid
from nlslab.models import SolitonParams
from nlslab.nonlinearity import Nonlinearity
from nlslab.propagator import (
    PropagationPlan,
    boundary_tail,
    conserved_quantities,
    dealias_mask,
    propagate,
    step_strang,
)
from nlslab.soliton import MultiSolitonConfig, evaluate_multisoliton, evaluate_soliton


def _params(v=0.0, x0=0.0):
    return SolitonParams(omega=1.0, v=(v,), x0=(x0,))


class TestPropagationPlan:
    """Test cases for PropagationPlan."""

    def test_step_count(self):
        """Test the number of steps and the effective step."""
        plan = PropagationPlan(dt=0.3, t_start=0.0, t_end=1.0)
        assert plan.n_steps == 4
        assert plan.effective_dt == pytest.approx(0.25)

    def test_backward_plan(self):
        """Test that a negative step runs from S down to T1."""
        plan = PropagationPlan(dt=-0.01, t_start=10.0, t_end=2.0)
        assert plan.n_steps == 800
        assert plan.effective_dt == pytest.approx(-0.01)

    def test_sign_mismatch_rejected(self):
        """Test that sign(dt) must follow the direction of the run."""
        with pytest.raises(ValidationError):
            PropagationPlan(dt=0.01, t_start=10.0, t_end=2.0)

    def test_zero_step_rejected(self):
        """Test that dt = 0 is rejected."""
        with pytest.raises(ValidationError):
            PropagationPlan(dt=0.0, t_start=0.0, t_end=1.0)

    def test_resolution_guard(self, line_grid):
        """Test that dt above the spacing guard is rejected."""
        plan = PropagationPlan(dt=0.1, t_start=0.0, t_end=1.0)
        with pytest.raises(PlanError):
            plan.check_resolution(line_grid)

    def test_dealias_default(self):
        """Test dealiasing defaults on for p >= 5 only."""
        plan = PropagationPlan(dt=0.01, t_start=0.0, t_end=1.0)
        assert not plan.wants_dealias(Nonlinearity.pure_power(3))
        assert plan.wants_dealias(Nonlinearity.pure_power(5))
        forced = PropagationPlan(dt=0.01, t_start=0.0, t_end=1.0, dealias=True)
        assert forced.wants_dealias(Nonlinearity.pure_power(3))


class TestConservedQuantities:
    """Test cases for conserved_quantities."""

    def test_resting_soliton(self, cubic, cubic_ground_state, line_grid):
        """Test mass 4, energy -2/3 and zero momentum for sqrt(2) sech."""
        r = evaluate_soliton(_params(), cubic_ground_state, line_grid, 0.0)
        quantities = conserved_quantities(r, cubic)
        assert quantities["mass"] == pytest.approx(4.0, rel=1e-10)
        assert quantities["energy"] == pytest.approx(-2.0 / 3.0, rel=1e-8)
        assert quantities["momentum"][0] == pytest.approx(0.0, abs=1e-12)

    def test_moving_soliton(self, cubic, cubic_ground_state, line_grid):
        """Test momentum v M / 2 and energy shifted by v^2 M / 8."""
        r = evaluate_soliton(_params(v=1.0), cubic_ground_state, line_grid, 0.0)
        quantities = conserved_quantities(r, cubic)
        assert quantities["momentum"][0] == pytest.approx(2.0, rel=1e-8)
        assert quantities["energy"] == pytest.approx(-2.0 / 3.0 + 0.5, rel=1e-8)

    def test_boundary_tail(self, cubic_ground_state, line_grid):
        """Test the boundary band sees only the exponential tail."""
        r = evaluate_soliton(_params(), cubic_ground_state, line_grid, 0.0)
        tail = boundary_tail(r)
        assert 0 < tail < 2.0 * math.sqrt(2.0) * math.exp(-0.9 * 32.0)


class TestSplitStep:
    """Test cases for step_strang and propagate."""

    def test_linear_flow_of_plane_wave(self):
        """Test the free flow multiplies a resolved mode by exp(-i k^2 t)."""
        grid = Grid((32,), (math.pi,))
        x = grid.axis(0)
        u = Field(grid, np.exp(3j * x))
        stepped = step_strang(u, 0.1, Nonlinearity.free())
        assert_allclose(stepped.values, np.exp(3j * x - 0.9j), atol=1e-13)
        assert stepped.time == pytest.approx(0.1)

    def test_soliton_is_exact(self, cubic, cubic_ground_state, line_grid):
        """Test that a moving soliton stays a soliton to splitting accuracy."""
        params = _params(v=1.0, x0=-2.0)
        initial = evaluate_soliton(params, cubic_ground_state, line_grid, 0.0)
        plan = PropagationPlan(dt=1e-3, t_start=0.0, t_end=2.0, snapshot_stride=500)
        trajectory = propagate(initial, plan, cubic)
        expected = evaluate_soliton(params, cubic_ground_state, line_grid, 2.0)
        assert trajectory.final.time == pytest.approx(2.0)
        assert (trajectory.final - expected).l2_norm() < 1e-4
        assert_allclose(trajectory.times, [0.0, 0.5, 1.0, 1.5, 2.0], atol=1e-12)

    def test_second_order_in_time(self, cubic, cubic_ground_state, line_grid):
        """Test halving dt divides the soliton error by four and the energy drift likewise."""
        params = _params(v=1.0, x0=-2.0)
        initial = evaluate_soliton(params, cubic_ground_state, line_grid, 0.0)
        expected = evaluate_soliton(params, cubic_ground_state, line_grid, 2.0)
        errors = []
        drifts = []
        for dt, stride in ((0.005, 20), (0.0025, 40), (0.00125, 80)):
            plan = PropagationPlan(dt=dt, t_start=0.0, t_end=2.0, snapshot_stride=stride)
            trajectory = propagate(initial, plan, cubic)
            errors.append((trajectory.final - expected).l2_norm())
            drifts.append(trajectory.ledger.relative_drift("energy"))

        for coarse, fine in zip(errors[:-1], errors[1:]):
            assert 3.5 <= coarse / fine <= 4.5
        for coarse, fine in zip(drifts[:-1], drifts[1:]):
            assert 3.0 <= coarse / fine <= 5.0

    def test_mass_is_conserved(self, cubic, cubic_ground_state, line_grid):
        """Test the mass drift stays at rounding level."""
        initial = evaluate_soliton(_params(v=0.5), cubic_ground_state, line_grid, 0.0)
        plan = PropagationPlan(dt=1e-3, t_start=0.0, t_end=1.0, snapshot_stride=100)
        trajectory = propagate(initial, plan, cubic)
        assert trajectory.ledger.relative_drift("mass") < 1e-12
        assert trajectory.ledger.relative_drift("energy") < 1e-4
        assert "mass_drift" not in trajectory.flags

    def test_time_reversibility(self, cubic, cubic_ground_state, line_grid):
        """Test that forward then backward recovers the initial field."""
        config = MultiSolitonConfig((_params(-0.5, -3.0), _params(0.5, 3.0)), cubic)
        initial = evaluate_multisoliton(config, None, line_grid, 0.0)
        forward = propagate(initial, PropagationPlan(dt=2e-3, t_start=0.0, t_end=0.5), cubic)
        backward = propagate(forward.final, PropagationPlan(dt=-2e-3, t_start=0.5, t_end=0.0), cubic)
        assert backward.final.time == pytest.approx(0.0, abs=1e-12)
        assert (backward.final - initial).l2_norm() < 1e-11

    def test_snapshot_lookup(self, cubic, cubic_ground_state, line_grid):
        """Test Trajectory.at for recorded and missing times."""
        initial = evaluate_soliton(_params(), cubic_ground_state, line_grid, 0.0)
        trajectory = propagate(initial, PropagationPlan(dt=1e-2, t_start=0.0, t_end=1.0, snapshot_stride=10), cubic)
        assert trajectory.at(0.5).time == pytest.approx(0.5)
        with pytest.raises(PreconditionError):
            trajectory.at(0.55)

    def test_initial_time_mismatch(self, cubic, cubic_ground_state, line_grid):
        """Test that the field time must equal plan.t_start."""
        initial = evaluate_soliton(_params(), cubic_ground_state, line_grid, 1.0)
        with pytest.raises(PlanError):
            propagate(initial, PropagationPlan(dt=1e-2, t_start=0.0, t_end=1.0), cubic)

    def test_dealias_mask(self):
        """Test the 2/3 rule keeps low modes and removes the top third."""
        grid = Grid((48,), (math.pi,))
        mask = dealias_mask(grid)
        k = np.abs(grid.wavenumbers(0))
        assert np.all(mask[k <= 16] == 1.0)
        assert np.all(mask[k > 16] == 0.0)

    @pytest.mark.slow
    def test_integrable_collision(self, cubic, cubic_ground_state, line_grid):
        """Test that two cubic solitons re-emerge after a head-on collision."""
        config = MultiSolitonConfig((_params(1.0, -6.0), _params(-1.0, 6.0)), cubic)
        initial = evaluate_multisoliton(config, None, line_grid, 0.0)
        plan = PropagationPlan(dt=1e-3, t_start=0.0, t_end=12.0, snapshot_stride=1000)
        trajectory = propagate(initial, plan, cubic)
        final = np.abs(trajectory.final.values)
        x = line_grid.axis(0)
        left, right = x < 0, x >= 0
        h = line_grid.spacing[0]
        assert h * np.sum(final[left] ** 2) == pytest.approx(4.0, rel=1e-3)
        assert h * np.sum(final[right] ** 2) == pytest.approx(4.0, rel=1e-3)
        assert np.max(final[left]) == pytest.approx(math.sqrt(2.0), rel=1e-2)
        assert np.max(final[right]) == pytest.approx(math.sqrt(2.0), rel=1e-2)
