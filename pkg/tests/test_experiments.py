import math
from dataclasses import replace

import numpy as np
import pytest
from numpy.testing import assert_allclose

from nlslab.errors import GridMismatchError, PlanError, PreconditionError
from nlslab.experiments import (
    coercivity_constant,
    fit_decay_rate,
    fit_ratio_bound,
    fit_two_term_bound,
    predict_theta_schedule,
    rate_spread,
    run_construction,
    run_uniqueness,
)
from nlslab.grid import Grid
from nlslab.nonlinearity import Nonlinearity
from nlslab.soliton import MultiSolitonConfig


class TestThetaSchedule:
    """Test cases for predict_theta_schedule."""

    def test_one_dimensional_schedule(self):
        """Test theta_s halves each step when 2 theta / 2 is not binding."""
        rows = predict_theta_schedule(0.4, 1, 3)
        assert [row.s for row in rows] == [0, 1, 2, 3]
        assert_allclose([row.theta_s for row in rows], [0.8, 0.4, 0.2, 0.1])
        assert_allclose([row.interpolated for row in rows], [0.8, 0.4, 0.8 / 3.0, 0.2])

    def test_dimension_cap(self):
        """Test theta_s never exceeds 2 theta / (d + 1)."""
        rows = predict_theta_schedule(1.0, 3, 3)
        assert_allclose([row.theta_s for row in rows], [2.0, 1.0, 0.5, 0.25])
        for row in rows[2:]:
            assert row.theta_s <= 0.5

    @pytest.mark.parametrize("theta", [0.0, -1.0, math.nan, math.inf])
    def test_bad_theta(self, theta):
        """Test that theta must be positive and finite."""
        with pytest.raises(PreconditionError):
            predict_theta_schedule(theta, 1, 3)


class TestFits:
    """Test cases for the fitting helpers."""

    def test_decay_rate(self):
        """Test the log-linear fit recovers an exact exponential."""
        times = np.linspace(1.0, 5.0, 20)
        values = 3.0 * np.exp(-0.7 * times)
        assert fit_decay_rate(times, values, np.ones(20, dtype=bool)) == pytest.approx(0.7, rel=1e-10)

    def test_decay_rate_needs_points(self):
        """Test that fewer than five usable points give NaN."""
        times = np.linspace(1.0, 5.0, 20)
        mask = np.zeros(20, dtype=bool)
        mask[:4] = True
        assert math.isnan(fit_decay_rate(times, np.exp(-times), mask))

    def test_rate_spread(self):
        """Test the spread ignores NaN entries."""
        assert rate_spread([1.0, 1.1, 0.9, math.nan]) == pytest.approx(0.2)
        assert math.isnan(rate_spread([1.0, math.nan]))

    def test_ratio_bound(self):
        """Test the smallest constant over positive denominators."""
        assert fit_ratio_bound(np.array([1.0, -4.0, 3.0]), np.array([1.0, 2.0, 0.0])) == 2.0
        assert fit_ratio_bound(np.array([1.0]), np.array([0.0])) == 0.0

    def test_two_term_bound_without_linear_part(self):
        """Test a purely quadratic left side admits the largest gamma."""
        times = np.linspace(2.0, 6.0, 9)
        z = np.full(9, 0.5)
        constant, gamma = fit_two_term_bound(times, z**2, z)
        assert gamma == 4.0
        assert constant <= 1.0

    def test_coercivity_constant(self):
        """Test c = H / N when the projections vanish."""
        h = np.array([2.0, 6.0])
        n = np.array([2.0, 3.0])
        assert coercivity_constant(h, n, np.zeros(2)) == pytest.approx(1.0)
        assert math.isnan(coercivity_constant(h, np.zeros(2), np.zeros(2)))

    def test_coercivity_with_projections(self):
        """Test the projections are charged at the fixed weight."""
        h, n, p = np.array([-0.5]), np.array([1.0]), np.array([2.0])
        c = coercivity_constant(h, n, p, weight=1.0)
        assert c == pytest.approx(1.5)
        assert c * n[0] - 1.0 * p[0] == pytest.approx(h[0])

    def test_negative_energy_fails_coercivity(self):
        """Test negative H with negligible projections gives a negative constant."""
        h = np.array([-5.0, -1.0])
        n = np.ones(2)
        p = np.full(2, 1e-6)
        assert coercivity_constant(h, n, p) < 0.0

class TestConstructionChecks:
    """Test cases for construction preconditions."""

    def test_short_ladder(self, construction_setup):
        """Test that a ladder needs three final times."""
        with pytest.raises(PlanError):
            run_construction(replace(construction_setup, ladder=(8.0, 10.0)))

    def test_unsorted_ladder(self, construction_setup):
        """Test that the ladder must increase."""
        with pytest.raises(PlanError):
            run_construction(replace(construction_setup, ladder=(8.0, 12.0, 10.0)))

    def test_t1_below_ladder(self, construction_setup):
        """Test that T1 must precede every final time."""
        with pytest.raises(PlanError):
            run_construction(replace(construction_setup, t1=9.0))

    def test_negative_step(self, construction_setup):
        """Test that the step is a positive magnitude."""
        with pytest.raises(PlanError):
            replace(construction_setup, dt=-1e-3)

    def test_supercritical_rejected(self, construction_setup):
        """Test that p = 7 in 1D is not constructed backward."""
        config = MultiSolitonConfig(construction_setup.config.solitons, Nonlinearity.pure_power(7))
        with pytest.raises(PreconditionError):
            run_construction(replace(construction_setup, config=config))

    def test_backward_plan(self, construction_setup):
        """Test each rung runs from S_n down to T1."""
        plan = construction_setup.plan_for(10.0)
        assert plan.t_start == 10.0
        assert plan.t_end == construction_setup.t1
        assert plan.dt < 0


@pytest.mark.slow
class TestConstruction:
    """Test cases for run_construction on the two-soliton ladder."""

    def test_rates_are_positive_and_consistent(self, construction_report):
        """Test every rung decays at a similar positive rate."""
        rates = construction_report.rates(1)
        assert len(rates) == 3
        assert all(math.isfinite(rate) and rate > 0 for rate in rates)
        assert construction_report.rate_spread < 0.15

    def test_theta_from_designated_rate(self, construction_report):
        """Test theta is half the H1 rate of the last rung."""
        assert construction_report.theta_fit == pytest.approx(0.5 * construction_report.rates(1)[-1])
        assert construction_report.schedule[1].theta_s == pytest.approx(construction_report.theta_fit)

    def test_cauchy_gaps_decrease(self, construction_report):
        """Test successive differences at T1 shrink along the ladder."""
        gaps = construction_report.cauchy_gaps[1]
        assert len(gaps) == 2
        assert gaps[1] < gaps[0]
        assert "cauchy_not_decreasing" not in construction_report.flags

    def test_fit_window(self, construction_report):
        """Test the window spans half of [T1, S_1]."""
        assert construction_report.fit_window == pytest.approx((2.0, 5.0))

    def test_table_shapes(self, construction_report):
        """Test the CSV tables have one value per column."""
        report = construction_report
        assert report.series_rows().shape[1] == len(report.series_columns())
        assert report.rate_rows().shape == (3, len(report.rate_columns()))
        assert report.gap_rows().shape == (2, len(report.gap_columns()))
        assert report.designated.s_final == 12.0


@pytest.mark.slow
class TestUniqueness:
    """Test cases for run_uniqueness."""

    def test_identical_constructions(self, construction_setup, construction_report):
        """Test a construction compared with itself has zero difference."""
        report = run_uniqueness(construction_setup, construction_setup, construction_report, construction_report)
        assert report.z_max == 0.0
        assert "zero_difference" in report.flags
        assert "difference_above_cauchy_gap" not in report.flags

    def test_independent_ladders_agree(
        self, construction_setup, construction_setup_b, construction_report, construction_report_b
    ):
        """Test two ladders differ by less than their Cauchy gaps."""
        report = run_uniqueness(
            construction_setup, construction_setup_b, construction_report, construction_report_b
        )
        assert 0.0 < report.z_max < report.cauchy_reference
        assert "difference_above_cauchy_gap" not in report.flags
        assert report.coercivity > 0.0
        assert "coercivity_not_observed" not in report.flags
        assert report.times[0] == pytest.approx(2.0)
        assert report.times[-1] == pytest.approx(6.0)
        assert report.rows().shape == (report.times.size, len(report.columns()))
        assert set(report.summary()) >= {"z_max", "coercivity", "decay_exponent"}

    def test_grid_mismatch(self, construction_setup):
        """Test that both constructions must share a grid."""
        other = replace(construction_setup, grid=Grid((256,), (32.0,)))
        with pytest.raises(GridMismatchError):
            run_uniqueness(construction_setup, other)

    def test_config_mismatch(self, construction_setup):
        """Test that both constructions must describe the same solitons."""
        solitons = tuple(
            params.model_copy(update={"x0": (params.x0[0] * 1.5,)}) for params in construction_setup.config.solitons
        )
        other = replace(construction_setup, config=MultiSolitonConfig(solitons, construction_setup.config.nonlinearity))
        with pytest.raises(PreconditionError):
            run_uniqueness(construction_setup, other)

    def test_nonlinearity_mismatch(self, construction_setup):
        """Test that both constructions must share the nonlinearity."""
        config = MultiSolitonConfig(construction_setup.config.solitons, Nonlinearity.pure_power(5))
        with pytest.raises(PreconditionError):
            run_uniqueness(construction_setup, replace(construction_setup, config=config))
