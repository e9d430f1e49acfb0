import numpy as np
import pytest
from numpy.testing import assert_allclose

from nlslab.errors import ConfigError, ExistenceWindowError, PreconditionError
from nlslab.nonlinearity import Criticality, Nonlinearity, NonlinearityKind


class TestNonlinearityFormulas:
    """Test cases for f, f' and F."""

    def test_cubic_values(self):
        """Test f(4)=4, f'(4)=1, F(4)=8 for p=3."""
        nl = Nonlinearity.pure_power(3)
        assert nl.f(4.0) == pytest.approx(4.0)
        assert nl.f_prime(4.0) == pytest.approx(1.0)
        assert nl.F(4.0) == pytest.approx(8.0)

    def test_cubic_quintic_values(self):
        """Test f(1)=0, f'(1)=-1, F(1)=1/6 for the cubic-quintic model."""
        nl = Nonlinearity.cubic_quintic()
        assert nl.f(1.0) == pytest.approx(0.0)
        assert nl.f_prime(1.0) == pytest.approx(-1.0)
        assert nl.F(1.0) == pytest.approx(1.0 / 6.0)

    def test_negative_argument_rejected(self):
        """Test that r < 0 is rejected."""
        with pytest.raises(PreconditionError):
            Nonlinearity.pure_power(3).f(-1.0)

    def test_primitive_derivative_is_f(self):
        """Test F' = f by central differences at random r."""
        rng = np.random.default_rng(1)
        r = rng.uniform(0.1, 3.0, 10)
        h = 1e-5
        for nl in (Nonlinearity.pure_power(3), Nonlinearity.pure_power(4.5), Nonlinearity.cubic_quintic()):
            numeric = (nl.F(r + h) - nl.F(r - h)) / (2 * h)
            assert_allclose(numeric, nl.f(r), rtol=1e-8)

    def test_nonsmooth_origin_convention(self):
        """Test that f'(0) is 0 with a flag when p < 3."""
        nl = Nonlinearity.pure_power(2.0)
        assert nl.f_prime(0.0) == 0.0
        assert "nonsmooth_origin" in nl.flags
        assert Nonlinearity.pure_power(3).flags == ()

    def test_free_kind(self):
        """Test that the free hook has f = 0."""
        nl = Nonlinearity.free()
        assert nl.f(2.0) == 0.0
        assert nl.F(2.0) == 0.0

    def test_exponent_below_one_rejected(self):
        """Test that p <= 1 is rejected."""
        with pytest.raises(ConfigError):
            Nonlinearity.pure_power(1.0)


class TestCriticality:
    """Test cases for the criticality tag."""

    def test_tags(self):
        """Test subcritical, critical and supercritical tags."""
        assert Nonlinearity.pure_power(3, dim=1).criticality is Criticality.SUBCRITICAL
        assert Nonlinearity.pure_power(5, dim=1).criticality is Criticality.CRITICAL
        assert Nonlinearity.pure_power(3, dim=2).criticality is Criticality.CRITICAL
        assert Nonlinearity.pure_power(7, dim=1).criticality is Criticality.SUPERCRITICAL
        assert Nonlinearity.cubic_quintic().criticality is Criticality.SUBCRITICAL

    def test_critical_scaling_identity(self):
        """Test d r f'(r) = 2 f(r) exactly when critical."""
        rng = np.random.default_rng(7)
        r = rng.uniform(0.01, 5.0, 10)
        for p, d in ((5, 1), (3, 2)):
            nl = Nonlinearity.pure_power(p, dim=d)
            assert_allclose(d * r * nl.f_prime(r), 2 * nl.f(r), rtol=1e-12)
        nl = Nonlinearity.pure_power(3, dim=1)
        assert not np.allclose(r * nl.f_prime(r), 2 * nl.f(r))

    def test_worked_critical_example(self):
        """Test the p=5 identity at r=2."""
        nl = Nonlinearity.pure_power(5)
        assert 1 * 2.0 * nl.f_prime(2.0) == pytest.approx(2 * nl.f(2.0))
        assert nl.f_prime(2.0) == pytest.approx(4.0)

    def test_existence_window(self):
        """Test the cubic-quintic frequency window (0, 3/16)."""
        nl = Nonlinearity.cubic_quintic()
        assert nl.existence_window() == (0.0, 3.0 / 16.0)
        nl.check_omega(0.1)
        with pytest.raises(ExistenceWindowError):
            nl.check_omega(0.2)
        assert nl.kind is NonlinearityKind.CUBIC_QUINTIC


class TestG:
    """Test cases for g and its Cartesian jet."""

    def test_g_at_origin(self):
        """Test g(0) = 0."""
        assert Nonlinearity.pure_power(3).g(0.0) == 0.0

    def test_g_cubic(self):
        """Test g(1+i) = 2+2i for p=3."""
        assert Nonlinearity.pure_power(3).g(1 + 1j) == pytest.approx(2 + 2j)

    def test_partials_worked_example(self):
        """Test gx(2)=12, gy(2)=4i and gx + i gy = 8 for p=3."""
        jet = Nonlinearity.pure_power(3).g_partials(2.0 + 0j)
        assert complex(jet["gx"]) == pytest.approx(12.0)
        assert complex(jet["gy"]) == pytest.approx(4j)
        assert complex(jet["gx"] + 1j * jet["gy"]) == pytest.approx(8.0)

    def test_identity_with_f_prime(self):
        """Test gx + i gy = 2 z^2 f'(|z|^2) at random points."""
        rng = np.random.default_rng(5)
        z = rng.uniform(-2, 2, 20) + 1j * rng.uniform(-2, 2, 20)
        for nl in (Nonlinearity.pure_power(3), Nonlinearity.pure_power(5), Nonlinearity.cubic_quintic()):
            jet = nl.g_partials(z)
            assert_allclose(jet["gx"] + 1j * jet["gy"], 2 * z**2 * nl.f_prime(np.abs(z) ** 2), rtol=1e-12, atol=1e-12)

    def test_partials_match_finite_differences(self):
        """Test first and second partials against central differences."""
        rng = np.random.default_rng(9)
        radius = rng.uniform(0.2, 3.0, 20)
        angle = rng.uniform(0, 2 * np.pi, 20)
        z = radius * np.exp(1j * angle)
        nl = Nonlinearity.pure_power(5)
        h = 1e-5
        jet = nl.g_partials(z, order=2)
        gx = (nl.g(z + h) - nl.g(z - h)) / (2 * h)
        gy = (nl.g(z + 1j * h) - nl.g(z - 1j * h)) / (2 * h)
        assert_allclose(jet["gx"], gx, rtol=1e-7, atol=1e-7)
        assert_allclose(jet["gy"], gy, rtol=1e-7, atol=1e-7)
        partials = nl.g_partials
        gxx = (partials(z + h)["gx"] - partials(z - h)["gx"]) / (2 * h)
        gxy = (partials(z + 1j * h)["gx"] - partials(z - 1j * h)["gx"]) / (2 * h)
        gyy = (partials(z + 1j * h)["gy"] - partials(z - 1j * h)["gy"]) / (2 * h)
        assert_allclose(jet["gxx"], gxx, rtol=1e-6, atol=1e-6)
        assert_allclose(jet["gxy"], gxy, rtol=1e-6, atol=1e-6)
        assert_allclose(jet["gyy"], gyy, rtol=1e-6, atol=1e-6)

    def test_order_three_rejected(self):
        """Test that only orders 1 and 2 are supported."""
        with pytest.raises(PreconditionError):
            Nonlinearity.pure_power(3).g_partials(1.0, order=3)
