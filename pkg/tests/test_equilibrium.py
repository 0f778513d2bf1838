"""Tests for the detailed-balance equilibrium."""

import math

import numpy as np
import pytest

from bd_cutoff.coefficients import make_constant, make_penrose
from bd_cutoff.equilibrium import (
    compute_Q,
    mass_at,
    mu_s_estimate,
    second_moment,
    solve_z,
)
from bd_cutoff.errors import ParameterError, SupercriticalError, TruncationError


def penrose_half():
    """Helper: Penrose(1/2, 0, 1, 1), infinite critical mass."""
    return make_penrose(0.5, 0.0, 1.0, 1.0)


def penrose_finite_mu_s():
    """Helper: a Penrose model with beta in (0, 1), so the critical mass is finite."""
    return make_penrose(0.5, 0.5, 1.0, 1.0)


class TestComputeQ:
    """Tests for compute_Q."""

    def test_constant_rates_geometric(self):
        """Test Q_i = z^i and the exact geometric tail for constant rates."""
        eq = compute_Q(make_constant(), 0.5, 64)

        np.testing.assert_allclose(eq.Q, 0.5 ** np.arange(1, 65), rtol=1e-14)
        # sum_i i z^i = z / (1 - z)^2
        assert eq.mass == pytest.approx(2.0, abs=1e-14)
        assert eq.tail_bound > 0

    def test_detailed_balance(self):
        """Test b_{i+1} Q_{i+1} = a_i Q_i Q_1 on Penrose rates."""
        eq = compute_Q(penrose_half(), 0.5, 4096)

        assert eq.detailed_balance_residual() <= 1e-14

    def test_log_scale_survives_underflow(self):
        """Test that log_Q stays finite where Q underflows."""
        eq = compute_Q(penrose_half(), 0.5, 4096)

        assert eq.Q[-1] == 0.0
        assert np.all(np.isfinite(eq.log_Q))
        np.testing.assert_allclose(np.exp(eq.log_Q[:200]), eq.Q[:200], rtol=1e-12)

    def test_mass_increases_with_z(self):
        """Test monotonicity of the mass in z."""
        model = penrose_half()
        masses = [mass_at(model, z, 512) for z in (0.1, 0.3, 0.5, 0.7)]

        assert masses == sorted(masses)

    def test_extend(self):
        """Test that extend keeps short requests and recomputes long ones."""
        eq = compute_Q(penrose_half(), 0.5, 64)

        assert eq.extend(32) is eq
        longer = eq.extend(128)
        assert longer.N == 128
        np.testing.assert_array_equal(longer.Q[:64], eq.Q)

    def test_rejects_supercritical_z(self):
        """Test that z >= z_s is rejected."""
        with pytest.raises(SupercriticalError):
            compute_Q(penrose_half(), 1.0, 64)

    def test_rejects_nonpositive_z(self):
        """Test that z <= 0 is rejected."""
        with pytest.raises(ParameterError):
            compute_Q(penrose_half(), 0.0, 64)

    def test_rejects_tiny_N(self):
        """Test the minimum truncation."""
        with pytest.raises(TruncationError):
            compute_Q(penrose_half(), 0.5, 1)

    def test_second_moment(self):
        """Test sum i^2 z^i = z (1 + z) / (1 - z)^3 for constant rates."""
        eq = compute_Q(make_constant(), 0.5, 128)

        assert second_moment(eq) == pytest.approx(6.0, rel=1e-12)


class TestSolveZ:
    """Tests for solve_z and the critical mass."""

    def test_constant_mass_two(self):
        """Test z = 0.5 for constant rates at mu = 2."""
        eq = solve_z(make_constant(), 2.0)

        assert eq.z == pytest.approx(0.5, abs=1e-10)
        assert eq.mass == pytest.approx(2.0, abs=1e-9)

    def test_penrose_round_trip(self):
        """Test that solving for the mass at a known z recovers z."""
        model = penrose_half()
        mu = mass_at(model, 0.4, 4096)

        eq = solve_z(model, mu, tol=1e-12)

        assert eq.z == pytest.approx(0.4, abs=1e-9)

    def test_supercritical_mass(self):
        """Test that a mass above the finite critical mass is rejected."""
        model = penrose_finite_mu_s()
        estimate = mu_s_estimate(model, 100_000)

        assert not estimate.saturated
        with pytest.raises(SupercriticalError):
            solve_z(model, estimate.value * 2)

    def test_infinite_critical_mass_is_saturated(self):
        """Test that a divergent critical-mass series is flagged, not trusted."""
        estimate = mu_s_estimate(penrose_half(), 100_000)

        assert estimate.saturated
        assert estimate.lower_bound

    def test_rejects_nonpositive_mass(self):
        """Test mass validation."""
        with pytest.raises(ParameterError):
            solve_z(make_constant(), 0.0)

    def test_mu_s_needs_large_N(self):
        """Test the minimum N of the critical-mass estimate."""
        with pytest.raises(TruncationError):
            mu_s_estimate(penrose_half(), 32)

    def test_mass_is_finite(self):
        """Test that the solved state carries a finite certified mass."""
        eq = solve_z(penrose_half(), 1.0)

        assert math.isfinite(eq.mass)
        assert eq.tail_bound <= 1e-10
