"""Tests for characteristics, supersolutions and the cutoff experiments."""

import math

import numpy as np
import pytest
from scipy.integrate import solve_ivp

from bd_cutoff.coefficients import make_penrose
from bd_cutoff.cutoff import (
    Characteristic,
    Supersolution,
    calibrate_D,
    chi_window,
    comparison_check,
    corollary_data,
    first_crossing,
    minimum_principle_check,
    run_cutoff_experiment,
    run_pulse_experiment,
    supersolution_check,
    uniform_pulse,
    upper_decay_check,
    window_mass,
)
from bd_cutoff.cutoff.characteristics import (
    Which,
    characteristic_A,
    disjointness_horizon,
    duhamel_bound,
    estimate_N_star,
    left_mass_edge,
    supersolution_values,
    two_pulse_windows,
)
from bd_cutoff.cutoff.experiments import first_failure
from bd_cutoff.dynamics import evolve_linear
from bd_cutoff.equilibrium import compute_Q
from bd_cutoff.errors import ExperimentInvalidError, ParameterError
from bd_cutoff.operators import Coords, StateVector, assemble_tilde, to_V


@pytest.fixture
def model():
    return make_penrose(0.5, 0.0, 1.0, 1.0)


@pytest.fixture
def eq(model):
    return compute_Q(model, 0.5, 256)


@pytest.fixture
def char():
    return Characteristic(alpha=0.5, drift=0.5)


class TestCharacteristic:
    """Tests for the closed-form characteristics."""

    def test_closed_form(self, char):
        """Test A(x, t) = (sqrt(x) - t/4)^2 for alpha = 1/2, drift 1/2."""
        assert char.A(100.0, 0.0) == pytest.approx(100.0)
        assert char.A(100.0, 4.0) == pytest.approx(81.0)
        assert char.extinction_time(100.0) == pytest.approx(40.0)

    def test_exact_at_time_zero(self, char):
        """Test A(x, 0) = x bit for bit."""
        x = np.array([1.0, 2.0, 3.0, 7.0, 95.0, 205.0, 1e6 + 1.0])

        assert char.A(x, 0.0).tolist() == x.tolist()
        assert Characteristic(alpha=1 / 3, drift=0.3).A(205.0, 0.0) == 205.0

    def test_matches_ode_reference(self):
        """Test the closed form against a tight numerical solution of the ODE."""
        c = Characteristic(alpha=1 / 3, drift=0.5)
        times = [0.0, 50.0, 100.0, 200.0]

        reference = solve_ivp(
            lambda t, y: -c.drift * y ** c.alpha,
            (0.0, 200.0),
            [1000.0],
            method="DOP853",
            t_eval=times,
            rtol=1e-12,
            atol=1e-10,
        )

        np.testing.assert_allclose(c.A(1000.0, np.array(times)), reference.y[0], rtol=1e-8)

    def test_forward_difference_is_first_order(self):
        """Test that the forward-difference error halves with the step."""
        c = Characteristic(alpha=0.3, drift=0.5)
        x, t = 1000.0, 5.0
        slope = -c.drift * c.A(x, t) ** c.alpha

        errors = [abs((c.A(x, t + h) - c.A(x, t)) / h - slope) for h in (1e-3, 5e-4)]

        assert errors[0] / errors[1] == pytest.approx(2.0, rel=0.01)

    def test_clamped_after_extinction(self, char):
        """Test the clamp at 1."""
        assert char.A(100.0, 40.0) == 1.0
        assert char.A(100.0, 1000.0) == 1.0
        assert char.dA_dt(100.0, 50.0) == 0.0

    def test_vectorized(self, char):
        """Test array arguments."""
        t = np.array([0.0, 4.0, 100.0])

        np.testing.assert_allclose(char.A(100.0, t), [100.0, 81.0, 1.0])

    def test_time_derivative(self, char):
        """Test dA/dt against a centered difference."""
        h = 1e-5
        fd = (char.A(400.0, 10.0 + h) - char.A(400.0, 10.0 - h)) / (2 * h)

        assert char.dA_dt(400.0, 10.0) == pytest.approx(fd, rel=1e-7)
        assert char.dA_dt(400.0, 10.0) == pytest.approx(-0.5 * char.A(400.0, 10.0) ** 0.5)

    def test_from_equilibrium(self, eq):
        """Test that alpha and the drift come from the equilibrium."""
        c = Characteristic.from_equilibrium(eq)

        assert (c.alpha, c.drift) == (0.5, pytest.approx(0.5))

    def test_invalid(self, char):
        """Test parameter validation."""
        with pytest.raises(ParameterError):
            Characteristic(alpha=1.0, drift=0.5)
        with pytest.raises(ParameterError):
            Characteristic(alpha=0.5, drift=0.0)
        with pytest.raises(ParameterError):
            characteristic_A(char, 0.5, 1.0)
        with pytest.raises(ParameterError):
            characteristic_A(char, 2.0, -1.0)


class TestWindows:
    """Tests for transport windows and mass bookkeeping."""

    def test_window_at_time_zero(self, char):
        """Test (N1 - K*, N2 + K*) at t = 0."""
        assert chi_window(char, 100, 200, 0.0, 5.0) == (95.0, 205.0)

    def test_window_dilations(self, char):
        """Test that the lower edge runs at twice and the upper at half speed."""
        lo, hi = chi_window(char, 100, 400, 8.0, 0.0)

        assert lo == pytest.approx(char.A(100, 16.0))
        assert hi == pytest.approx(char.A(400, 4.0))

    def test_two_pulse_windows_start_disjoint(self, char):
        """Test that the windows of the two pulses separate at t = 0."""
        (_, hi1), (lo2, _) = two_pulse_windows(char, 1024, 0.0, 10.0)

        assert hi1 < lo2

    def test_disjointness_horizon(self, char):
        """Test that the windows touch at the horizon and not before."""
        K = 10.0
        horizon = disjointness_horizon(char, 1024, K)
        (_, hi1), (lo2, _) = two_pulse_windows(char, 1024, 0.99 * horizon, K)

        assert horizon > 0
        assert lo2 > hi1

    def test_window_mass_is_open(self, eq):
        """Test that window endpoints are excluded."""
        v = StateVector(Coords.V, np.ones(10), eq)

        assert window_mass(v, (2.0, 5.0)) == 2.0
        assert window_mass(v, (2.5, 5.5)) == 3.0
        assert window_mass(v, (20.0, 30.0)) == 0.0

    def test_left_mass_edge(self, eq):
        """Test the cumulative-mass edge."""
        v = StateVector(Coords.V, np.array([0.0, 0.05, 0.05, 0.9]), eq)

        assert left_mass_edge(v, 0.1) == 3
        assert left_mass_edge(v, 2.0) is None

    def test_left_mass_edge_follows_characteristic(self, model):
        """Test that the 10% mass edge of a pulse moves along A(x, t)."""
        N = 2048
        eq = compute_Q(model, 0.5, N)
        c = Characteristic.from_equilibrium(eq)
        traj = evolve_linear(
            assemble_tilde(model, eq, N), uniform_pulse(eq, 256, 512, N), 16.0, output_times=[8.0]
        )

        edges = [left_mass_edge(traj.state(k), 0.1) for k in range(len(traj))]

        assert edges[0] == 282
        assert edges[0] > edges[1] > edges[2]
        for t, edge in zip(traj.times[1:], edges[1:]):
            predicted = c.A(edges[0], t)
            assert abs(edge - predicted) <= 0.25 * (edges[0] - predicted)

    def test_duhamel_bound(self, char):
        """Test the bound vanishes at t = 0 and grows afterwards."""
        assert duhamel_bound(char, 100, 0.0) == 0.0
        assert duhamel_bound(char, 100, 5.0) > 0.0


class TestSupersolutions:
    """Tests for the comparison functions W1 and W2."""

    def test_calibrated_D(self, model, eq):
        """Test D = 4C / (z_s - z), the maximum attained at i = 2."""
        expected_C = (0.5 * math.sqrt(2) + math.sqrt(3) * 8 / 9) / (2 * math.sqrt(2))

        assert calibrate_D(model, eq) == pytest.approx(4 * expected_C / 0.5, rel=1e-12)

    def test_profiles(self, char):
        """Test the flat and exponential branches."""
        w1 = Supersolution(Which.W1, 2.0, 10, char)
        w2 = Supersolution(Which.W2, 2.0, 10, char)

        W1 = supersolution_values(w1, 0.0, 20)
        W2 = supersolution_values(w2, 0.0, 20)

        assert W1[9:].tolist() == [1.0] * 11
        assert W1[7] == pytest.approx(math.exp(-1.0))
        assert W2[:9].tolist() == [1.0] * 9
        assert W2[11] == pytest.approx(math.exp(-1.0))

    def test_D_must_be_positive(self, char):
        """Test validation of the decay length."""
        with pytest.raises(ParameterError):
            Supersolution(Which.W1, 0.0, 10, char)

    @pytest.mark.parametrize("N1", [256, 512, 1024])
    def test_W1_with_calibrated_D(self, model, eq, N1):
        """Test that W1 is a supersolution for the calibrated D."""
        c = Characteristic.from_equilibrium(eq)
        D = calibrate_D(model, eq)
        s = Supersolution(Which.W1, D, N1, c)
        t_grid = np.linspace(0.0, c.extinction_time(N1) / 2, 33)

        report = supersolution_check(model, eq, s, t_grid, 4 * N1)

        assert report.passed
        assert report.negative_region is None

    def test_W2_with_calibrated_D(self, model, eq):
        """Test W2, including the row-1 source, for the calibrated D."""
        c = Characteristic.from_equilibrium(eq)
        D = calibrate_D(model, eq)
        s = Supersolution(Which.W2, D, 512, c)
        t_grid = np.linspace(0.0, 2 * c.extinction_time(512), 33)

        assert supersolution_check(model, eq, s, t_grid, 2048).passed

    def test_small_D_fails(self, model, eq):
        """Test that a quarter of the calibrated D is rejected behind the edge."""
        c = Characteristic.from_equilibrium(eq)
        D = calibrate_D(model, eq) / 4
        s = Supersolution(Which.W1, D, 256, c)

        report = supersolution_check(model, eq, s, [0.0, 1.0], 1024)

        assert not report.passed
        assert report.min_residual < 0
        assert report.argmin_index < 256
        lo, hi = report.negative_region
        assert lo <= report.argmin_index <= hi

    def test_N_star(self, model, eq):
        """Test that a valid supersolution holds down to the clamp."""
        c = Characteristic.from_equilibrium(eq)
        s = Supersolution(Which.W1, calibrate_D(model, eq), 128, c)

        assert estimate_N_star(model, eq, s, 512) < 128

    def test_empty_grid(self, model, eq):
        """Test rejection of an empty time grid."""
        c = Characteristic.from_equilibrium(eq)
        s = Supersolution(Which.W1, 5.0, 64, c)
        with pytest.raises(ParameterError):
            supersolution_check(model, eq, s, [], 256)


class TestComparison:
    """Tests for the minimum principle and the pulse comparison."""

    def test_minimum_principle(self, model, eq):
        """Test that interior extrema stay within the boundary extrema."""
        W0 = to_V(uniform_pulse(eq, 32, 64, 256))

        report = minimum_principle_check(model, eq, W0, 5.0, rtol=1e-10)

        assert report.passed

    def test_minimum_principle_needs_prefix_form(self, model, eq):
        """Test that v-form data is rejected."""
        with pytest.raises(ParameterError):
            minimum_principle_check(model, eq, uniform_pulse(eq, 32, 64, 256), 1.0)

    def test_pulse_stays_below_supersolutions(self, model, eq):
        """Test V <= W1 and 1 - V <= W2 along the comparison flow."""
        D = calibrate_D(model, eq)
        v0 = uniform_pulse(eq, 64, 128, 512)

        report = comparison_check(model, eq, v0, 64, 128, D, T=10.0, rtol=1e-10)

        assert report.passed


class TestExperimentData:
    """Tests for initial data and series helpers."""

    def test_uniform_pulse(self, eq):
        """Test unit mass on the open interval."""
        v = uniform_pulse(eq, 10, 20, 64).values

        assert v.sum() == pytest.approx(1.0)
        assert v[9] == 0.0 and v[10] > 0 and v[18] > 0 and v[19] == 0.0

    def test_uniform_pulse_invalid(self, eq):
        """Test empty intervals and truncation overflow."""
        with pytest.raises(ParameterError):
            uniform_pulse(eq, 10, 11, 64)
        with pytest.raises(ParameterError):
            uniform_pulse(eq, 10, 80, 64)

    def test_corollary_data(self, eq):
        """Test unit l1 norm and zero mass."""
        u = corollary_data(eq, 64, 256).values

        assert np.abs(u).sum() == pytest.approx(1.0)
        assert math.fsum(u) == 0.0
        assert u[15] > 0 and u[14] == 0 and u[47] < 0 and u[63] == 0

    def test_corollary_data_invalid(self, eq):
        """Test divisibility and truncation checks."""
        with pytest.raises(ParameterError):
            corollary_data(eq, 30, 256)
        with pytest.raises(ParameterError):
            corollary_data(eq, 64, 32)

    def test_first_crossing(self):
        """Test interpolated and censored crossings."""
        times = np.array([0.0, 1.0, 2.0])

        assert first_crossing(times, np.array([1.0, 0.6, 0.2]), 0.5) == pytest.approx(1.25)
        assert first_crossing(times, np.array([1.0, 0.9, 0.8]), 0.5) is None
        assert first_crossing(times, np.array([0.1, 0.9, 0.8]), 0.5) == 0.0

    def test_first_failure(self):
        """Test the sampled failure time."""
        times = np.array([0.0, 1.0, 2.0])

        assert first_failure(times, np.array([1.0, 0.9, 0.8]), 0.9) == 1.0
        assert first_failure(times, np.array([1.0, 0.95, 0.92]), 0.9) is None


class TestPulseExperiment:
    """Tests for the single-pulse transport experiment."""

    def test_small_pulse(self, model, eq):
        """Test the report of a short pulse run."""
        report = run_pulse_experiment(model, None, 32, 64, eq=eq, rtol=1e-10, n_samples=40)
        table = report.tables[0]

        assert report.command == "pulse"
        assert table.name == "pulse"
        assert len(table.rows) == 41
        assert table.column("duhamel_gap")[0] == 0.0
        assert report.flags["initial_window_mass"]
        assert report.flags["delta_hat_positive"]
        assert report.flags["comparison_W1"]
        assert report.flags["comparison_W2"]
        assert report.summary["N"] == 256
        assert report.summary["D"] == pytest.approx(calibrate_D(model, eq))
        assert set(report.summary["K_star_scan"]) == {"2D", "4D", "8D"}

    def test_explicit_K_star(self, model, eq):
        """Test that a given K* is used as is."""
        report = run_pulse_experiment(model, None, 32, 64, eq=eq, K_star=3.0, n_samples=10)

        assert report.summary["K_star"] == 3.0

    @pytest.mark.slow
    def test_window_sweep(self, model):
        """Test a single positive delta_hat across a sweep of pulse sizes."""
        eq = compute_Q(model, 0.5, 1024)
        deltas = []
        for N1 in (512, 1024, 2048):
            report = run_pulse_experiment(model, None, N1, 2 * N1, eq=eq)
            assert report.flags["initial_window_mass"]
            deltas.append(report.summary["delta_hat"])

        assert min(deltas) > 0

    def test_insufficient_truncation(self, model, eq):
        """Test that mass in the last quarter invalidates the run."""
        with pytest.raises(ExperimentInvalidError):
            run_pulse_experiment(model, None, 32, 64, eq=eq, N=80, n_samples=10)


class TestCutoffExperiment:
    """Tests for the two-pulse half-life scaling."""

    def test_small_sweep(self, model, eq):
        """Test a sweep over small N."""
        report = run_cutoff_experiment(model, None, [16, 32, 64], eq=eq, n_samples=200)

        assert report.N_values == [16, 32, 64]
        assert report.flags["initial_norm"]
        assert report.flags["zero_mass"]
        assert report.flags["no_censored"]
        assert report.flags["T_half_increasing"]
        assert report.fitted_exponent is not None and report.fitted_exponent > 0
        assert [t.name for t in report.tables] == ["cutoff_summary", "cutoff_norms"]
        assert len(report.tables[0].rows) == 3

    def test_threads_do_not_change_results(self, model, eq):
        """Test that the threaded sweep matches the serial one."""
        serial = run_cutoff_experiment(model, None, [16, 32], eq=eq, n_samples=100)
        threaded = run_cutoff_experiment(model, None, [16, 32], eq=eq, n_samples=100, threads=2)

        assert serial.T_half == threaded.T_half
        assert serial.tables[1].rows == threaded.tables[1].rows

    def test_empty_list(self, model, eq):
        """Test rejection of an empty N list."""
        with pytest.raises(ParameterError):
            run_cutoff_experiment(model, None, [], eq=eq)

    @pytest.mark.slow
    def test_half_life_exponent(self, model):
        """Test that T_half grows like N^(1 - alpha)."""
        eq = compute_Q(model, 0.5, 1024)
        report = run_cutoff_experiment(model, None, [256, 512, 1024, 2048], eq=eq, threads=4)

        assert report.flags["exponent_within_tol"]
        assert report.flags["lower_bound_delta_positive"]


class TestUpperDecay:
    """Tests for the exponentially weighted decay check."""

    def test_small_sizes(self, model, eq):
        """Test t_eps and the late-time rate on small N."""
        report = upper_decay_check(model, None, [16, 32], eq=eq, n_samples=200)

        assert report.flags["t_eps_found"]
        assert report.flags["initial_Yeta_bound"]
        assert report.flags["decay_rate_positive"]
        assert len(report.growth_ratios) == 1

    def test_eta_limit(self, model, eq):
        """Test that eta at or above log(z_s / z) is rejected."""
        with pytest.raises(ParameterError):
            upper_decay_check(model, None, 16, eta=0.7, eq=eq)
