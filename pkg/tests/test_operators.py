"""Tests for operator assembly, coordinates and norms."""

import math

import numpy as np
import pytest
from scipy.linalg import expm

from bd_cutoff.coefficients import make_constant, make_penrose
from bd_cutoff.equilibrium import compute_Q
from bd_cutoff.errors import CoordinateError, ParameterError, SaturationError, TruncationError
from bd_cutoff.models import NormSpec
from bd_cutoff.operators import (
    Coords,
    OperatorKind,
    StateVector,
    apply,
    assemble_full,
    assemble_integrated,
    assemble_tilde,
    difference_operator,
    eta_threshold,
    from_V,
    integrated_apply,
    mass_functional,
    matvec,
    norm,
    project_zero_mass,
    to_dense,
    to_h,
    to_v,
    to_V,
    weak_form_apply,
    zero_mode,
)


def penrose_eq(N: int):
    """Helper: Penrose(1/2, 0, 1, 1) equilibrium at z = 1/2."""
    return compute_Q(make_penrose(0.5, 0.0, 1.0, 1.0), 0.5, N)


def dense_full(eq, N: int) -> np.ndarray:
    """Helper: the full operator built entry by entry from its row formulas (1-based)."""
    a, b = eq.model.rates(N + 1)
    Q, z = eq.Q, eq.z
    A = lambda i: a[i - 1]  # noqa: E731
    B = lambda i: b[i - 1]  # noqa: E731
    M = np.zeros((N, N))
    for i in range(2, N + 1):
        inner = 1.0 if i < N else 0.0
        M[i - 1, 0] += i * (A(i - 1) * Q[i - 2] - inner * A(i) * Q[i - 1])
        M[i - 1, i - 1] += -inner * A(i) * z - B(i)
        M[i - 1, i - 2] += A(i - 1) * z * i / (i - 1)
        if i < N:
            M[i - 1, i] += B(i + 1) * i / (i + 1)
    M[0, 0] += -2.0 * A(1) * z
    M[0, 1] += B(2) / 2.0
    for j in range(1, N):
        M[0, j] += B(j + 1) / (j + 1)
        M[0, j - 1] += -A(j) * z / j
        M[0, 0] += -A(j) * Q[j - 1]
    return M


def dense_tilde(eq, N: int) -> np.ndarray:
    """Helper: the comparison operator built entry by entry."""
    a, b = eq.model.rates(N + 1)
    z = eq.z
    M = np.zeros((N, N))
    for i in range(1, N + 1):
        inner = 1.0 if i < N else 0.0
        M[i - 1, i - 1] = -inner * a[i - 1] * z - b[i - 1] * (i - 1) / i
        if i > 1:
            M[i - 1, i - 2] = a[i - 2] * z
        if i < N:
            M[i - 1, i] = b[i] * i / (i + 1)
    return M


class TestAssembly:
    """Tests for the structured operators against dense oracles."""

    @pytest.mark.parametrize("N", [64, 128])
    def test_full_matches_dense_oracle(self, N):
        """Test the O(N) product of the full operator on 100 random vectors."""
        eq = penrose_eq(N)
        op = assemble_full(eq.model, eq, N)
        M = dense_full(eq, N)
        rng = np.random.default_rng(0)

        for _ in range(100):
            v = rng.standard_normal(N)
            expected = M @ v
            err = np.linalg.norm(matvec(op, v) - expected) / np.linalg.norm(expected)
            assert err <= 1e-12

    @pytest.mark.parametrize("N", [64, 128])
    def test_tilde_matches_dense_oracle(self, N):
        """Test the comparison operator on 100 random vectors."""
        eq = penrose_eq(N)
        op = assemble_tilde(eq.model, eq, N)
        M = dense_tilde(eq, N)
        rng = np.random.default_rng(1)

        for _ in range(100):
            v = rng.standard_normal(N)
            expected = M @ v
            err = np.linalg.norm(matvec(op, v) - expected) / np.linalg.norm(expected)
            assert err <= 1e-12

    def test_to_dense(self):
        """Test the dense expansion of the structured storage."""
        eq = penrose_eq(32)
        np.testing.assert_allclose(
            to_dense(assemble_full(eq.model, eq, 32)), dense_full(eq, 32), rtol=1e-13, atol=1e-15
        )

    def test_mass_conservation(self):
        """Test that the columns of the full operator sum to zero."""
        eq = penrose_eq(256)
        op = assemble_full(eq.model, eq, 256)
        v = np.random.default_rng(2).standard_normal(256)

        total = math.fsum(matvec(op, v))

        assert abs(total) <= 1e-12 * op.rate_scale * np.sum(np.abs(v))

    def test_exact_kernel(self):
        """Test that i^2 Q_i lies in the kernel of the truncated operator."""
        N = 64
        eq = penrose_eq(N)
        op = assemble_full(eq.model, eq, N)
        i = np.arange(1, N + 1, dtype=float)
        xi = i * i * eq.Q[:N]

        residual = np.sum(np.abs(matvec(op, xi))) / np.sum(np.abs(xi))

        assert residual <= 1e-13

    def test_weak_form_agrees(self):
        """Test the flux form of the operator against the assembled one."""
        N = 32
        eq = penrose_eq(N)
        h = StateVector(Coords.H, np.random.default_rng(3).standard_normal(N), eq)
        op = assemble_full(eq.model, eq, N)

        via_flux = to_v(weak_form_apply(eq, h)).values
        direct = matvec(op, to_v(h).values)

        np.testing.assert_allclose(via_flux, direct, rtol=1e-10, atol=1e-14)

    def test_integrated_prefix_identity(self):
        """Test that cumulative sums of the comparison flow obey the integrated operator."""
        N = 64
        eq = penrose_eq(N)
        v = np.random.default_rng(4).standard_normal(N)
        tilde = assemble_tilde(eq.model, eq, N)
        V = StateVector(Coords.PREFIX, np.cumsum(v), eq)

        lhs = np.cumsum(matvec(tilde, v))
        rhs = integrated_apply(eq.model, eq, V).values

        np.testing.assert_allclose(lhs[:-1], rhs[:-1], rtol=1e-10, atol=1e-12)

    def test_difference_operator(self):
        """Test that the difference operator is full minus tilde."""
        N = 64
        eq = penrose_eq(N)
        full = assemble_full(eq.model, eq, N)
        tilde = assemble_tilde(eq.model, eq, N)
        diff = difference_operator(full, tilde)
        v = np.random.default_rng(5).standard_normal(N)

        assert diff.kind == OperatorKind.DIFFERENCE
        np.testing.assert_allclose(
            matvec(diff, v), matvec(full, v) - matvec(tilde, v), rtol=1e-12, atol=1e-12
        )
        with pytest.raises(CoordinateError):
            difference_operator(tilde, full)

    def test_complex_product(self):
        """Test that complex input is handled by real and imaginary parts."""
        eq = penrose_eq(32)
        op = assemble_full(eq.model, eq, 32)
        rng = np.random.default_rng(6)
        v = rng.standard_normal(32) + 1j * rng.standard_normal(32)

        np.testing.assert_allclose(matvec(op, v), dense_full(eq, 32) @ v, rtol=1e-12, atol=1e-13)

    def test_apply_checks_coordinates(self):
        """Test coordinate and length checks in apply."""
        eq = penrose_eq(32)
        op = assemble_full(eq.model, eq, 32)
        integrated = assemble_integrated(eq.model, eq, 32)

        with pytest.raises(CoordinateError):
            apply(op, StateVector(Coords.H, np.ones(32), eq))
        with pytest.raises(CoordinateError):
            apply(op, StateVector(Coords.V, np.ones(16), eq))
        with pytest.raises(CoordinateError):
            apply(integrated, StateVector(Coords.V, np.ones(32), eq))

    def test_minimum_size(self):
        """Test the smallest admissible truncation."""
        eq = penrose_eq(32)
        with pytest.raises(TruncationError):
            assemble_full(eq.model, eq, 2)


class TestCoordinates:
    """Tests for coordinate conversions and the mass functional."""

    def test_v_form_weights(self):
        """Test v_i = i Q_i h_i."""
        eq = compute_Q(make_constant(), 0.5, 16)
        h = StateVector(Coords.H, np.ones(16), eq)
        i = np.arange(1, 17)

        np.testing.assert_allclose(to_v(h).values, i * 0.5**i, rtol=1e-14)

    def test_prefix_sums(self):
        """Test V-form as running sums with V_0 = 0."""
        eq = penrose_eq(8)
        v = StateVector(Coords.V, np.arange(1.0, 9.0), eq)

        V = to_V(v)

        assert V.coords == Coords.PREFIX
        assert V.values[-1] == 36.0
        np.testing.assert_array_equal(from_V(V).values, v.values)

    def test_h_form_overflow(self):
        """Test that h-form fails past the Q underflow point."""
        eq = compute_Q(make_constant(), 0.5, 2048)
        v = np.zeros(2048)
        v[1999] = 1.0

        with pytest.raises(SaturationError):
            to_h(StateVector(Coords.V, v, eq))

    def test_zero_mode_has_unit_mass(self):
        """Test the normalization of the zero mode."""
        eq = penrose_eq(128)

        assert mass_functional(eq, zero_mode(eq, 128)) == pytest.approx(1.0, rel=1e-14)

    def test_project_zero_mass(self):
        """Test that projection removes the mass and keeps coordinates."""
        eq = penrose_eq(64)
        h = StateVector(Coords.H, np.random.default_rng(7).standard_normal(64), eq)

        projected = project_zero_mass(eq, h)

        assert projected.coords == Coords.H
        assert abs(mass_functional(eq, projected)) <= 1e-14

    def test_state_validation(self):
        """Test that states must be nonempty 1-d arrays."""
        eq = penrose_eq(8)
        with pytest.raises(CoordinateError):
            StateVector(Coords.V, np.zeros((2, 2)), eq)
        with pytest.raises(CoordinateError):
            StateVector(Coords.V, np.zeros(3), eq) + StateVector(Coords.V, np.zeros(4), eq)


class TestNorms:
    """Tests for the norm families."""

    def test_polynomial_norms(self):
        """Test X_1 and X_2 from mass-weighted values."""
        eq = penrose_eq(4)
        v = StateVector(Coords.V, np.array([1.0, -2.0, 0.0, 3.0]), eq)

        assert norm(NormSpec.x(1), eq, v) == 6.0
        assert norm(NormSpec.x(2), eq, v) == 1.0 + 4.0 + 12.0

    def test_l2q_norm(self):
        """Test the weighted l2 norm against sqrt(sum Q_i h_i^2)."""
        eq = compute_Q(make_constant(), 0.5, 16)
        h_values = np.linspace(-1.0, 2.0, 16)
        h = StateVector(Coords.H, h_values, eq)

        expected = math.sqrt(np.sum(eq.Q[:16] * h_values**2))

        assert norm(NormSpec.l2q(), eq, h) == pytest.approx(expected, rel=1e-12)

    def test_exponential_norm(self):
        """Test Y_eta at eta = 0 and its admissibility limit."""
        eq = compute_Q(make_constant(), 0.5, 16)
        h_values = np.ones(16)
        h = StateVector(Coords.H, h_values, eq)

        assert eta_threshold(eq) == pytest.approx(math.log(2.0))
        assert norm(NormSpec.y(0.0), eq, h) == pytest.approx(np.sum(eq.Q[:16]), rel=1e-12)
        with pytest.raises(ParameterError):
            norm(NormSpec.y(0.7), eq, h)

    def test_exponential_norm_overflow(self):
        """Test that an overflowing weighted sum raises."""
        eq = compute_Q(make_constant(), 0.5, 2048)
        v = np.zeros(2048)
        v[1999] = 1.0

        with pytest.raises(SaturationError):
            norm(NormSpec.y(0.69), eq, StateVector(Coords.V, v, eq))

    def test_zero_state(self):
        """Test norms of the zero perturbation."""
        eq = penrose_eq(8)
        zero = StateVector(Coords.V, np.zeros(8), eq)

        assert norm(NormSpec.l2q(), eq, zero) == 0.0
        assert norm(NormSpec.y(0.1), eq, zero) == 0.0


def l2q_weights(eq, N: int) -> np.ndarray:
    """Helper: ||h||_{l2(Q)} = ||w * v||_2 with w_i = 1 / (i sqrt(Q_i))."""
    i = np.arange(1, N + 1, dtype=float)
    return 1.0 / (i * np.sqrt(eq.Q[:N]))


class TestSemigroupProperties:
    """Tests for positivity and boundedness across truncations."""

    @pytest.mark.parametrize("N", [64, 128, 256])
    def test_tilde_preserves_positivity(self, N):
        """Test that exp(t tilde-L) maps nonnegative data to nonnegative data."""
        eq = penrose_eq(N)
        M = to_dense(assemble_tilde(eq.model, eq, N))
        off_diagonal = M - np.diag(np.diag(M))

        assert off_diagonal.min() >= 0.0
        for t in (0.5, 2.0):
            assert expm(t * M).min() >= -1e-12

    def test_difference_bounded_in_l2q(self):
        """Test that the l2(Q) norm of full-L minus tilde-L does not grow with N."""
        norms = []
        for N in (64, 128, 256, 512):
            eq = penrose_eq(N)
            diff = difference_operator(
                assemble_full(eq.model, eq, N), assemble_tilde(eq.model, eq, N)
            )
            w = l2q_weights(eq, N)
            norms.append(np.linalg.norm(w[:, None] * to_dense(diff) / w[None, :], 2))

        assert all(np.isfinite(norms))
        assert max(norms) <= 1.1 * min(norms)

    @pytest.mark.parametrize("N", [64, 128, 256])
    def test_full_flow_bounded_in_x1(self, N):
        """Test sup_t ||v(t)||_1 <= 10 ||v0||_1 for the full flow."""
        eq = penrose_eq(N)
        step = expm(0.5 * to_dense(assemble_full(eq.model, eq, N)))
        rng = np.random.default_rng(N)
        pulse = np.zeros(N)
        pulse[N // 8 : N // 4] = 1.0
        data = [rng.standard_normal(N), pulse, np.abs(rng.standard_normal(N))]

        for v0 in data:
            v, worst = v0.copy(), 1.0
            for _ in range(20):
                v = step @ v
                worst = max(worst, np.sum(np.abs(v)) / np.sum(np.abs(v0)))

            assert worst <= 10.0
