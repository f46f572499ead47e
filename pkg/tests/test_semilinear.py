"""
Tests for the pseudospectral Duhamel solver and its checks.
"""
import math

import numpy as np
import pytest
from scipy import fft

from kgspec.errors import (
    AliasingError,
    GridMismatchError,
    PreconditionError,
    SmallnessViolatedError,
)
from kgspec.models import FitStatus
from kgspec.semilinear import (
    SpectralField,
    XNormLedger,
    _check_exponent,
    build_kernel_table,
    check_propadd,
    d_factor,
    d_two,
    data_norm,
    decay_fit,
    gagliardo_nirenberg_check,
    gaussian_data,
    gn_constants,
    linear_kernels,
    padded_power,
    solve_semilinear,
)


@pytest.fixture
def small_data():
    """Zero-mean Gaussian on a coarse two-dimensional box."""
    return gaussian_data(n=2, L=32.0, M=32, width=2.0, eps=1e-3)


class TestSpectralField:
    """Test suite for spectral fields and norms."""

    def test_parseval(self, small_data):
        """Spectral and grid L2 norms agree."""
        assert small_data.parseval_defect() < 1e-12

    def test_data_norm_scaled(self, small_data):
        """Gaussian data is scaled to the requested norm."""
        assert data_norm(small_data) == pytest.approx(1e-3, rel=1e-12)

    def test_zero_mean(self, small_data):
        """The k = 0 coefficient is removed."""
        assert abs(small_data.coeffs.flat[0]) < 1e-12 * np.max(np.abs(small_data.coeffs))

    def test_zero_amplitude(self):
        """eps = 0 gives the zero field."""
        field_ = gaussian_data(n=1, L=16.0, M=16, eps=0.0)
        assert field_.l2_norm() == 0.0

    def test_conjugate_symmetry(self, small_data):
        """Real data has conjugate-symmetric coefficients; generic complex arrays do not."""
        assert small_data.is_conjugate_symmetric()
        rng = np.random.default_rng(0)
        noise = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        assert not SpectralField(2, 8.0, 8, noise, noise).is_conjugate_symmetric()

    def test_shape_mismatch(self):
        """Coefficient arrays must match the grid."""
        with pytest.raises(GridMismatchError):
            SpectralField(2, 8.0, 8, np.zeros((8, 8)), np.zeros((4, 4)))

    def test_dimension_range(self):
        """1 <= n <= 4."""
        with pytest.raises(PreconditionError):
            SpectralField(5, 8.0, 2, np.zeros((2,) * 5), np.zeros((2,) * 5))

    def test_gagliardo_nirenberg_trivial_exponent(self, small_data):
        """n = 2, p = 2, k = 1 has theta = 0 and constant 1 by Parseval."""
        constants = gagliardo_nirenberg_check(small_data, 2.0, ks=(1,))
        assert constants[1] == pytest.approx(1.0, rel=1e-10)

    def test_gagliardo_nirenberg_zero_state(self):
        """u = 0 has no ratio."""
        assert gagliardo_nirenberg_check(SpectralField.zeros(2, 8.0, 8), 2.0) == {1: None, 2: None}


class TestWeights:
    """Test suite for the ledger and the loss factors."""

    def test_d_factor(self):
        """sqrt(1 + t) in one dimension, 1 otherwise."""
        assert d_factor(3.0, 1) == 2.0
        assert d_factor(3.0, 2) == 1.0

    def test_d_two_critical(self):
        """n = q/(2-q) gives (t - s)^((2-q)/(2q))."""
        assert d_two(5.0, 1.0, 1, 1.0) == pytest.approx(2.0)
        assert d_two(5.0, 1.0, 2, 1.0) == 1.0

    def test_ledger_running_sup(self):
        """The ledger keeps the running supremum."""
        ledger = XNormLedger(n=2)
        for t, v in [(0.0, 1.0), (1.0, 3.0), (2.0, 2.0)]:
            ledger.record(t, v)
        assert ledger.sup_so_far == [1.0, 3.0, 3.0]
        assert ledger.sup == 3.0
        assert ledger.value_at(2.0) == 2.0

    def test_empty_ledger(self):
        with pytest.raises(PreconditionError):
            XNormLedger(n=1).value_at(0.0)

    @pytest.mark.parametrize("n,p", [(2, 1.5), (3, 4.0), (1, 1.0), (5, 2.0)])
    def test_exponent_ranges(self, n, p):
        """Admissible (n, p) pairs only."""
        with pytest.raises(PreconditionError):
            _check_exponent(n, p)


class TestKernels:
    """Test suite for the linear propagators."""

    def test_coincident_times(self):
        """K(t, t) = (1, 0)."""
        assert linear_kernels(1.0, 2.0, 2.0, 3.0) == (1.0, 0.0)

    def test_zero_frequency(self):
        """|xi| = 0: cos(m(t-s)) and sin(m(t-s))/m."""
        K0, K1 = linear_kernels(2.0, 0.5, 2.0, 0.0, tol=1e-11)
        assert K0 == pytest.approx(math.cos(3.0), abs=1e-8)
        assert K1 == pytest.approx(math.sin(3.0) / 2.0, abs=1e-8)

    def test_preconditions(self):
        with pytest.raises(PreconditionError):
            linear_kernels(0.0, 0.0, 1.0, 1.0)
        with pytest.raises(PreconditionError):
            linear_kernels(1.0, 2.0, 1.0, 1.0)

    def test_table_wronskian(self):
        """y1 y2' - y2 y1' = 1 and the kernels reduce to (1, 0) on the diagonal."""
        table = build_kernel_table(1.0, np.linspace(0.0, 3.0, 31), np.array([0.0, 0.5, 2.0]), tol=1e-10)
        assert table.wronskian_defect() < 1e-7
        assert np.allclose(table.K0(10, 10), 1.0, atol=1e-7)
        assert np.allclose(table.K1(10, 10), 0.0, atol=1e-12)

    def test_table_matches_single_kernel(self):
        """The vectorized table agrees with the per-mode integrator."""
        table = build_kernel_table(1.0, np.linspace(0.0, 2.0, 21), np.array([0.7]), tol=1e-11)
        K0, K1 = linear_kernels(1.0, 0.5, 2.0, 0.7, tol=1e-11)
        assert table.K0(20, 5)[0] == pytest.approx(K0, abs=1e-7)
        assert table.K1(20, 5)[0] == pytest.approx(K1, abs=1e-7)

    def test_propagator_estimates(self):
        """Small pair grid with every pair counted."""
        report = check_propadd(1.0, [0.0, 1.0], [0.0, 1.0, 2.0], q=1.0, n=2, L=32.0, M=16)
        assert report["pairs"] == 5
        assert report["d_branch_active"] is False
        assert 0.0 < report["sup_energy_ratio"] < math.inf

    def test_propagator_d_branch(self):
        """n = 1, q = 1 activates the (t-s) loss."""
        report = check_propadd(1.0, [0.0], [0.0, 1.0, 4.0], q=1.0, n=1, L=64.0, M=64)
        assert report["d_branch_active"] is True
        assert report["sup_l2_ratio"] <= report["sup_l2_ratio_without_d"]

    def test_propagator_q_range(self):
        with pytest.raises(PreconditionError):
            check_propadd(1.0, [0.0], [1.0], q=2.0, n=2)


class TestPaddedPower:
    """Test suite for the dealiased nonlinearity."""

    def test_square_of_cosine(self):
        """cos^2 is resolved exactly on a padded grid."""
        L, M = 2.0 * math.pi, 16
        x = np.arange(M) * (L / M)
        u = np.cos(2.0 * x)
        F, dropped = padded_power(fft.fft(u), 2.0, 2.0)
        assert np.allclose(F, fft.fft(u ** 2), atol=1e-12)
        assert dropped < 1e-12

    def test_constant_field(self):
        """|c|^p has no spectral spill."""
        coeffs = fft.fftn(np.full((8, 8), 0.5))
        F, dropped = padded_power(coeffs, 3.0, 2.5)
        assert F[0, 0].real == pytest.approx(64 * 0.125)
        assert dropped == pytest.approx(0.0, abs=1e-12)


class TestSolveSemilinear:
    """Test suite for the Duhamel march."""

    def test_short_run(self, small_data):
        """Ledger, Picard consistency and the history all line up."""
        result = solve_semilinear(small_data, p=2.0, m=1.0, horizon=1.0, dt=0.05)
        assert len(result.times) == 21
        assert result.ledger.sup >= result.ledger.samples[0]
        assert result.picard is not None and result.picard < 1e-10
        assert result.max_alias < 1e-6
        assert set(result.decay_constants) == {"kinetic", "l2"}
        assert result.final.t == pytest.approx(1.0)

    def test_picard_sweep_matches_march(self, small_data):
        """The dense Duhamel sweep and the running sums share trapezoid weights, so the residual is below dt^2."""
        for dt in (0.1, 0.05):
            result = solve_semilinear(small_data, p=2.0, horizon=1.0, dt=dt)
            assert result.picard <= 1e-6 * dt ** 2 * result.data_norm

    def test_kinetic_part_second_order(self, small_data):
        """Halving dt cuts the u_t error by about four, including the endpoint half weight."""
        runs = {dt: solve_semilinear(small_data, p=2.0, horizon=1.0, dt=dt, keep_history=False).final
                for dt in (0.1, 0.05, 0.025)}
        reference = runs[0.025].coeffs_t
        coarse = np.linalg.norm(runs[0.1].coeffs_t - reference)
        fine = np.linalg.norm(runs[0.05].coeffs_t - reference)
        assert fine > 0.0
        assert coarse / fine > 4.0

    def test_duhamel_weights(self, small_data):
        """dt/2 at both ends of [0, t_j], dt inside, nothing on [0, 0]."""
        result = solve_semilinear(small_data, horizon=1.0, dt=0.25, linear_only=True)
        assert result.duhamel_weights(0).tolist() == [0.0]
        assert result.duhamel_weights(3) == pytest.approx([0.125, 0.25, 0.25, 0.125])


    def test_nonlinear_term_is_small(self, small_data):
        """eps = 1e-3 keeps the nonlinear correction at second order."""
        linear = solve_semilinear(small_data, horizon=1.0, linear_only=True)
        full = solve_semilinear(small_data, horizon=1.0)
        assert linear.picard is None
        gap = np.max(np.abs(full.l2 - linear.l2))
        assert gap < 1e-3 * float(np.max(linear.l2))

    def test_gn_constants(self, small_data):
        """Ratios are reported per k over the stored states."""
        result = solve_semilinear(small_data, horizon=0.5)
        constants = gn_constants(result, stride=5)
        assert constants[1] == pytest.approx(1.0, rel=1e-8)

    def test_smallness_violation(self, small_data):
        """The ledger must stay below a multiple of the data norm."""
        with pytest.raises(SmallnessViolatedError):
            solve_semilinear(small_data, horizon=0.5, smallness_multiple=1e-3)

    def test_aliasing_detected(self):
        """Under-resolved data spills the nonlinear spectrum."""
        data = gaussian_data(n=2, L=32.0, M=16, width=0.5, eps=1e-3)
        with pytest.raises(AliasingError):
            solve_semilinear(data, horizon=0.5)

    def test_asymmetric_data_rejected(self):
        rng = np.random.default_rng(1)
        noise = rng.normal(size=(8, 8)) + 1j * rng.normal(size=(8, 8))
        with pytest.raises(PreconditionError):
            solve_semilinear(SpectralField(2, 8.0, 8, noise, noise), horizon=0.5)

    def test_invalid_parameters(self, small_data):
        with pytest.raises(PreconditionError):
            solve_semilinear(small_data, m=0.0)
        with pytest.raises(PreconditionError):
            solve_semilinear(small_data, p=1.5)

    @pytest.mark.slow
    def test_decay_rate(self):
        """||u(t)|| ~ e^{-t/2} for n = 2."""
        data = gaussian_data(n=2, L=64.0, M=64, width=2.0, eps=1e-3)
        result = solve_semilinear(data, p=2.0, horizon=8.0, keep_history=False)
        fit = decay_fit(result)
        assert fit.status == FitStatus.PASS
        assert fit.exponent == pytest.approx(-0.5, abs=0.05)
