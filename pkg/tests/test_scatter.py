"""
Tests for free-wave fundamental solutions, the series for Q and the wave operator.
"""
import math

import numpy as np
import pytest

from kgspec.coeffs import constant_mass, make_profile, polynomial_speed
from kgspec.errors import (
    ConvergenceError,
    PreconditionError,
    SeriesTruncationError,
    ZoneViolationError,
)
from kgspec.fitting import fit_rate
from kgspec.modes import gaussian_mode_data
from kgspec.scatter import (
    WaveOperatorSample,
    additional_constant,
    asymptotic_equivalence,
    band_residual,
    cocycle_defect,
    free_profile,
    free_wave_fundamental,
    h_normalization,
    liouville_ratio,
    peano_baker,
    tail_bound,
    wave_operator,
)


SIGMA_X = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)


@pytest.fixture
def linear_speed():
    """a = 1+t, m = 1."""
    speed = polynomial_speed(1.0)
    return make_profile(speed, constant_mass(speed, 1.0), label="linear")


class TestPeanoBaker:
    """Test suite for the truncated series of D_t Q = P Q."""

    def test_constant_scalar(self):
        """P = 0.1 I: Q = exp(0.1 i (t - s)) I."""
        result = peano_baker(lambda t: 0.1 * np.eye(2), 0.0, 1.0, K_terms=8)
        expected = np.exp(0.1j) * np.eye(2)
        assert np.max(np.abs(result.final - expected)) <= 1e-10
        assert result.truncation_bound >= np.max(np.abs(result.final - expected))

    def test_linear_scalar(self):
        """P = 0.1 t I: Q = exp(0.05 i (t^2 - s^2)) I."""
        result = peano_baker(lambda t: 0.1 * t * np.eye(2), 1.0, 2.0, K_terms=8)
        expected = np.exp(0.05j * 3.0) * np.eye(2)
        assert np.max(np.abs(result.final - expected)) <= 1e-10

    def test_constant_matrix(self):
        """P = 0.1 sigma_x: Q = cos(0.1 t) I + i sin(0.1 t) sigma_x."""
        result = peano_baker(lambda t: 0.1 * SIGMA_X, 0.0, 2.0, K_terms=10)
        expected = math.cos(0.2) * np.eye(2) + 1j * math.sin(0.2) * SIGMA_X
        assert np.max(np.abs(result.final - expected)) <= 1e-10

    def test_identity_at_start(self):
        """The first node is s and carries Q = I."""
        result = peano_baker(lambda t: 0.1 * SIGMA_X, 0.0, 1.0, K_terms=4)
        assert result.times[0] == pytest.approx(0.0, abs=1e-15)
        assert np.allclose(result.matrices[0], np.eye(2), atol=1e-14)

    def test_bound_shrinks_with_terms(self):
        """L^(K+1)/(K+1)! e^L decreases in K."""
        bounds = [peano_baker(lambda t: 0.5 * np.eye(2), 0.0, 1.0, K_terms=k).truncation_bound
                  for k in (2, 4, 8)]
        assert bounds == sorted(bounds, reverse=True)

    def test_truncation_error_raised(self):
        """A bound above tol is an error."""
        with pytest.raises(SeriesTruncationError):
            peano_baker(lambda t: 5.0 * np.eye(2), 0.0, 1.0, K_terms=2, tol=1e-6)

    def test_preconditions(self):
        """K >= 1 and s < t."""
        with pytest.raises(PreconditionError):
            peano_baker(lambda t: np.eye(2), 0.0, 1.0, K_terms=0)
        with pytest.raises(PreconditionError):
            peano_baker(lambda t: np.eye(2), 1.0, 1.0, K_terms=3)


class TestFreeWave:
    """Test suite for E_a(t, s, xi)."""

    def test_liouville(self, linear_speed):
        """|det E_a(t, s)| = a(t)/a(s)."""
        E = free_wave_fundamental(linear_speed, 0.0, np.linspace(0.0, 5.0, 11), 20.0, tol=1e-11)
        assert np.allclose(E.matrices[0], np.eye(2))
        assert np.max(np.abs(liouville_ratio(E, linear_speed) - 1.0)) < 1e-7

    def test_cocycle(self, linear_speed):
        """E_a(t, s) E_a(s, r) = E_a(t, r)."""
        assert cocycle_defect(linear_speed, 20.0, 0.0, 1.5, 4.0, tol=1e-11) < 1e-7

    def test_zone_required(self, linear_speed):
        """A(s)|xi| < N is refused."""
        with pytest.raises(ZoneViolationError):
            free_wave_fundamental(linear_speed, 0.0, 1.0, 1.0)

    def test_constant_speed_needs_permission(self, klein_gordon):
        """a' = 0 is accepted only with allow_constant_speed."""
        with pytest.raises(PreconditionError):
            free_wave_fundamental(klein_gordon, 0.0, 1.0, 20.0)
        E = free_wave_fundamental(klein_gordon, 0.0, 1.0, 20.0, allow_constant_speed=True)
        assert E.final.shape == (2, 2)

    def test_time_before_start(self, linear_speed):
        """t < s is refused."""
        with pytest.raises(PreconditionError):
            free_wave_fundamental(linear_speed, 2.0, 1.0, 20.0)

    def test_free_profile_drops_mass(self, linear_speed):
        """Same speed, zero mass."""
        free = free_profile(linear_speed)
        assert free.a(3.0) == linear_speed.a(3.0)
        assert free.m(3.0) == 0.0

    def test_h_normalization_tends_to_one(self, linear_speed):
        """h/(|xi| a) -> 1 as eta -> 0."""
        values = h_normalization(linear_speed, 2.0, [0.0, 10.0, 1000.0], N=10.0)
        assert values[-1] == pytest.approx(1.0, abs=1e-4)
        assert values[0] > values[-1]


class TestScatteringConstants:
    """Test suite for the tail bound and the additional constant."""

    def test_tail_bound_power_decay(self, scattering_profile):
        """int_t^inf (1+tau)^-3 = (1+t)^-2 / 2."""
        assert tail_bound(scattering_profile, 10.0, 1e4) == pytest.approx(0.5 / 121.0, rel=1e-4)

    def test_tail_bound_past_horizon(self, scattering_profile):
        """Nothing is left beyond T_max."""
        assert tail_bound(scattering_profile, 2e4, 1e4) == 0.0

    def test_additional_constant_unit_speed(self, klein_gordon):
        """a = 1: sqrt(a) int sqrt(a)/A = t/(1+t)."""
        value, worst = additional_constant(klein_gordon, 1e4)
        assert value == pytest.approx(1e4 / (1.0 + 1e4), rel=1e-8)
        assert worst == pytest.approx(1e4)


class TestWaveOperator:
    """Test suite for Q(inf, theta) and W_+."""

    def test_free_wave_is_identity(self, free_wave):
        """Without mass the wave operator is the identity."""
        sample = wave_operator(free_wave, 20.0, 1.0, allow_constant_speed=True, require_class=False,
                               horizon=100.0, ode_tol=1e-10)
        assert sample.theta == 0.0
        assert np.allclose(sample.W_plus, np.eye(2), atol=1e-9)
        assert sample.last_increment < 1e-9

    @pytest.mark.slow
    def test_scattering_profile_converges(self, scattering_profile):
        """m = (1+t)^-2: Q(t, theta) settles and the residual follows the tail bound."""
        sample = wave_operator(scattering_profile, 20.0, 1.0, tol=1e-5, allow_constant_speed=True,
                               horizon=1e3, ode_tol=1e-10)
        assert sample.last_increment < 1e-5
        assert 0.0 < sample.bound_ratio < 10.0
        assert np.linalg.norm(sample.Q_limit - np.eye(2)) < 0.1

    def test_cutoff_enforced(self, free_wave):
        """|xi| below the cutoff has no wave operator."""
        with pytest.raises(PreconditionError):
            wave_operator(free_wave, 0.5, 1.0, require_class=False, allow_constant_speed=True)

    def test_requires_scattering_class(self, log_mass_profile):
        """A non-effective pair has no wave operator."""
        with pytest.raises(PreconditionError):
            wave_operator(log_mass_profile, 20.0, 1.0, allow_constant_speed=True)

    def test_unconverged_ladder(self, scattering_profile):
        """A too tight tolerance on a short ladder fails to converge."""
        with pytest.raises(ConvergenceError):
            wave_operator(scattering_profile, 20.0, 1.0, tol=1e-14, ladder=[1.0, 2.0, 3.0],
                          allow_constant_speed=True, require_class=False)


class TestBandResidual:
    """Test suite for the sup over frequencies in the hyperbolic zone."""

    def _sample(self, theta, ladder, residual):
        eye = np.eye(2, dtype=complex)
        ladder = np.asarray(ladder, dtype=float)
        return WaveOperatorSample(
            xi_norm=1.0, theta=theta, Q_limit=eye, W_plus=eye, ladder=ladder,
            residual_curve=np.asarray(residual, dtype=float), bound_curve=np.ones(len(ladder)),
            last_increment=0.0, bound_ratio=0.0,
        )

    def test_sup_over_active_samples(self):
        """Only samples with theta <= t contribute."""
        early = self._sample(0.0, [0.0, 1.0, 2.0, 4.0], [0.5, 0.3, 0.1, 0.0])
        late = self._sample(1.0, [1.0, 2.0, 4.0], [0.9, 0.2, 0.0])
        out = band_residual([early, late], [0.0, 1.0, 2.0])
        assert out.tolist() == [0.5, 0.9, 0.2]

    def test_no_active_sample(self):
        """Times past every ladder give NaN."""
        sample = self._sample(0.0, [0.0, 1.0], [0.1, 0.0])
        assert math.isnan(band_residual([sample], [5.0])[0])


class TestAsymptoticEquivalence:
    """Test suite for the discrepancy curve against the free wave."""

    def test_free_wave_has_no_discrepancy(self, free_wave):
        """m = 0: u is its own free wave."""
        curve = asymptotic_equivalence(free_wave, gaussian_mode_data, [20.0], [0.0, 5.0, 10.0],
                                       allow_constant_speed=True, require_class=False, ode_tol=1e-10)
        assert curve.discrepancy.shape == (3,)
        assert np.max(curve.discrepancy) < 1e-6

    def test_unknown_symbol(self, free_wave):
        with pytest.raises(PreconditionError):
            asymptotic_equivalence(free_wave, gaussian_mode_data, [20.0], [0.0, 1.0], symbol="other",
                                   allow_constant_speed=True, require_class=False)

    @pytest.mark.slow
    def test_discrepancy_decays_with_tail_bound(self, scattering_profile):
        """m = (1+t)^-2: the discrepancy falls at least like the tail of (A/a) m^2, i.e. (1+t)^-2."""
        ladder = np.geomspace(1.0, 101.0, 24) - 1.0
        curve = asymptotic_equivalence(scattering_profile, gaussian_mode_data, [2.0], ladder, epsilon_cutoff=1.0,
                                       tol=1e-5, allow_constant_speed=True, ode_tol=1e-11)
        fit = fit_rate(ladder, curve.discrepancy, gate=1.0)
        assert fit.exponent is not None
        assert fit.exponent <= -2.0 + 0.2
        assert curve.discrepancy[-1] < curve.discrepancy[0]
