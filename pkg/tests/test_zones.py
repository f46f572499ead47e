"""
Tests for zone geometry, symbols and the refined diagonalizer.
"""
import math

import numpy as np
import pytest

from kgspec.coeffs import constant_mass, make_profile, polynomial_speed
from kgspec.errors import DiagonalizerError, PreconditionError, ZoneViolationError
from kgspec.models import ZoneGeometry, ZoneVariant
from kgspec.zones import (
    diagonalizer_matrices,
    is_pd_compact,
    phase,
    phase_matrix,
    remainder_R2,
    separating_time,
    symbol_values,
    zone_of,
)


WAVEFRONT = ZoneGeometry(N=10.0, variant=ZoneVariant.WAVEFRONT)
EFFECTIVE = ZoneGeometry(N=10.0, variant=ZoneVariant.EFFECTIVE)


class TestSeparatingTime:
    """Test suite for theta_|xi|."""

    def test_wavefront_solves_primitive(self, klein_gordon):
        """A(t) = 1 + t: theta = N/|xi| - 1."""
        assert separating_time(WAVEFRONT, klein_gordon, 2.0) == pytest.approx(4.0, abs=1e-8)

    def test_wavefront_large_frequency(self, klein_gordon):
        """|xi| >= N is hyperbolic from the start."""
        assert separating_time(WAVEFRONT, klein_gordon, 10.0) == 0.0
        assert separating_time(WAVEFRONT, klein_gordon, 50.0) == 0.0

    def test_wavefront_zero_frequency(self, klein_gordon):
        """xi = 0 never reaches the hyperbolic zone."""
        assert separating_time(WAVEFRONT, klein_gordon, 0.0) == math.inf

    def test_wavefront_exponential_speed(self, exponential_free):
        """A(t) = e^t: theta = ln(N/|xi|)."""
        assert separating_time(WAVEFRONT, exponential_free, 0.5) == pytest.approx(math.log(20.0), abs=1e-8)

    def test_effective_zero_frequency_is_reached(self, klein_gordon):
        """a = m = 1: mu = 1 + t, so xi = 0 enters at t = N - 1."""
        assert separating_time(EFFECTIVE, klein_gordon, 0.0, T_max=1e3) == pytest.approx(9.0, abs=1e-6)

    def test_effective_not_reached_before_horizon(self, klein_gordon):
        """A root beyond T_max is reported as infinite."""
        assert separating_time(EFFECTIVE, klein_gordon, 0.0, T_max=5.0) == math.inf

    def test_negative_frequency_rejected(self, klein_gordon):
        """|xi| is a norm."""
        with pytest.raises(PreconditionError):
            separating_time(WAVEFRONT, klein_gordon, -1.0)

    def test_monotone_in_frequency(self, klein_gordon):
        """Higher frequencies separate earlier."""
        thetas = [separating_time(WAVEFRONT, klein_gordon, xi) for xi in (0.5, 1.0, 2.0, 5.0)]
        assert thetas == sorted(thetas, reverse=True)


class TestZoneOf:
    """Test suite for point classification."""

    def test_wavefront_split(self, klein_gordon):
        """A(t)|xi| against N."""
        assert zone_of(WAVEFRONT, klein_gordon, 3.0, 2.0) == "pd"
        assert zone_of(WAVEFRONT, klein_gordon, 5.0, 2.0) == "hyp"

    def test_consistent_with_separating_time(self, klein_gordon):
        """Points after theta are hyperbolic, points before are not."""
        theta = separating_time(WAVEFRONT, klein_gordon, 2.5)
        assert zone_of(WAVEFRONT, klein_gordon, theta + 1e-6, 2.5) == "hyp"
        assert zone_of(WAVEFRONT, klein_gordon, theta - 1e-3, 2.5) == "pd"

    def test_effective_zone(self, klein_gordon):
        """<xi>/eta = (1+t) sqrt(xi^2 + 1) at a = m = 1."""
        assert zone_of(EFFECTIVE, klein_gordon, 9.5, 0.0) == "hyp"
        assert zone_of(EFFECTIVE, klein_gordon, 8.0, 0.0) == "pd"

    def test_pd_zone_compact(self, klein_gordon):
        """Every low frequency separates before T_max."""
        compact, worst = is_pd_compact(EFFECTIVE, klein_gordon, 1e3)
        assert compact
        assert worst == pytest.approx(9.0, abs=1e-6)


class TestSymbols:
    """Test suite for <xi>, its derivative and h."""

    def test_symbol_values(self, klein_gordon):
        """a = m = 1, |xi| = 3, N = 4 at t = 0."""
        values = symbol_values(klein_gordon, 0.0, 3.0, 4.0)
        assert values.xi_bracket == pytest.approx(math.sqrt(10.0))
        assert values.d_xi_bracket == pytest.approx(0.0, abs=1e-8)
        assert values.h == pytest.approx(5.0)

    def test_derivative_of_bracket(self):
        """a = 1+t, m = 1: d<xi> = xi^2 (1+t)/<xi>."""
        speed = polynomial_speed(1.0)
        profile = make_profile(speed, constant_mass(speed, 1.0))
        values = symbol_values(profile, 1.0, 2.0, 10.0)
        assert values.xi_bracket == pytest.approx(math.sqrt(17.0))
        assert values.d_xi_bracket == pytest.approx(8.0 / math.sqrt(17.0), rel=1e-6)

    def test_phase(self, klein_gordon):
        """Constant <xi> integrates to <xi>(t - s)."""
        assert phase(klein_gordon, 1.0, 3.0, 1.0) == pytest.approx(2.0 * math.sqrt(2.0), rel=1e-10)
        assert phase(klein_gordon, 2.0, 2.0, 1.0) == 0.0
        with pytest.raises(PreconditionError):
            phase(klein_gordon, 3.0, 1.0, 1.0)

    def test_phase_matrix_unitary(self, klein_gordon):
        """diag(e^-i Phi, e^i Phi) is unitary."""
        P = phase_matrix(klein_gordon, 0.0, 2.0, 3.0)
        assert np.allclose(P @ P.conj().T, np.eye(2))


class TestDiagonalizer:
    """Test suite for K = I + K1."""

    @pytest.fixture
    def linear_speed(self):
        speed = polynomial_speed(1.0)
        return make_profile(speed, constant_mass(speed, 1.0))

    def test_inverse(self, linear_speed):
        """K K^-1 = I."""
        K, K_inv, scale = diagonalizer_matrices(linear_speed, 0.0, 1.0, 10.0)
        assert np.allclose(K @ K_inv, np.eye(2), atol=1e-14)
        assert scale == pytest.approx(linear_speed.eta(0.0) ** 2 / math.sqrt(2.0))

    def test_constant_coefficients_trivial(self, klein_gordon):
        """d<xi> = 0 gives K = I and no remainder."""
        K, _, _ = diagonalizer_matrices(klein_gordon, 5.0, 2.0, 10.0)
        assert np.allclose(K, np.eye(2))
        assert np.allclose(remainder_R2(klein_gordon, 5.0, 2.0), 0.0, atol=1e-8)

    def test_degenerate_determinant(self, linear_speed):
        """det K below the floor points at a too small N."""
        with pytest.raises(DiagonalizerError):
            diagonalizer_matrices(linear_speed, 0.0, 1.0, 10.0, det_floor=1.0)

    def test_zone_check(self, klein_gordon):
        """Pseudo-differential points are refused when checked."""
        with pytest.raises(ZoneViolationError):
            diagonalizer_matrices(klein_gordon, 0.0, 0.1, 10.0, check_zone=True)

    def test_remainder_decays_with_frequency(self, linear_speed):
        """The remainder shrinks as |xi| grows in the hyperbolic zone."""
        low = np.abs(remainder_R2(linear_speed, 5.0, 5.0)).max()
        high = np.abs(remainder_R2(linear_speed, 5.0, 50.0)).max()
        assert high < low
