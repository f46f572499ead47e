"""
Tests for final-decade rate fits.
"""
import math

import numpy as np
import pytest

from kgspec.fitting import final_decade, fit_rate
from kgspec.models import FitStatus, RateModel


TIMES = np.linspace(0.0, 1000.0, 2001)


class TestFitRate:
    """Test suite for fit_rate."""

    def test_final_decade(self):
        """[T/10, T]."""
        assert final_decade(TIMES) == (100.0, 1000.0)

    def test_exact_power(self):
        """(1+t)^1.8 is recovered exactly."""
        fit = fit_rate(TIMES, (1.0 + TIMES) ** 1.8, RateModel.POWER, predicted=1.8)
        assert fit.exponent == pytest.approx(1.8, abs=1e-6)
        assert fit.status == FitStatus.PASS
        assert fit.window == (100.0, 1000.0)

    def test_constant_series(self):
        """A constant has exponent 0."""
        fit = fit_rate(TIMES, np.full_like(TIMES, 3.0), predicted=0.0)
        assert fit.exponent == pytest.approx(0.0, abs=1e-12)
        assert fit.passed

    def test_exponential_with_ripple(self):
        """e^t (1 + 0.1 sin t) fits slope 1 once the gate admits the ripple."""
        times = np.linspace(0.0, 50.0, 2001)
        values = np.exp(times) * (1.0 + 0.1 * np.sin(times))
        fit = fit_rate(times, values, RateModel.EXP, predicted=1.0, gate=0.1)
        assert fit.exponent == pytest.approx(1.0, abs=0.02)
        assert fit.status == FitStatus.PASS

    def test_ripple_above_gate_is_inconclusive(self):
        """The default gate refuses an oscillating residual."""
        times = np.linspace(0.0, 50.0, 2001)
        values = np.exp(times) * (1.0 + 0.5 * np.sin(times))
        fit = fit_rate(times, values, RateModel.EXP, predicted=1.0)
        assert fit.status == FitStatus.INCONCLUSIVE
        assert "gate" in fit.reason

    def test_power_log(self):
        """The known logarithmic factor is removed before fitting."""
        clock = 1.0 + TIMES
        values = clock * np.log(math.e + clock) ** 2
        fit = fit_rate(TIMES, values, RateModel.POWER_LOG, predicted=1.0, log_power=2.0)
        assert fit.exponent == pytest.approx(1.0, abs=1e-6)

    def test_custom_clock(self):
        """Exponents are taken against the supplied clock."""
        clock = np.exp(TIMES / 500.0)
        fit = fit_rate(TIMES, clock ** 0.5, RateModel.POWER, predicted=0.5, clock=clock)
        assert fit.exponent == pytest.approx(0.5, abs=1e-9)

    def test_wrong_prediction_fails(self):
        """A clean fit away from the prediction is a failure."""
        fit = fit_rate(TIMES, (1.0 + TIMES) ** 1.8, predicted=1.0, tolerance=0.05)
        assert fit.status == FitStatus.FAIL
        assert not fit.passed

    def test_too_few_samples(self):
        """Fewer than eight usable samples is inconclusive."""
        times = np.linspace(0.0, 10.0, 8)
        fit = fit_rate(times, (1.0 + times) ** 2, predicted=2.0)
        assert fit.status == FitStatus.INCONCLUSIVE
        assert fit.exponent is None

    def test_nonpositive_values_dropped(self):
        """Zeros and NaN do not enter the fit."""
        values = (1.0 + TIMES) ** -1.0
        values[1500:1510] = 0.0
        values[1600] = np.nan
        fit = fit_rate(TIMES, values, predicted=-1.0)
        assert fit.exponent == pytest.approx(-1.0, abs=1e-9)
        assert fit.n_samples == 1801 - 11
