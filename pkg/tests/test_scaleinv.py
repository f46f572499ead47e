"""
Tests for scale-invariant models, their transforms and the predicted rates.
"""
import math

import numpy as np
import pytest

from kgspec.errors import PreconditionError
from kgspec.models import FitStatus, RateModel, ScaleInvariantModel, XiGridSpec
from kgspec.modes import integrate_mode
from kgspec.scaleinv import (
    predict_rates,
    scale_invariant_profile,
    transform_data,
    transform_to_dissipative,
    transformed_mode,
    verify_rates,
)


class TestModel:
    """Test suite for the model and its closed-form profile."""

    def test_delta(self):
        """delta = (alpha - 1)^2 - 4 mu^2."""
        assert ScaleInvariantModel(alpha=0.5, mu=0.1).delta == pytest.approx(0.21)

    def test_inconsistent_delta_rejected(self):
        """A supplied delta must agree with (alpha, mu)."""
        with pytest.raises(ValueError):
            ScaleInvariantModel(alpha=0.0, mu=0.3, delta=0.5)

    def test_polynomial_equivalent(self):
        """a = (1+t)^ell, m = mu~/(1+t) has alpha = ell/(ell+1)."""
        model = ScaleInvariantModel.from_polynomial(1.0, 0.4)
        assert model.alpha == 0.5
        assert model.mu == pytest.approx(0.2)
        assert model.A0 == 0.5
        assert model.equiv_poly == (1.0, 0.4)

    def test_polynomial_needs_ell_above_minus_one(self):
        with pytest.raises(ValueError):
            ScaleInvariantModel.from_polynomial(-1.0, 0.0)

    @pytest.mark.parametrize("alpha,mu,A0", [(0.0, 0.3, 1.0), (0.5, 0.2, 2.0), (1.0, 0.4, 0.5)])
    def test_profile_is_scale_invariant(self, alpha, mu, A0):
        """a(0) = 1, A(0) = A0, a'/a = alpha a/A and m = mu a/A."""
        profile = scale_invariant_profile(ScaleInvariantModel(alpha=alpha, mu=mu, A0=A0))
        assert profile.a(0.0) == pytest.approx(1.0)
        assert profile.A(0.0) == pytest.approx(A0)
        for t in (0.5, 3.0, 10.0):
            ratio = profile.a(t) / profile.A(t)
            assert profile.d_a(t) / profile.a(t) == pytest.approx(alpha * ratio, rel=1e-12)
            assert profile.m(t) == pytest.approx(mu * ratio, rel=1e-12)

    def test_polynomial_profile_matches(self):
        """ell = 1 gives a = 1 + t."""
        profile = scale_invariant_profile(ScaleInvariantModel.from_polynomial(1.0, 0.0))
        assert profile.a(3.0) == pytest.approx(4.0)


class TestTransforms:
    """Test suite for the damped-wave transforms."""

    def test_oscillatory_branch(self):
        """delta < 0: no damping left and potential (1 - delta)/4."""
        model = ScaleInvariantModel(alpha=0.5, mu=0.5)
        problem = transform_to_dissipative(model)
        assert problem.branch == "oscillatory"
        assert problem.w_damping == 0.0
        assert problem.w_potential == pytest.approx((1.0 - model.delta) / 4.0)
        assert problem.w_exponent == -0.25

    def test_dissipative_branch(self):
        """delta >= 0: damping 1 + sqrt(delta) and no potential."""
        problem = transform_to_dissipative(ScaleInvariantModel(alpha=0.0, mu=0.3))
        assert problem.branch == "dissipative"
        assert problem.w_damping == pytest.approx(1.8)
        assert problem.w_potential == 0.0
        assert problem.sigma == pytest.approx(0.9)

    def test_double_root_noted(self):
        """delta = 0 carries a logarithmic partner."""
        problem = transform_to_dissipative(ScaleInvariantModel(alpha=0.0, mu=0.5))
        assert problem.notes

    def test_data_transform(self):
        """w = A^-e v at tau0."""
        model = ScaleInvariantModel(alpha=0.0, mu=0.3, A0=2.0)
        data = transform_data(model, 1.0, 0.5)
        e = transform_to_dissipative(model).w_exponent
        assert data["v"] == (1.0, 0.5)
        assert data["w"][0] == pytest.approx(2.0 ** -e)

    @pytest.mark.parametrize("alpha,mu", [(0.5, 0.1), (0.5, 0.5), (0.0, 0.3)])
    def test_transformed_mode_matches_direct(self, alpha, mu):
        """The w equation mapped back reproduces the mode equation."""
        model = ScaleInvariantModel(alpha=alpha, mu=mu)
        times = np.linspace(0.0, 5.0, 11)
        via_w = transformed_mode(model, 2.0, (1.0, 0.5), times, tol=1e-11)
        direct = integrate_mode(scale_invariant_profile(model), 2.0, (1.0, 0.5), 5.0, tol=1e-11,
                                times=times, method="direct")
        assert np.max(np.abs(via_w - direct.u_hat)) < 1e-7


class TestPredictRates:
    """Test suite for the rate table."""

    def test_dissipative_potential(self):
        """ell = 0, mu~ = 0.3: sqrt(delta) = 0.8 and exponent 1.8."""
        prediction = predict_rates(ScaleInvariantModel.from_polynomial(0.0, 0.3))
        assert prediction.potential_exponent == pytest.approx(1.8)
        assert prediction.potential_time_exponent == pytest.approx(1.8)
        assert prediction.kinetic_exponent == 0.0
        assert prediction.energy_exponent is None

    def test_oscillatory_branch(self):
        """delta < 0: potential 1 - alpha, energy alpha."""
        prediction = predict_rates(ScaleInvariantModel(alpha=0.0, mu=1.0))
        assert prediction.potential_exponent == 1.0
        assert prediction.kinetic_exponent == 0.0
        assert prediction.energy_exponent == 0.0

    def test_double_root_log(self):
        """delta = 0: ln^2 correction."""
        prediction = predict_rates(ScaleInvariantModel(alpha=0.0, mu=0.5))
        assert prediction.potential_log_power == 2.0

    def test_kinetic_fast_branch_flagged_at_alpha_zero(self):
        """delta >= 1 with alpha = 0 is flagged."""
        prediction = predict_rates(ScaleInvariantModel(alpha=0.0, mu=0.0))
        assert prediction.kinetic_exponent == 0.0
        assert prediction.flags

    def test_time_scale_polynomial(self):
        """ell = 1: A ~ (1+t)^2/2, time exponents double."""
        prediction = predict_rates(ScaleInvariantModel.from_polynomial(1.0, 0.0))
        assert prediction.time_model == RateModel.POWER
        assert prediction.time_scale == pytest.approx(2.0)
        assert prediction.potential_time_exponent == pytest.approx(2.0)

    def test_time_scale_exponential(self):
        """alpha = 1 switches to an exponential clock."""
        prediction = predict_rates(ScaleInvariantModel(alpha=1.0, mu=0.3, A0=0.5))
        assert prediction.time_model == RateModel.EXP
        assert prediction.time_scale == 2.0

    def test_lq_branches(self):
        """L^q improvement branches on the dissipative model."""
        model = ScaleInvariantModel.from_polynomial(0.0, 0.3)
        assert predict_rates(model).lq_case.branch == "L2"
        slow = predict_rates(model, q=1.0, n=1).lq_case
        assert slow.branch == "slow_damping"
        assert slow.exponent == pytest.approx(0.8)
        assert predict_rates(model, q=1.0, n=2).lq_case.branch == "fast_damping"

    def test_lq_critical_dimension(self):
        """delta <= 0 at n = q/(2-q) gains a logarithm."""
        case = predict_rates(ScaleInvariantModel(alpha=0.0, mu=1.0), q=1.0, n=1).lq_case
        assert case.branch == "delta<=0"
        assert case.d_factor == "log^0.5"

    def test_ranges(self):
        """q in [1, 2], kappa in [0, 1]."""
        model = ScaleInvariantModel(alpha=0.0, mu=0.3)
        with pytest.raises(PreconditionError):
            predict_rates(model, q=3.0)
        with pytest.raises(PreconditionError):
            predict_rates(model, kappa=1.5)


@pytest.mark.slow
class TestVerifyRates:
    """Test suite for measured rates against the table."""

    def test_potential_rate(self):
        """||u||^2 grows like (1+t)^1.8 for ell = 0, mu~ = 0.3."""
        model = ScaleInvariantModel.from_polynomial(0.0, 0.3)
        verification = verify_rates(model, predict_rates(model), t_max=1000.0,
                                     xi_grid=XiGridSpec(kind="uniform", count=9, xi_min=0.0, xi_max=4.0),
                                     n_times=200)
        fit = verification.fits["potential"]
        assert fit.status == FitStatus.PASS
        assert fit.exponent == pytest.approx(1.8, abs=0.05)
        assert verification.n_modes == 9
