"""
Tests for Pydantic models.
"""
import pytest
from pydantic import ValidationError

from kgspec.models import (
    CheckResult,
    Classification,
    ClassKind,
    ExperimentConfig,
    FitStatus,
    HypothesisReport,
    MuLimit,
    MuLimitEstimate,
    Pipeline,
    RateFit,
    RateModel,
    RunSummary,
    ScatteringIntegral,
    XiGridSpec,
)


def _integral(integrable):
    return ScatteringIntegral(value=0.5, T_max=1e4, tail_exponent=-3.0, tail_residual=0.0,
                              integrable=integrable)


class TestHypothesisReport:
    """Test cases for HypothesisReport."""

    def test_all_satisfied(self):
        report = HypothesisReport(hypothesis="H1", satisfied={"a": True, "b": True}, grid=[0.0, 10.0])
        assert report.all_satisfied

    def test_empty_report_not_satisfied(self):
        """No clauses checked means nothing is satisfied."""
        assert not HypothesisReport(hypothesis="H1").all_satisfied

    def test_negative_constant_fails(self):
        with pytest.raises(ValidationError):
            HypothesisReport(hypothesis="H1", constants={"C": -1.0})

    def test_worst_t_outside_grid_fails(self):
        with pytest.raises(ValidationError):
            HypothesisReport(hypothesis="H2", grid=[0.0, 10.0], worst_t={"C": 20.0})


class TestClassification:
    """Test cases for class consistency."""

    def test_scattering_needs_integrable_tail(self):
        with pytest.raises(ValidationError):
            Classification(kind=ClassKind.SCATTERING, scattering_integral=_integral(False),
                           mu_limit=MuLimitEstimate(behavior=MuLimit.TO_ZERO))

    def test_grey_zone_needs_positive_limit(self):
        with pytest.raises(ValidationError):
            Classification(kind=ClassKind.GREY_ZONE, scattering_integral=_integral(False),
                           mu_limit=MuLimitEstimate(behavior=MuLimit.FINITE, value=0.0))

    def test_undetermined(self):
        """A withheld class is allowed with any diagnostics."""
        result = Classification(scattering_integral=_integral(None),
                                mu_limit=MuLimitEstimate(behavior=MuLimit.TO_ZERO))
        assert not result.determined


class TestRateFit:
    """Test cases for RateFit."""

    def test_pass_requires_agreement(self):
        with pytest.raises(ValidationError):
            RateFit(model=RateModel.POWER, exponent=1.0, predicted=2.0, residual=0.0,
                    status=FitStatus.PASS)

    def test_pass_requires_residual_under_gate(self):
        with pytest.raises(ValidationError):
            RateFit(model=RateModel.POWER, exponent=1.0, predicted=1.0, residual=0.5,
                    status=FitStatus.PASS)

    def test_inconclusive_default(self):
        fit = RateFit(model=RateModel.EXP)
        assert fit.status == FitStatus.INCONCLUSIVE
        assert not fit.passed


class TestConfigModels:
    """Test cases for experiment config sections."""

    def test_geometric_grid_needs_positive_min(self):
        with pytest.raises(ValidationError):
            XiGridSpec(kind="geometric", xi_min=0.0)

    def test_grid_bounds_ordered(self):
        with pytest.raises(ValidationError):
            XiGridSpec(kind="uniform", xi_min=5.0, xi_max=1.0)

    def test_defaults(self):
        config = ExperimentConfig(pipeline="rates")
        assert config.pipeline == Pipeline.RATES
        assert config.N == 10.0
        assert config.scatter.sample_count == 48
        assert config.verify.suites[0] == "conservation"

    def test_semilinear_dimension_range(self):
        with pytest.raises(ValidationError):
            ExperimentConfig(pipeline="semilinear", semilinear={"n": 5})


class TestRunSummary:
    """Test cases for RunSummary."""

    def test_pass_rate(self):
        summary = RunSummary(run_id="abc", pipeline=Pipeline.VERIFY, label="x", passed=False,
                             checks=[CheckResult(name="a", passed=True), CheckResult(name="b", passed=False)])
        assert summary.pass_rate == 50.0

    def test_pass_rate_zero_checks(self):
        summary = RunSummary(run_id="abc", pipeline=Pipeline.RATES, label="x", passed=True)
        assert summary.pass_rate == 0.0
