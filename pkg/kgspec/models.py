"""
Pydantic models for reports, predictions and experiment configuration.
"""
import math
from enum import Enum
from typing import Any, Dict, List, Optional, Tuple

from pydantic import BaseModel, Field, field_validator, model_validator


class ClassKind(str, Enum):
    """Classes of coefficient pairs."""
    SCATTERING = "Scattering"
    NON_EFFECTIVE = "NonEffective"
    EFFECTIVE = "Effective"
    GREY_ZONE = "GreyZone"


class MuLimit(str, Enum):
    """Estimated limit behaviour of mu(t) = m(t)/eta(t)."""
    TO_ZERO = "to_zero"
    TO_INFINITY = "to_infinity"
    FINITE = "finite"
    UNDETERMINED = "oscillatory/undetermined"


class ZoneVariant(str, Enum):
    """Zone definitions: effective-potential zones and wavefront zones."""
    EFFECTIVE = "effective"
    WAVEFRONT = "wavefront"


class PsiProvenance(str, Enum):
    CLOSED_FORM_FAMILY = "closed_form_family"
    SCALE_INVARIANT_EXPONENT = "scale_invariant_exponent"
    USER_SUPPLIED = "user_supplied"


class FundamentalKind(str, Enum):
    PSEUDO_E = "pseudo_E"
    FREE_WAVE_EA = "free_wave_Ea"
    PERTURBATION_Q = "perturbation_Q"
    COMPOSED_EAM = "composed_Eam"


class RateModel(str, Enum):
    """Fit models for rate series."""
    POWER = "power"          # value ~ (1+t)^p
    EXP = "exp"              # value ~ e^{p t}
    POWER_LOG = "power_log"  # value ~ (1+t)^p (ln(e+t))^k with k known


class FitStatus(str, Enum):
    PASS = "pass"
    FAIL = "fail"
    INCONCLUSIVE = "inconclusive"


class Pipeline(str, Enum):
    CLASSIFY = "classify"
    SIMULATE = "simulate"
    RATES = "rates"
    SCATTER = "scatter"
    SEMILINEAR = "semilinear"
    VERIFY = "verify"


class HypothesisReport(BaseModel):
    """Outcome of a numerical hypothesis check over a time grid."""
    hypothesis: str
    label: str = ""
    satisfied: Dict[str, bool] = Field(default_factory=dict)
    constants: Dict[str, float] = Field(default_factory=dict)
    worst_t: Dict[str, float] = Field(default_factory=dict)
    grid: List[float] = Field(default_factory=list)
    heuristics: Dict[str, bool] = Field(default_factory=dict)
    values: Dict[str, float] = Field(default_factory=dict)
    notes: List[str] = Field(default_factory=list)
    warnings: List[str] = Field(default_factory=list)

    @field_validator('constants')
    @classmethod
    def validate_constants(cls, v):
        """Constants are nonnegative; non-finite values are kept only as +inf."""
        for key, value in v.items():
            if math.isnan(value) or value < 0:
                raise ValueError(f"Constant {key} must be nonnegative, got {value}")
        return v

    @model_validator(mode='after')
    def validate_worst_t_on_grid(self):
        """Worst times lie inside the sample grid."""
        if self.grid:
            lo, hi = min(self.grid), max(self.grid)
            for key, t in self.worst_t.items():
                if not (lo <= t <= hi):
                    raise ValueError(f"worst_t[{key}]={t} outside sample grid")
        return self

    @property
    def all_satisfied(self) -> bool:
        return bool(self.satisfied) and all(self.satisfied.values())


class ScatteringIntegral(BaseModel):
    """Truncated integral of (A/a) m^2 with the fitted tail behaviour."""
    value: float
    T_max: float
    tail_exponent: float
    tail_residual: float
    log_exponent: Optional[float] = None
    integrable: Optional[bool] = None


class MuLimitEstimate(BaseModel):
    behavior: MuLimit
    value: Optional[float] = None
    power_slope: float = 0.0
    log_slope: float = 0.0
    monotone: bool = True


class Classification(BaseModel):
    """Class of a coefficient pair together with its diagnostics."""
    label: str = ""
    kind: Optional[ClassKind] = None
    scattering_integral: ScatteringIntegral
    mu_limit: MuLimitEstimate
    confidence: Dict[str, bool] = Field(default_factory=dict)
    mu0: Optional[float] = None
    small_mu: Optional[bool] = None
    notes: List[str] = Field(default_factory=list)

    @model_validator(mode='after')
    def validate_kind_consistency(self):
        """Each class is backed by the diagnostics that define it."""
        kind = self.kind
        if kind == ClassKind.SCATTERING:
            if not (math.isfinite(self.scattering_integral.value) and self.scattering_integral.integrable):
                raise ValueError("Scattering requires a finite, integrable scattering integral")
        elif kind == ClassKind.NON_EFFECTIVE:
            if self.mu_limit.behavior != MuLimit.TO_ZERO or self.scattering_integral.integrable is not False:
                raise ValueError("NonEffective requires mu -> 0 and a non-integrable scattering integrand")
        elif kind == ClassKind.EFFECTIVE:
            if self.mu_limit.behavior != MuLimit.TO_INFINITY:
                raise ValueError("Effective requires mu -> infinity")
        elif kind == ClassKind.GREY_ZONE:
            if self.mu_limit.behavior != MuLimit.FINITE or not (self.mu_limit.value or 0.0) > 0:
                raise ValueError("GreyZone requires a finite positive limit of mu")
        return self

    @property
    def determined(self) -> bool:
        return self.kind is not None


class ZoneGeometry(BaseModel):
    """Zone constant N and the zone definition in use."""
    N: float = Field(default=10.0, gt=0)
    variant: ZoneVariant = ZoneVariant.WAVEFRONT


class SymbolValues(BaseModel):
    """Symbol values at (t, |xi|)."""
    t: float
    xi_norm: float
    xi_bracket: float
    d_xi_bracket: float
    h: float


class ScaleInvariantModel(BaseModel):
    """Scale-invariant pair a'/a = alpha a/A, m = mu a/A."""
    alpha: float = Field(le=1.0)
    mu: float = Field(ge=0.0)
    A0: float = Field(default=1.0, gt=0.0)
    delta: Optional[float] = None
    equiv_poly: Optional[Tuple[float, float]] = None

    @model_validator(mode='after')
    def validate_delta(self):
        """delta is recomputed from (alpha, mu) and must match when given."""
        computed = (self.alpha - 1.0) ** 2 - 4.0 * self.mu ** 2
        if self.delta is not None and self.delta != computed:
            raise ValueError(f"delta={self.delta} does not match (alpha-1)^2-4mu^2={computed}")
        self.delta = computed
        if self.equiv_poly is None and self.alpha < 1.0:
            ell = self.alpha / (1.0 - self.alpha)
            self.equiv_poly = (ell, self.mu * (ell + 1.0))
        return self

    @classmethod
    def from_polynomial(cls, ell: float, mu_tilde: float) -> "ScaleInvariantModel":
        """Model equivalent to a = (1+t)^ell, m = mu_tilde/(1+t)."""
        if ell <= -1:
            raise ValueError("ell must exceed -1")
        return cls(
            alpha=ell / (ell + 1.0),
            mu=mu_tilde / (ell + 1.0),
            A0=1.0 / (ell + 1.0),
            equiv_poly=(ell, mu_tilde),
        )

    @property
    def sqrt_delta(self) -> float:
        return math.sqrt(max(self.delta, 0.0))


class TransformedProblem(BaseModel):
    """Damped-wave description after tau + 1 = A(t)."""
    damping: float
    potential: float
    tau0: float
    branch: str
    sigma: float
    w_exponent: float
    w_damping: float
    w_potential: float
    notes: List[str] = Field(default_factory=list)


class LqPrediction(BaseModel):
    """Branch of the L^q-L^2 improvement and its exponent for the squared norm."""
    branch: str
    q: float
    kappa: float
    n: int
    exponent: float
    log_power: float = 0.0
    d_factor: str = "1"


class RatePrediction(BaseModel):
    """
    Predicted rates. Exponents refer to squared norms in the clock A(t) = 1 + tau;
    *_time_exponent converts them to (1+t) (alpha < 1) or to t (alpha = 1).
    """
    alpha: float
    mu: float
    delta: float
    potential_exponent: float
    potential_log_power: float = 0.0
    kinetic_exponent: float
    energy_exponent: Optional[float] = None
    time_model: RateModel
    time_scale: float
    lq_case: Optional[LqPrediction] = None
    flags: List[str] = Field(default_factory=list)

    @property
    def potential_time_exponent(self) -> float:
        return self.potential_exponent * self.time_scale

    @property
    def kinetic_time_exponent(self) -> float:
        return self.kinetic_exponent * self.time_scale


class RateFit(BaseModel):
    """Least-squares rate fit on the final decade of a series."""
    model: RateModel
    exponent: Optional[float] = None
    intercept: Optional[float] = None
    predicted: Optional[float] = None
    tolerance: float = Field(default=0.05, gt=0)
    residual: Optional[float] = None
    gate: float = Field(default=0.02, gt=0)
    log_power: float = 0.0
    window: Tuple[float, float] = (0.0, 0.0)
    n_samples: int = 0
    status: FitStatus = FitStatus.INCONCLUSIVE
    reason: str = ""

    @model_validator(mode='after')
    def validate_pass(self):
        """pass implies agreement within tolerance and a residual under the gate."""
        if self.status == FitStatus.PASS:
            if self.exponent is None or self.residual is None or self.residual > self.gate:
                raise ValueError("A passing fit needs an exponent and a residual below the gate")
            if self.predicted is not None and abs(self.exponent - self.predicted) > self.tolerance:
                raise ValueError("A passing fit must agree with its prediction")
        return self

    @property
    def passed(self) -> bool:
        return self.status == FitStatus.PASS


class RateVerification(BaseModel):
    prediction: RatePrediction
    fits: Dict[str, RateFit] = Field(default_factory=dict)
    horizon: float
    n_modes: int

    @property
    def passed(self) -> bool:
        return bool(self.fits) and all(f.passed for f in self.fits.values())


class CheckResult(BaseModel):
    """One asserted check inside a pipeline run."""
    name: str
    passed: bool
    value: Optional[float] = None
    detail: str = ""


class ProfileSpec(BaseModel):
    """Speed and mass family names with their parameters."""
    speed: str = "unit"
    mass: str = "zero"
    params: Dict[str, Any] = Field(default_factory=dict)
    label: Optional[str] = None


class XiGridSpec(BaseModel):
    kind: str = "geometric"
    count: int = Field(default=32, gt=0)
    xi_min: float = Field(default=0.01, ge=0)
    xi_max: float = Field(default=10.0, gt=0)
    dimension: int = Field(default=1, ge=1)
    clusters: List[Tuple[float, float, int]] = Field(default_factory=list)

    @model_validator(mode='after')
    def validate_bounds(self):
        if self.kind == "geometric" and self.xi_min <= 0:
            raise ValueError("geometric xi grid needs xi_min > 0")
        if self.xi_max < self.xi_min:
            raise ValueError("xi_max must not be below xi_min")
        return self


class RatesSpec(BaseModel):
    alpha: Optional[float] = None
    mu: Optional[float] = None
    ell: Optional[float] = None
    mu_tilde: Optional[float] = None
    A0: float = Field(default=1.0, gt=0.0)
    q: float = Field(default=2.0, ge=1.0, le=2.0)
    kappa: float = Field(default=0.0, ge=0.0, le=1.0)
    n: int = Field(default=1, ge=1)
    verify: bool = True


class ScatterSpec(BaseModel):
    eps: float = Field(default=0.01, gt=0)
    allow_constant_speed: bool = False
    sample_count: int = Field(default=48, gt=1)
    symbol: str = "bracket"


VERIFY_SUITES = ("conservation", "classifier_table", "liouville", "peano_baker", "two_sided", "pseudo_zone")


class VerifySpec(BaseModel):
    """Subset of the built-in verification suites to run."""
    suites: List[str] = Field(default_factory=lambda: list(VERIFY_SUITES))

    @field_validator("suites")
    @classmethod
    def validate_suites(cls, v):
        unknown = [s for s in v if s not in VERIFY_SUITES]
        if unknown:
            raise ValueError(f"unknown verification suites: {unknown}")
        return v


class SemilinearSpec(BaseModel):
    n: int = Field(default=2, ge=1, le=4)
    p: float = Field(default=2.0, gt=1.0)
    m: float = Field(default=1.0, gt=0.0)
    eps: float = Field(default=1e-3, ge=0.0)
    M: int = Field(default=128, ge=8)
    L: float = Field(default=64.0, gt=0.0)
    width: float = Field(default=2.0, gt=0.0)
    dt: float = Field(default=0.05, gt=0.0)
    linear_only: bool = False
    kernel_check: bool = False
    periodic_box: bool = False
    q: float = Field(default=1.0, ge=1.0, lt=2.0)
    s_max: float = Field(default=3.0, ge=0.0)
    window: float = Field(default=6.0, gt=0.0)


class ExperimentConfig(BaseModel):
    """A single experiment: one pipeline on one profile."""
    pipeline: Pipeline
    label: str = "experiment"
    profile: ProfileSpec = Field(default_factory=ProfileSpec)
    N: float = Field(default=10.0, gt=0)
    xi_grid: XiGridSpec = Field(default_factory=XiGridSpec)
    t_max: float = Field(default=100.0, gt=0)
    n_times: int = Field(default=200, ge=20)
    rtol: float = Field(default=1e-10, gt=0)
    quad_rtol: float = Field(default=1e-10, gt=0)
    tol: float = Field(default=1e-6, gt=0)
    output_dir: Optional[str] = None
    seed: int = 0
    rates: RatesSpec = Field(default_factory=RatesSpec)
    scatter: ScatterSpec = Field(default_factory=ScatterSpec)
    semilinear: SemilinearSpec = Field(default_factory=SemilinearSpec)
    verify: VerifySpec = Field(default_factory=VerifySpec)
    expect: Dict[str, Any] = Field(default_factory=dict)


class RunSummary(BaseModel):
    """Machine-readable summary of one run directory."""
    run_id: str
    digest: str = ""
    pipeline: Pipeline
    label: str
    passed: bool
    checks: List[CheckResult] = Field(default_factory=list)
    results: Dict[str, Any] = Field(default_factory=dict)
    errors: List[Dict[str, Any]] = Field(default_factory=list)
    versions: Dict[str, str] = Field(default_factory=dict)

    @property
    def pass_rate(self) -> float:
        if not self.checks:
            return 0.0
        return sum(1 for c in self.checks if c.passed) / len(self.checks) * 100
