"""
Class of a coefficient pair (scattering, non-effective, effective, grey zone)
and the auxiliary weight psi used for non-effective potentials.
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np

from .coeffs import CoefficientProfile, check_hypothesis1, check_hypothesis2, quad_integral
from .config import settings
from .errors import KGSpecError, NoConstructivePsiError, PreconditionError
from .models import (Classification, ClassKind, HypothesisReport, MuLimit, MuLimitEstimate,
                     PsiProvenance, ScatteringIntegral)

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

# |p + 1| below this triggers the log-log refinement of the tail test
REFINE_WINDOW = 0.25


@dataclass(frozen=True)
class PsiProfile:
    """Positive non-decreasing weight with psi(0) = 1 and its derivatives."""
    psi: Callable[[float], float]
    psi1: Callable[[float], float]
    psi2: Callable[[float], float]
    provenance: PsiProvenance
    label: str = "psi"
    params: Dict[str, float] = field(default_factory=dict, hash=False)

    def log_derivative(self, t: float) -> float:
        return self.psi1(t) / self.psi(t)

    def validate(self, grid: Sequence[float], profile: CoefficientProfile) -> Tuple[bool, float]:
        """
        psi(0) = 1, non-decreasing on the grid and psi'/psi <= c eta with c < 1.

        Returns (valid, c).
        """
        grid = np.asarray(grid, dtype=float)
        values = np.array([self.psi(t) for t in grid])
        ok = abs(self.psi(0.0) - 1.0) <= 1e-12 and bool(np.all(np.diff(values) >= -1e-12 * values[1:]))
        c = max(self.log_derivative(t) / profile.eta(t) for t in grid)
        return ok and c < 1.0, float(c)


def scattering_integrand(profile: CoefficientProfile) -> Callable[[float], float]:
    """(A/a) m^2, evaluated as m^2/eta so that fast speeds stay finite."""
    def f(t: float) -> float:
        return profile.m(t) ** 2 / profile.eta(t)
    return f


def _linear_fit(x: np.ndarray, y: np.ndarray) -> Tuple[float, float, float]:
    """Slope, intercept and RMS residual of a least-squares line."""
    design = np.vstack([x, np.ones_like(x)]).T
    coef, *_ = np.linalg.lstsq(design, y, rcond=None)
    resid = y - design @ coef
    return float(coef[0]), float(coef[1]), float(np.sqrt(np.mean(resid ** 2)))


def tail_test(f: Callable[[float], float], T_max: float, n_samples: int = 41,
              band: Optional[float] = None) -> Dict[str, Optional[float]]:
    """
    Decide integrability of f at infinity from its final decade.

    The slope p of log f against log t decides outside the dead band
    |p + 1| <= band. Near p = -1 the tail is refitted as log(t f) against
    log log t, and the exponent q of 1/(t ln^q t) decides with the same band.
    """
    band = settings.tail_band if band is None else band
    ts = np.geomspace(T_max / 10.0, T_max, n_samples)
    fs = np.array([f(t) for t in ts])
    if np.all(fs == 0.0):
        return {"slope": -math.inf, "residual": 0.0, "log_exponent": None, "integrable": True}
    if np.any(fs <= 0.0) or not np.all(np.isfinite(fs)):
        return {"slope": math.nan, "residual": math.inf, "log_exponent": None, "integrable": None}

    p, _, resid = _linear_fit(np.log(ts), np.log(fs))
    q = None
    if abs(p + 1.0) > REFINE_WINDOW:
        integrable = p < -1.0
    else:
        slope, _, _ = _linear_fit(np.log(np.log(ts)), np.log(ts * fs))
        q = -slope
        if q > 1.0 + band:
            integrable = True
        elif q < 1.0 - band:
            integrable = False
        else:
            integrable = None
    return {"slope": p, "residual": resid, "log_exponent": q, "integrable": integrable}


def estimate_mu_limit(profile: CoefficientProfile, T_max: float, n_samples: int = 41,
                   band: Optional[float] = None) -> MuLimitEstimate:
    """Trend of mu at geometric times of the final decade."""
    band = settings.tail_band if band is None else band
    ts = np.geomspace(T_max / 10.0, T_max, n_samples)
    mus = np.array([abs(profile.mu(t)) for t in ts])
    if np.all(mus == 0.0):
        return MuLimitEstimate(behavior=MuLimit.TO_ZERO, value=0.0, power_slope=-math.inf, log_slope=-math.inf)
    if np.any(mus <= 0.0):
        return MuLimitEstimate(behavior=MuLimit.UNDETERMINED, monotone=False)

    log_mu = np.log(mus)
    spread = float(log_mu.max() - log_mu.min())
    net = float(abs(log_mu[-1] - log_mu[0]))
    monotone = spread - net <= 1e-3
    s, _, _ = _linear_fit(np.log(ts), log_mu)
    r, _, _ = _linear_fit(np.log(np.log(ts)), log_mu)

    if not monotone:
        behavior, value = MuLimit.UNDETERMINED, None
    elif s > band:
        behavior, value = MuLimit.TO_INFINITY, None
    elif s < -band:
        behavior, value = MuLimit.TO_ZERO, None
    elif r > band:
        behavior, value = MuLimit.TO_INFINITY, None
    elif r < -band:
        behavior, value = MuLimit.TO_ZERO, None
    else:
        behavior, value = MuLimit.FINITE, float(mus[-1])
    return MuLimitEstimate(behavior=behavior, value=value, power_slope=s, log_slope=r, monotone=monotone)


def classify(profile: CoefficientProfile, T_max: float, tol: float = 0.1,
             n_samples: int = 41) -> Classification:
    """
    Class of (a, m) from the scattering integral of (A/a) m^2 and the limit of mu.

    Undetermined tests withhold the class and lower the confidence flags.
    """
    if T_max <= 10.0:
        raise PreconditionError("classify needs T_max > 10 for a final-decade fit")
    notes = []
    confidence: Dict[str, bool] = {}

    grid = np.geomspace(1.0, 1.0 + min(T_max, 1e4), 60) - 1.0
    try:
        h1 = check_hypothesis1(profile, grid)
        h2 = check_hypothesis2(profile, grid)
        confidence["hypotheses"] = h1.all_satisfied and h2.all_satisfied
    except KGSpecError as e:
        confidence["hypotheses"] = False
        notes.append(f"hypothesis check failed: {e}")

    f = scattering_integrand(profile)
    value = quad_integral(f, 0.0, T_max)
    tail = tail_test(f, T_max, n_samples=n_samples)
    confidence["tail_fit"] = tail["residual"] <= tol
    integrable = tail["integrable"]
    if not confidence["tail_fit"]:
        integrable = None
        notes.append(f"tail fit residual {tail['residual']:.3g} exceeds tol {tol:g}")
    confidence["integrability_decided"] = integrable is not None
    scat = ScatteringIntegral(
        value=value,
        T_max=T_max,
        tail_exponent=tail["slope"],
        tail_residual=tail["residual"],
        log_exponent=tail["log_exponent"],
        integrable=integrable,
    )

    mu_est = estimate_mu_limit(profile, T_max, n_samples=n_samples)
    confidence["mu_limit_decided"] = mu_est.behavior != MuLimit.UNDETERMINED

    kind: Optional[ClassKind] = None
    mu0 = None
    small_mu = None
    if integrable is True:
        kind = ClassKind.SCATTERING
    elif integrable is False:
        if mu_est.behavior == MuLimit.TO_ZERO:
            kind = ClassKind.NON_EFFECTIVE
        elif mu_est.behavior == MuLimit.TO_INFINITY:
            kind = ClassKind.EFFECTIVE
        elif mu_est.behavior == MuLimit.FINITE and (mu_est.value or 0.0) > 0:
            kind = ClassKind.GREY_ZONE
            mu0 = mu_est.value
            small_mu = mu0 ** 2 < 0.25
            notes.append(f"grey zone with mu0 = {mu0:.6g}; mu0^2 {'<' if small_mu else '>='} 1/4")
        else:
            notes.append("mu has no detectable limit and the scattering integral diverges; class undetermined")
    else:
        notes.append("integrability undetermined: tail inside the dead band around -1")

    result = Classification(
        label=profile.label,
        kind=kind,
        scattering_integral=scat,
        mu_limit=mu_est,
        confidence=confidence,
        mu0=mu0,
        small_mu=small_mu,
        notes=notes,
    )
    logger.info(f"Classified {profile.label}: {kind.value if kind else 'undetermined'}")
    return result


# ---------------------------------------------------------------------------
# psi construction
# ---------------------------------------------------------------------------

def _power_psi(sigma: float, label: str, provenance: PsiProvenance) -> PsiProfile:
    return PsiProfile(
        psi=lambda t: (1.0 + t) ** sigma,
        psi1=lambda t: sigma * (1.0 + t) ** (sigma - 1.0),
        psi2=lambda t: sigma * (sigma - 1.0) * (1.0 + t) ** (sigma - 2.0),
        provenance=provenance,
        label=label,
        params={"sigma": sigma},
    )


def _log_mass_psi(mu0: float, gamma: float) -> PsiProfile:
    """psi = exp(int_0^t mu(s)^2/(e+s) ds) with mu = mu0 ln(e+s)^(-gamma)."""
    E = math.e
    k = 1.0 - 2.0 * gamma

    def log_psi(t):
        L = math.log(E + t)
        if abs(k) < 1e-12:
            return mu0 ** 2 * math.log(L)
        return mu0 ** 2 * (L ** k - 1.0) / k

    def rate(t):
        return mu0 ** 2 * math.log(E + t) ** (-2.0 * gamma) / (E + t)

    def rate1(t):
        L = math.log(E + t)
        return mu0 ** 2 * (-2.0 * gamma * L ** (-2.0 * gamma - 1.0) - L ** (-2.0 * gamma)) / (E + t) ** 2

    def psi(t):
        return math.exp(log_psi(t))

    return PsiProfile(
        psi=psi,
        psi1=lambda t: psi(t) * rate(t),
        psi2=lambda t: psi(t) * (rate1(t) + rate(t) ** 2),
        provenance=PsiProvenance.CLOSED_FORM_FAMILY,
        label=f"log_mass(mu0={mu0}, gamma={gamma})",
        params={"mu0": mu0, "gamma": gamma},
    )


def _sigma(mu: float) -> float:
    if mu ** 2 > 0.25:
        raise PreconditionError(f"psi = (1+t)^sigma needs mu^2 <= 1/4, got mu = {mu}")
    return 0.5 * (1.0 - math.sqrt(1.0 - 4.0 * mu ** 2))


def build_psi(profile: CoefficientProfile, user_psi: Optional[PsiProfile] = None,
              grid: Optional[Sequence[float]] = None) -> PsiProfile:
    """
    psi for the recognized families:

    - m = 0: psi = 1.
    - m = mu/(1+t): psi = (1+t)^sigma with 2 sigma = 1 - sqrt(1 - 4 mu^2), exact.
    - m = mu a/A with a = (1+t)^ell: the same power with mu (ell + 1).
    - m = mu0 ln(e+t)^(-gamma)/(e+t): psi = exp(int mu^2/(e+s)) in closed form.

    Otherwise a user-supplied psi is validated and returned.
    """
    family = profile.family
    mass = family.get("mass")
    if mass == "zero":
        one = PsiProfile(lambda t: 1.0, lambda t: 0.0, lambda t: 0.0,
                         PsiProvenance.CLOSED_FORM_FAMILY, label="one")
        logger.info(f"psi for {profile.label}: identically one")
        return one
    if mass == "inverse_linear":
        psi = _power_psi(_sigma(family["mu"]), "power", PsiProvenance.SCALE_INVARIANT_EXPONENT)
    elif mass == "scale_invariant" and family.get("speed") in ("unit", "polynomial"):
        mu_eff = family["mu"] * (family.get("ell", 0.0) + 1.0)
        psi = _power_psi(_sigma(mu_eff), "power", PsiProvenance.SCALE_INVARIANT_EXPONENT)
    elif mass == "log_mass":
        psi = _log_mass_psi(family["mu0"], family["gamma"])
    elif user_psi is not None:
        psi = user_psi
        check_grid = grid if grid is not None else np.geomspace(1.0, 1e3, 50) - 1.0
        valid, c = psi.validate(check_grid, profile)
        if not valid:
            raise PreconditionError(f"User psi fails psi(0)=1, monotonicity or psi'/psi < c eta (c={c:.3g})")
    else:
        raise NoConstructivePsiError(profile.label)
    logger.info(f"psi for {profile.label}: {psi.label} ({psi.provenance.value})")
    return psi


def check_hypothesis3(profile: CoefficientProfile, psi: PsiProfile, grid: Sequence[float]) -> HypothesisReport:
    """
    Relation between m, eta and psi.

    S1 = sup_t psi^2 eta int_0^t psi^-2 and S2 = int_0^T (1/eta)|psi''/psi + m^2|
    with the tail slope of its integrand; also 1/(eta psi^2) eventually
    increasing and psi'/psi <= c eta with c < 1.
    """
    grid = np.asarray(grid, dtype=float)
    if grid.size < 4:
        raise PreconditionError("check_hypothesis3 needs at least four grid points")
    T = float(grid[-1])

    def inv_psi2(t):
        return psi.psi(t) ** -2

    def s2_density(t):
        curvature = psi.psi2(t) / psi.psi(t)
        m2 = profile.m(t) ** 2
        value = curvature + m2
        if abs(value) <= 1e-12 * (abs(curvature) + m2):
            return 0.0
        return abs(value) / profile.eta(t)

    # cumulative int psi^-2 along the grid
    cumulative = np.zeros_like(grid)
    for i in range(1, grid.size):
        cumulative[i] = cumulative[i - 1] + quad_integral(inv_psi2, float(grid[i - 1]), float(grid[i]))
    S1_samples = np.array([psi.psi(t) ** 2 * profile.eta(t) for t in grid]) * cumulative
    i1 = int(np.argmax(S1_samples))
    S1 = float(S1_samples[i1])

    S2 = quad_integral(s2_density, 0.0, T)
    tail = tail_test(s2_density, T) if T > 10.0 else {"slope": math.nan, "integrable": None}
    density_end = s2_density(T)
    s2_vanishes = density_end == 0.0 and S2 == 0.0
    s2_finite = s2_vanishes or tail["integrable"] is True

    weight = np.array([1.0 / (profile.eta(t) * psi.psi(t) ** 2) for t in grid])
    tail_start = grid.size // 2
    increasing = bool(np.all(np.diff(weight[tail_start:]) >= 0))

    c_samples = np.array([psi.log_derivative(t) / profile.eta(t) for t in grid])
    ic = int(np.argmax(c_samples))
    c = float(max(c_samples[ic], 0.0))

    report = HypothesisReport(
        hypothesis="psi_relation",
        label=profile.label,
        satisfied={
            "S1_bounded": math.isfinite(S1),
            "S2_finite": s2_finite,
            "weight_increasing": increasing,
            "log_derivative": c < 1.0,
        },
        constants={"S1": S1, "S2": float(S2), "c": c},
        worst_t={"S1": float(grid[i1]), "c": float(grid[ic])},
        grid=grid.tolist(),
        values={"S2_tail_slope": float(tail["slope"]) if tail["slope"] is not None else math.nan},
        notes=["S2 is truncated at the end of the grid; finiteness is decided by the tail slope"],
    )
    logger.info(f"psi relation for {profile.label}: S1={S1:.4g}, S2={S2:.4g}, c={c:.3g}")
    return report
