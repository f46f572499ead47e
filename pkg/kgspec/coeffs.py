"""
Coefficient profiles (a, m) of u_tt - a(t)^2 Lap u + m(t)^2 u = 0.

A profile bundles the speed a, the mass m and their first two derivatives,
the primitive A(t) = 1 + int_0^t a, and the derived scales
eta = a/A and mu = m/eta.
"""
import bisect
import logging
import math
import threading
from dataclasses import dataclass, field
from typing import Any, Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate, special

from .config import settings
from .errors import HypothesisEvaluationError, PreconditionError, QuadratureError
from .models import HypothesisReport, ProfileSpec

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

ScalarFn = Callable[[float], float]

# Anchors t_k = 2^(k/ANCHORS_PER_OCTAVE) - 1 of the primitive memo.
ANCHORS_PER_OCTAVE = 4


def _fd_step(t: float) -> float:
    return 1e-5 * (1.0 + abs(t))


def _first_difference(f: ScalarFn, t: float) -> float:
    h = _fd_step(t)
    if t - h < 0.0:
        return (-3.0 * f(t) + 4.0 * f(t + h) - f(t + 2.0 * h)) / (2.0 * h)
    return (f(t + h) - f(t - h)) / (2.0 * h)


class _PrimitiveMemo:
    """
    Memoized values of A at a fixed geometric ladder of anchor times.

    A(t) is always evaluated as A(anchor) + int_anchor^t a with the largest
    anchor below t, so the result does not depend on the order of queries.
    """

    def __init__(self):
        self._values: List[float] = [1.0]
        self._lock = threading.Lock()

    @staticmethod
    def anchor_time(k: int) -> float:
        return 2.0 ** (k / ANCHORS_PER_OCTAVE) - 1.0

    @staticmethod
    def anchor_index(t: float) -> int:
        k = int(math.floor(ANCHORS_PER_OCTAVE * math.log2(1.0 + t)))
        # guard the floor against rounding at exact anchors
        while k > 0 and _PrimitiveMemo.anchor_time(k) > t:
            k -= 1
        while _PrimitiveMemo.anchor_time(k + 1) <= t:
            k += 1
        return k

    def anchor_value(self, k: int, piece: Callable[[float, float], float]) -> float:
        with self._lock:
            while len(self._values) <= k:
                j = len(self._values)
                self._values.append(
                    self._values[j - 1] + piece(self.anchor_time(j - 1), self.anchor_time(j))
                )
            return self._values[k]


@dataclass(frozen=True)
class CoefficientProfile:
    """
    Time-dependent coefficient pair.

    Missing derivatives fall back to central differences with step
    h = 1e-5 (1 + t).
    """
    a: ScalarFn
    m: ScalarFn
    a1: Optional[ScalarFn] = None
    a2: Optional[ScalarFn] = None
    m1: Optional[ScalarFn] = None
    m2: Optional[ScalarFn] = None
    A_closed: Optional[ScalarFn] = None
    log_a: Optional[ScalarFn] = None
    log_A: Optional[ScalarFn] = None
    speed_ratios: Optional[Callable[[float], Tuple[float, float]]] = None
    label: str = "profile"
    family: Dict[str, Any] = field(default_factory=dict, compare=False, hash=False)
    _memo: _PrimitiveMemo = field(default_factory=_PrimitiveMemo, init=False, repr=False,
                                  compare=False, hash=False)

    # derivatives

    def d_a(self, t: float) -> float:
        return self.a1(t) if self.a1 is not None else _first_difference(self.a, t)

    def dd_a(self, t: float) -> float:
        return self.a2(t) if self.a2 is not None else _first_difference(self.d_a, t)

    def d_m(self, t: float) -> float:
        return self.m1(t) if self.m1 is not None else _first_difference(self.m, t)

    def dd_m(self, t: float) -> float:
        return self.m2(t) if self.m2 is not None else _first_difference(self.d_m, t)

    @property
    def analytic(self) -> bool:
        return None not in (self.a1, self.a2, self.m1, self.m2)

    # primitive and derived scales

    def A(self, t: float) -> float:
        return primitive(self, t)

    def log_primitive(self, t: float) -> float:
        """log A(t); +inf when A overflows."""
        if self.log_A is not None:
            return float(self.log_A(t))
        try:
            return math.log(self.A(t))
        except OverflowError:
            return math.inf

    def eta(self, t: float) -> float:
        if self.log_a is not None and self.log_A is not None:
            return math.exp(self.log_a(t) - self.log_A(t))
        return self.a(t) / self.A(t)

    def mu(self, t: float) -> float:
        return self.m(t) / self.eta(t)

    def speed_ratio(self, t: float) -> Tuple[float, float]:
        """(a'/a, a''/a)."""
        if self.speed_ratios is not None:
            return self.speed_ratios(t)
        a = self.a(t)
        return self.d_a(t) / a, self.dd_a(t) / a

    def eta_derivatives(self, t: float) -> Tuple[float, float, float]:
        """(eta, eta', eta'') from eta' = a'/A - eta^2."""
        return _eta_from_ratios(self.eta(t), *self.speed_ratio(t))

    def mu_derivatives(self, t: float) -> Tuple[float, float, float]:
        """(mu, mu', mu'') by composition when all derivatives are analytic."""
        if not self.analytic:
            return self.mu(t), _first_difference(self.mu, t), _first_difference(
                lambda s: _first_difference(self.mu, s), t)
        eta, eta1, eta2 = self.eta_derivatives(t)
        m, m1, m2 = self.m(t), self.d_m(t), self.dd_m(t)
        mu = m / eta
        mu1 = m1 / eta - m * eta1 / eta ** 2
        mu2 = (m2 / eta - 2.0 * m1 * eta1 / eta ** 2 - m * eta2 / eta ** 2
               + 2.0 * m * eta1 ** 2 / eta ** 3)
        return mu, mu1, mu2

    def normalization_warnings(self) -> List[str]:
        """Flags for a(0) != 1 or m(0) != 1; the lab reports them without refusing."""
        flags = []
        a0, m0 = float(self.a(0.0)), float(self.m(0.0))
        if abs(a0 - 1.0) > 1e-12:
            flags.append(f"a(0) = {a0:.6g} is not normalized to 1")
        if abs(m0 - 1.0) > 1e-12:
            flags.append(f"m(0) = {m0:.6g} is not normalized to 1")
        return flags


def _eta_from_ratios(eta: float, r1: float, r2: float) -> Tuple[float, float, float]:
    # a'/A = r1 eta and a''/A = r2 eta keep every term O(eta) when a and A overflow
    eta1 = r1 * eta - eta * eta
    eta2 = r2 * eta - r1 * eta * eta - 2.0 * eta * eta1
    return eta, eta1, eta2


def primitive(profile: CoefficientProfile, t: float) -> float:
    """A(t) = 1 + int_0^t a, closed form when available, memoized quadrature otherwise."""
    if t < 0:
        raise PreconditionError(f"primitive requires t >= 0, got {t}")
    if profile.A_closed is not None:
        return float(profile.A_closed(t))

    def piece(lo: float, hi: float) -> float:
        return _quad(profile.a, lo, hi)

    k = _PrimitiveMemo.anchor_index(t)
    base = profile._memo.anchor_value(k, piece)
    t_k = _PrimitiveMemo.anchor_time(k)
    if t == t_k:
        return base
    return base + piece(t_k, t)


def primitive_grid(profile: CoefficientProfile, ts: Sequence[float]) -> np.ndarray:
    return np.array([primitive(profile, float(t)) for t in ts])


def _quad(f: ScalarFn, lo: float, hi: float, rtol: Optional[float] = None) -> float:
    rtol = settings.quad_rtol if rtol is None else rtol
    result = integrate.quad(f, lo, hi, epsabs=0.0, epsrel=rtol,
                            limit=settings.quad_limit, full_output=1)
    value, abserr = result[0], result[1]
    if len(result) > 3 and abserr > 100.0 * rtol * max(abs(value), 1e-300):
        logger.error(f"Quadrature did not converge on [{lo}, {hi}]: {result[3]}")
        raise QuadratureError("Adaptive quadrature did not converge", (lo, hi))
    return value


def quad_integral(f: ScalarFn, lo: float, hi: float, rtol: Optional[float] = None,
                  panels: Optional[int] = None) -> float:
    """Composite quadrature over geometric panels in (1 + t)."""
    if hi <= lo:
        return 0.0
    if panels is None:
        panels = max(1, int(math.ceil(math.log2((1.0 + hi) / (1.0 + lo)) * 2)))
    edges = np.geomspace(1.0 + lo, 1.0 + hi, panels + 1) - 1.0
    edges[0], edges[-1] = lo, hi
    return float(sum(_quad(f, float(edges[i]), float(edges[i + 1]), rtol) for i in range(panels)))


def eta_mu(profile: CoefficientProfile, t: float) -> Tuple[float, float]:
    """(eta(t), mu(t)) with mu = m/eta."""
    eta = profile.eta(t)
    return eta, profile.m(t) / eta


def _fit_constant(values: np.ndarray, grid: np.ndarray, what: str) -> Tuple[float, float]:
    bad = ~np.isfinite(values)
    if bad.any():
        t_bad = float(grid[np.argmax(bad)])
        raise HypothesisEvaluationError(f"Non-finite {what}", t_bad)
    i = int(np.argmax(values))
    return float(values[i]), float(grid[i])


def _check_grid(grid: Sequence[float]) -> np.ndarray:
    grid = np.asarray(grid, dtype=float)
    if grid.size == 0:
        raise PreconditionError("Sample grid is empty")
    if np.any(np.diff(grid) < 0) or grid[0] < 0:
        raise PreconditionError("Sample grid must be sorted and nonnegative")
    return grid


def check_hypothesis1(profile: CoefficientProfile, grid: Sequence[float],
                      cap: Optional[float] = None) -> HypothesisReport:
    """
    Shape estimates |a^(k)|/a <= C_k eta^k, k = 1, 2, over the sample grid.

    The condition that a is not integrable is checked heuristically by
    A(T_max) >= settings.l1_threshold.
    """
    cap = settings.hypothesis_cap if cap is None else cap
    grid = _check_grid(grid)
    ratio1 = np.empty_like(grid)
    ratio2 = np.empty_like(grid)
    for i, t in enumerate(grid):
        # a speed given through log a is positive by construction
        if profile.log_a is None:
            try:
                positive = profile.a(t) > 0
            except (ArithmeticError, ValueError) as e:
                raise HypothesisEvaluationError(f"Speed evaluation failed: {e}", float(t))
            if not positive:
                raise HypothesisEvaluationError("Speed is not strictly positive", float(t))
        try:
            eta = profile.eta(t)
            r1, r2 = profile.speed_ratio(t)
            ratio1[i] = abs(r1) / eta
            ratio2[i] = abs(r2) / eta ** 2
        except (ArithmeticError, ValueError) as e:
            raise HypothesisEvaluationError(f"Derivative evaluation failed: {e}", float(t))

    C1, w1 = _fit_constant(ratio1, grid, "|a'|/(a eta)")
    C2, w2 = _fit_constant(ratio2, grid, "|a''|/(a eta^2)")
    log_A_end = profile.log_primitive(float(grid[-1]))
    A_end = math.exp(log_A_end) if log_A_end < 700.0 else math.inf

    report = HypothesisReport(
        hypothesis="shape",
        label=profile.label,
        satisfied={"k1": C1 <= cap, "k2": C2 <= cap},
        constants={"C1": C1, "C2": C2},
        worst_t={"C1": w1, "C2": w2},
        grid=grid.tolist(),
        heuristics={"a_not_integrable": log_A_end >= math.log(settings.l1_threshold)},
        values={"A_end": A_end, "log_A_end": log_A_end},
        notes=["a not in L^1 is tested by A(T_max) >= threshold and is heuristic only"],
        warnings=profile.normalization_warnings(),
    )
    logger.info(f"Shape hypothesis for {profile.label}: C1={C1:.4g}, C2={C2:.4g}")
    return report


def check_hypothesis2(profile: CoefficientProfile, grid: Sequence[float],
                      cap: Optional[float] = None) -> HypothesisReport:
    """Oscillation estimates |mu^(k)| <= C_k mu eta^k, k = 1, 2."""
    cap = settings.hypothesis_cap if cap is None else cap
    grid = _check_grid(grid)
    ratio1 = np.empty_like(grid)
    ratio2 = np.empty_like(grid)
    for i, t in enumerate(grid):
        try:
            eta = profile.eta(t)
            mu, mu1, mu2 = profile.mu_derivatives(t)
        except (ArithmeticError, ValueError) as e:
            raise HypothesisEvaluationError(f"Derivative evaluation failed: {e}", float(t))
        if mu == 0.0:
            ratio1[i] = ratio2[i] = 0.0
            continue
        ratio1[i] = abs(mu1) / (abs(mu) * eta)
        ratio2[i] = abs(mu2) / (abs(mu) * eta ** 2)

    C1, w1 = _fit_constant(ratio1, grid, "|mu'|/(mu eta)")
    C2, w2 = _fit_constant(ratio2, grid, "|mu''|/(mu eta^2)")
    notes = []
    if not profile.analytic:
        notes.append("mu derivatives by central differences, h = 1e-5 (1+t)")

    report = HypothesisReport(
        hypothesis="oscillation",
        label=profile.label,
        satisfied={"k1": C1 <= cap, "k2": C2 <= cap},
        constants={"C1": C1, "C2": C2},
        worst_t={"C1": w1, "C2": w2},
        grid=grid.tolist(),
        notes=notes,
        warnings=profile.normalization_warnings(),
    )
    logger.info(f"Oscillation hypothesis for {profile.label}: C1={C1:.4g}, C2={C2:.4g}")
    return report


# ---------------------------------------------------------------------------
# Family catalogue
# ---------------------------------------------------------------------------

@dataclass(frozen=True)
class SpeedLaw:
    name: str
    a: ScalarFn
    a1: ScalarFn
    a2: ScalarFn
    A: Optional[ScalarFn]
    params: Dict[str, float] = field(default_factory=dict, hash=False)
    log_a: Optional[ScalarFn] = None
    log_A: Optional[ScalarFn] = None
    ratios: Optional[Callable[[float], Tuple[float, float]]] = None

    def eta_derivatives(self, t: float) -> Tuple[float, float, float]:
        if self.A is None and self.log_A is None:
            raise PreconditionError(f"Speed '{self.name}' has no closed primitive; eta-based masses need one")
        if self.log_a is not None and self.log_A is not None:
            eta = math.exp(self.log_a(t) - self.log_A(t))
        else:
            eta = self.a(t) / self.A(t)
        if self.ratios is not None:
            return _eta_from_ratios(eta, *self.ratios(t))
        a = self.a(t)
        return _eta_from_ratios(eta, self.a1(t) / a, self.a2(t) / a)


@dataclass(frozen=True)
class MassLaw:
    name: str
    m: ScalarFn
    m1: Optional[ScalarFn]
    m2: Optional[ScalarFn]
    params: Dict[str, float] = field(default_factory=dict, hash=False)


def unit_speed() -> SpeedLaw:
    return SpeedLaw("unit", lambda t: 1.0, lambda t: 0.0, lambda t: 0.0, lambda t: 1.0 + t)


def polynomial_speed(ell: float) -> SpeedLaw:
    """a = (1+t)^ell, ell > -1."""
    if ell <= -1:
        raise PreconditionError("polynomial speed needs ell > -1 (otherwise a is integrable)")
    return SpeedLaw(
        "polynomial",
        lambda t: (1.0 + t) ** ell,
        lambda t: ell * (1.0 + t) ** (ell - 1.0),
        lambda t: ell * (ell - 1.0) * (1.0 + t) ** (ell - 2.0),
        lambda t: 1.0 + ((1.0 + t) ** (ell + 1.0) - 1.0) / (ell + 1.0),
        {"ell": ell},
    )


def exponential_speed() -> SpeedLaw:
    """a = e^t, so that A = e^t exactly; eta = 1 is kept in log space."""
    return SpeedLaw("exponential", math.exp, math.exp, math.exp, math.exp,
                    log_a=lambda t: t, log_A=lambda t: t, ratios=lambda t: (1.0, 1.0))


def oscillating_speed() -> SpeedLaw:
    """a = 2 + sin(e^t); A = 1 + 2t + Si(e^t) - Si(1)."""
    si1 = special.sici(1.0)[0]
    return SpeedLaw(
        "oscillating",
        lambda t: 2.0 + math.sin(math.exp(t)),
        lambda t: math.exp(t) * math.cos(math.exp(t)),
        lambda t: math.exp(t) * math.cos(math.exp(t)) - math.exp(2.0 * t) * math.sin(math.exp(t)),
        lambda t: 1.0 + 2.0 * t + special.sici(math.exp(t))[0] - si1,
    )


def zero_mass(speed: SpeedLaw) -> MassLaw:
    return MassLaw("zero", lambda t: 0.0, lambda t: 0.0, lambda t: 0.0)


def constant_mass(speed: SpeedLaw, mu0: float = 1.0) -> MassLaw:
    return MassLaw("constant", lambda t: mu0, lambda t: 0.0, lambda t: 0.0, {"mu0": mu0})


def power_mass(speed: SpeedLaw, mu0: float = 1.0, eps: float = 1.0) -> MassLaw:
    """m = mu0 (1+t)^(eps-1)."""
    e = eps - 1.0
    return MassLaw(
        "power",
        lambda t: mu0 * (1.0 + t) ** e,
        lambda t: mu0 * e * (1.0 + t) ** (e - 1.0),
        lambda t: mu0 * e * (e - 1.0) * (1.0 + t) ** (e - 2.0),
        {"mu0": mu0, "eps": eps},
    )


def exp_power_mass(speed: SpeedLaw, mu0: float = 1.0, eps: float = 1.0) -> MassLaw:
    """m = mu0 (1+t)^eps."""
    return MassLaw(
        "exp_power",
        lambda t: mu0 * (1.0 + t) ** eps,
        lambda t: mu0 * eps * (1.0 + t) ** (eps - 1.0),
        lambda t: mu0 * eps * (eps - 1.0) * (1.0 + t) ** (eps - 2.0),
        {"mu0": mu0, "eps": eps},
    )


def power_decay_mass(speed: SpeedLaw, p: float = 2.0, c: float = 1.0) -> MassLaw:
    """m = c (1+t)^(-p)."""
    return MassLaw(
        "power_decay",
        lambda t: c * (1.0 + t) ** (-p),
        lambda t: -c * p * (1.0 + t) ** (-p - 1.0),
        lambda t: c * p * (p + 1.0) * (1.0 + t) ** (-p - 2.0),
        {"p": p, "c": c},
    )


def inverse_linear_mass(speed: SpeedLaw, mu: float = 0.3) -> MassLaw:
    """m = mu/(1+t)."""
    return MassLaw(
        "inverse_linear",
        lambda t: mu / (1.0 + t),
        lambda t: -mu / (1.0 + t) ** 2,
        lambda t: 2.0 * mu / (1.0 + t) ** 3,
        {"mu": mu},
    )


def _mu_times_eta(speed: SpeedLaw, name: str, mu_f: ScalarFn, mu1_f: ScalarFn, mu2_f: ScalarFn,
                  params: Dict[str, float]) -> MassLaw:
    def m(t):
        return mu_f(t) * speed.eta_derivatives(t)[0]

    def m1(t):
        eta, eta1, _ = speed.eta_derivatives(t)
        return mu1_f(t) * eta + mu_f(t) * eta1

    def m2(t):
        eta, eta1, eta2 = speed.eta_derivatives(t)
        return mu2_f(t) * eta + 2.0 * mu1_f(t) * eta1 + mu_f(t) * eta2

    return MassLaw(name, m, m1, m2, params)


def scale_invariant_mass(speed: SpeedLaw, mu: float = 0.3) -> MassLaw:
    """m = mu a/A."""
    return _mu_times_eta(speed, "scale_invariant", lambda t: mu, lambda t: 0.0, lambda t: 0.0, {"mu": mu})


def oscillating_mu_mass(speed: SpeedLaw, base: float = 2.0) -> MassLaw:
    """m = (sin(t^2) + base) eta."""
    return _mu_times_eta(
        speed, "oscillating_mu",
        lambda t: math.sin(t * t) + base,
        lambda t: 2.0 * t * math.cos(t * t),
        lambda t: 2.0 * math.cos(t * t) - 4.0 * t * t * math.sin(t * t),
        {"base": base},
    )


def log_mass(speed: SpeedLaw, mu0: float = 0.5, gamma: float = 0.3) -> MassLaw:
    """m = mu(t)/(e+t) with mu(t) = mu0 ln(e+t)^(-gamma)."""
    E = math.e

    def g(t):
        return math.log(E + t) ** (-gamma)

    def g1(t):
        return -gamma * math.log(E + t) ** (-gamma - 1.0) / (E + t)

    def g2(t):
        L = math.log(E + t)
        return (gamma * (gamma + 1.0) * L ** (-gamma - 2.0) + gamma * L ** (-gamma - 1.0)) / (E + t) ** 2

    return MassLaw(
        "log_mass",
        lambda t: mu0 * g(t) / (E + t),
        lambda t: mu0 * (g1(t) / (E + t) - g(t) / (E + t) ** 2),
        lambda t: mu0 * (g2(t) / (E + t) - 2.0 * g1(t) / (E + t) ** 2 + 2.0 * g(t) / (E + t) ** 3),
        {"mu0": mu0, "gamma": gamma},
    )


def _expression(expr: str) -> ScalarFn:
    code = compile(expr, "<profile-expression>", "eval")
    namespace = {name: getattr(np, name) for name in
                 ("exp", "log", "sin", "cos", "sqrt", "pi", "e", "tanh", "cosh", "sinh", "abs")}

    def f(t: float) -> float:
        return float(eval(code, {"__builtins__": {}}, {**namespace, "t": t}))
    return f


SPEEDS: Dict[str, Callable[..., SpeedLaw]] = {
    "unit": unit_speed,
    "polynomial": polynomial_speed,
    "exponential": exponential_speed,
    "oscillating": oscillating_speed,
}

MASSES: Dict[str, Callable[..., MassLaw]] = {
    "zero": zero_mass,
    "constant": constant_mass,
    "power": power_mass,
    "exp_power": exp_power_mass,
    "power_decay": power_decay_mass,
    "inverse_linear": inverse_linear_mass,
    "scale_invariant": scale_invariant_mass,
    "oscillating_mu": oscillating_mu_mass,
    "log_mass": log_mass,
}

_SPEED_PARAMS = {"polynomial": ("ell",)}
_MASS_PARAMS = {
    "constant": ("mu0",), "power": ("mu0", "eps"), "exp_power": ("mu0", "eps"),
    "power_decay": ("p", "c"), "inverse_linear": ("mu",), "scale_invariant": ("mu",),
    "oscillating_mu": ("base",), "log_mass": ("mu0", "gamma"),
}


def make_profile(speed: SpeedLaw, mass: MassLaw, label: Optional[str] = None) -> CoefficientProfile:
    """Compose a speed law and a mass law into a profile."""
    family = {"speed": speed.name, "mass": mass.name, **speed.params, **mass.params}
    if label is None:
        label = f"{speed.name}/{mass.name}"
    return CoefficientProfile(
        a=speed.a, a1=speed.a1, a2=speed.a2,
        m=mass.m, m1=mass.m1, m2=mass.m2,
        A_closed=speed.A, log_a=speed.log_a, log_A=speed.log_A, speed_ratios=speed.ratios,
        label=label, family=family,
    )


def profile_from_spec(spec: ProfileSpec) -> CoefficientProfile:
    """Build a profile from family names and parameters, including user expressions."""
    params = dict(spec.params)
    if spec.speed == "expression" or spec.mass == "expression":
        return _expression_profile(spec)
    if spec.speed == "scale_invariant":
        from .scaleinv import scale_invariant_profile
        from .models import ScaleInvariantModel
        model = ScaleInvariantModel(alpha=params["alpha"], mu=params.get("mu", 0.0), A0=params.get("A0", 1.0))
        return scale_invariant_profile(model, label=spec.label)
    if spec.speed not in SPEEDS:
        raise PreconditionError(f"Unknown speed family '{spec.speed}'")
    if spec.mass not in MASSES:
        raise PreconditionError(f"Unknown mass family '{spec.mass}'")
    speed_kwargs = {k: float(params[k]) for k in _SPEED_PARAMS.get(spec.speed, ()) if k in params}
    mass_kwargs = {k: float(params[k]) for k in _MASS_PARAMS.get(spec.mass, ()) if k in params}
    speed = SPEEDS[spec.speed](**speed_kwargs)
    mass = MASSES[spec.mass](speed, **mass_kwargs)
    return make_profile(speed, mass, label=spec.label)


def _expression_profile(spec: ProfileSpec) -> CoefficientProfile:
    params = spec.params
    log_fields: Dict[str, Any] = {}
    if spec.speed == "expression":
        a = _expression(str(params["a"]))
        A_closed = _expression(str(params["A"])) if "A" in params else None
        a1 = a2 = None
    else:
        speed = SPEEDS[spec.speed](**{k: float(params[k]) for k in _SPEED_PARAMS.get(spec.speed, ()) if k in params})
        a, a1, a2, A_closed = speed.a, speed.a1, speed.a2, speed.A
        log_fields = {"log_a": speed.log_a, "log_A": speed.log_A, "speed_ratios": speed.ratios}
    if spec.mass == "expression":
        m = _expression(str(params["m"]))
        m1 = m2 = None
    else:
        if spec.speed == "expression":
            raise PreconditionError("Expression speeds pair only with expression masses")
        mass = MASSES[spec.mass](speed, **{k: float(params[k]) for k in _MASS_PARAMS.get(spec.mass, ()) if k in params})
        m, m1, m2 = mass.m, mass.m1, mass.m2
    return CoefficientProfile(
        a=a, a1=a1, a2=a2, m=m, m1=m1, m2=m2, A_closed=A_closed, **log_fields,
        label=spec.label or "expression", family={"speed": spec.speed, "mass": spec.mass, **params},
    )
