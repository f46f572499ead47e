"""
Scale-invariant models a'/a = alpha a/A, m = mu a/A.

With tau + 1 = A(t) the equation becomes the damped wave

    v_tt - Lap v + alpha/(1+tau) v_t + mu^2/(1+tau)^2 v = 0,

and delta = (alpha - 1)^2 - 4 mu^2 decides which secondary transform applies.
Rates are predicted for squared norms in the clock A = 1 + tau and converted
to (1+t) or t afterwards.
"""
import logging
import math
from typing import Callable, Dict, Optional, Sequence, Tuple

import numpy as np
from scipy import integrate

from .coeffs import CoefficientProfile
from .config import settings
from .errors import PreconditionError
from .fitting import fit_rate
from .models import (
    LqPrediction,
    RateModel,
    RatePrediction,
    RateVerification,
    ScaleInvariantModel,
    TransformedProblem,
    XiGridSpec,
)
from .modes import assemble_energies, mode_sweep, radial_grid

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

EQ_TOL = 1e-12


def scale_invariant_profile(model: ScaleInvariantModel, label: Optional[str] = None) -> CoefficientProfile:
    """
    Closed forms with a(0) = 1 and A(0) = A0:

        alpha < 1:  A = B^(1/(1-alpha)),  B = A0^(1-alpha) + (1-alpha) A0^(-alpha) t
        alpha = 1:  A = A0 e^(t/A0)
    """
    alpha, mu, A0 = model.alpha, model.mu, model.A0
    family = {"speed": "scale_invariant", "mass": "scale_invariant", "alpha": alpha, "mu": mu, "A0": A0}
    label = label or f"scale_invariant(alpha={alpha:g}, mu={mu:g})"
    if alpha == 1.0:
        rate = 1.0 / A0
        m0 = mu * rate
        return CoefficientProfile(
            a=lambda t: math.exp(rate * t),
            a1=lambda t: rate * math.exp(rate * t),
            a2=lambda t: rate * rate * math.exp(rate * t),
            m=lambda t: m0, m1=lambda t: 0.0, m2=lambda t: 0.0,
            A_closed=lambda t: A0 * math.exp(rate * t),
            label=label, family=family,
        )

    beta = 1.0 - alpha
    c = A0 ** (-alpha)

    def B(t):
        return A0 ** beta + beta * c * t

    return CoefficientProfile(
        a=lambda t: c * B(t) ** (alpha / beta),
        a1=lambda t: alpha * c * c * B(t) ** ((2.0 * alpha - 1.0) / beta),
        a2=lambda t: alpha * (2.0 * alpha - 1.0) * c ** 3 * B(t) ** ((3.0 * alpha - 2.0) / beta),
        m=lambda t: mu * c / B(t),
        m1=lambda t: -mu * beta * c * c / B(t) ** 2,
        m2=lambda t: 2.0 * mu * beta * beta * c ** 3 / B(t) ** 3,
        A_closed=lambda t: B(t) ** (1.0 / beta),
        label=label, family=family,
    )


def transform_to_dissipative(model: ScaleInvariantModel) -> TransformedProblem:
    """
    delta < 0:  w = (1+tau)^(alpha/2) v, no damping, potential (1-delta)/4.
    delta >= 0: v = (1+tau)^sigma w, sigma = (1-alpha)/2 + sqrt(delta)/2,
                damping (1+sqrt(delta))/(1+tau), no potential.
    Coefficients are those of 1/(1+tau) and 1/(1+tau)^2.
    """
    delta = model.delta
    base = dict(damping=model.alpha, potential=model.mu ** 2, tau0=model.A0 - 1.0)
    if delta < 0:
        sigma = (1.0 - delta) / 4.0
        return TransformedProblem(**base, branch="oscillatory", sigma=sigma,
                                  w_exponent=-model.alpha / 2.0, w_damping=0.0, w_potential=sigma)
    sigma = (1.0 - model.alpha) / 2.0 + math.sqrt(delta) / 2.0
    notes = ["delta = 0: the two roots coincide, v carries a logarithmic partner"] if delta == 0 else []
    return TransformedProblem(**base, branch="dissipative", sigma=sigma, w_exponent=sigma,
                              w_damping=1.0 + math.sqrt(delta), w_potential=0.0, notes=notes)


def transform_data(model: ScaleInvariantModel, u0: complex, u1: complex) -> Dict[str, Tuple[complex, complex]]:
    """
    Data at tau0 for v (v = u, v_tau = u_t/a(0)) and for w, with
    v = (1+tau)^e w where e is the w_exponent of the transform.
    """
    problem = transform_to_dissipative(model)
    e = problem.w_exponent
    base = model.A0
    v0, v1 = u0, u1
    w0 = base ** (-e) * v0
    w1 = base ** (-e) * (v1 - e * v0 / base)
    return {"v": (v0, v1), "w": (w0, w1)}


def transformed_mode(model: ScaleInvariantModel, xi_norm: float, data: Tuple[complex, complex],
                     times: Sequence[float], tol: Optional[float] = None) -> np.ndarray:
    """
    u(t) for one mode obtained from the w equation

        w'' + d/(1+tau) w' + (xi^2 + p/(1+tau)^2) w = 0

    and mapped back through v = (1+tau)^e w, tau = A(t) - 1.
    """
    tol = settings.ode_rtol if tol is None else tol
    problem = transform_to_dissipative(model)
    profile = scale_invariant_profile(model)
    taus = np.array([profile.A(float(t)) - 1.0 for t in times])
    w0, w1 = transform_data(model, *data)["w"]
    d, p, e = problem.w_damping, problem.w_potential, problem.w_exponent

    def rhs(tau, y):
        s = 1.0 + tau
        return np.array([y[1], -d / s * y[1] - (xi_norm ** 2 + p / s ** 2) * y[0]])

    sol = integrate.solve_ivp(rhs, (problem.tau0, float(taus[-1])), np.array([w0, w1], dtype=complex),
                              method="DOP853", t_eval=taus, rtol=tol, atol=tol * 1e-3)
    return (1.0 + taus) ** e * sol.y[0]


def _lq_case(model: ScaleInvariantModel, q: float, kappa: float, n: int) -> LqPrediction:
    """Branch of the L^q improvement; exponents for ||u||^2 in the clock A."""
    delta, alpha = model.delta, model.alpha
    if q == 2.0:
        return LqPrediction(branch="L2", q=q, kappa=kappa, n=n, exponent=_potential(model)[0],
                            log_power=_potential(model)[1])
    gain = (2.0 - q) / q
    critical = q / (2.0 - q)
    if delta <= 0:
        log_power = 2.0 if delta == 0 else 0.0
        if math.isclose(n, critical, rel_tol=0.0, abs_tol=EQ_TOL):
            return LqPrediction(branch="delta<=0", q=q, kappa=kappa, n=n, exponent=-alpha,
                                log_power=log_power + gain, d_factor=f"log^{gain / 2:g}")
        if n < critical:
            exponent, power = _potential(model)
            return LqPrediction(branch="uncovered", q=q, kappa=kappa, n=n, exponent=exponent,
                                log_power=power, d_factor="n below q/(2-q)")
        return LqPrediction(branch="delta<=0", q=q, kappa=kappa, n=n, exponent=-alpha, log_power=log_power)
    lhs = 1.0 + math.sqrt(delta)
    rhs = gain * n + 2.0 * kappa
    if math.isclose(lhs, rhs, rel_tol=0.0, abs_tol=EQ_TOL):
        return LqPrediction(branch="balanced", q=q, kappa=kappa, n=n, exponent=-alpha, log_power=2.0 * gain)
    if lhs > rhs:
        exponent = -2.0 * kappa - gain * n + 1.0 - alpha + math.sqrt(delta)
        return LqPrediction(branch="slow_damping", q=q, kappa=kappa, n=n, exponent=exponent)
    return LqPrediction(branch="fast_damping", q=q, kappa=kappa, n=n, exponent=-alpha)


def _potential(model: ScaleInvariantModel) -> Tuple[float, float]:
    delta, alpha = model.delta, model.alpha
    if delta < 0:
        return 1.0 - alpha, 0.0
    if delta == 0:
        return 1.0 - alpha, 2.0
    return 1.0 - alpha + math.sqrt(delta), 0.0


def predict_rates(model: ScaleInvariantModel, q: float = 2.0, kappa: float = 0.0, n: int = 1) -> RatePrediction:
    """
    Exponents in A for ||u||^2 and ||u_t||^2 + a^2 ||grad u||^2:

        potential: delta < 0: 1 - alpha;  delta = 0: 1 - alpha with ln^2;
                   delta > 0: 1 - alpha + sqrt(delta)
        kinetic:   delta < 1: alpha;  delta >= 1: alpha - 1 + sqrt(delta)
        energy (delta < 0): alpha
    """
    if not 1.0 <= q <= 2.0:
        raise PreconditionError(f"q must lie in [1, 2], got {q}")
    if not 0.0 <= kappa <= 1.0:
        raise PreconditionError(f"kappa must lie in [0, 1], got {kappa}")
    if n < 1:
        raise PreconditionError(f"dimension must be positive, got {n}")
    delta, alpha = model.delta, model.alpha
    flags = []
    potential, log_power = _potential(model)
    if delta < 1:
        kinetic = alpha
    else:
        kinetic = alpha - 1.0 + math.sqrt(delta)
        if alpha == 0.0:
            flags.append("alpha = 0 on the delta >= 1 kinetic branch: exponent taken in the A clock")
            logger.warning(f"Kinetic rate requested at alpha = 0 with delta = {delta:g}")
    energy = alpha if delta < 0 else None
    if alpha < 1.0:
        time_model, time_scale = RateModel.POWER, 1.0 / (1.0 - alpha)
    else:
        time_model, time_scale = RateModel.EXP, 1.0 / model.A0
    prediction = RatePrediction(
        alpha=alpha, mu=model.mu, delta=delta,
        potential_exponent=potential, potential_log_power=log_power,
        kinetic_exponent=kinetic, energy_exponent=energy,
        time_model=time_model, time_scale=time_scale,
        lq_case=_lq_case(model, q, kappa, n), flags=flags,
    )
    logger.info(f"Rates for alpha={alpha:g}, mu={model.mu:g}: potential {potential:g}, kinetic {kinetic:g} (A clock)")
    return prediction


def _paired_data(xi_norm: float) -> Tuple[complex, complex]:
    g = math.exp(-0.5 * xi_norm ** 2)
    return complex(g), complex(g)


def verify_rates(model: ScaleInvariantModel, prediction: RatePrediction, t_max: float,
                 xi_grid: Optional[XiGridSpec] = None, n_times: int = 200, tol: Optional[float] = None,
                 tolerance: float = 0.05,
                 data: Callable[[float], Tuple[complex, complex]] = _paired_data) -> RateVerification:
    """
    Mode sweep on the model's profile and final-decade fits against log A(t).

    log A is linear in t for alpha = 1, so the same fit covers exponential
    speeds. The radial grid always contains |xi| = 0, the frequency that
    carries the potential-energy bound.
    """
    xi_grid = xi_grid or XiGridSpec(kind="uniform", count=64, xi_min=0.0, xi_max=10.0)
    xi, weights = radial_grid(xi_grid)
    if xi[0] != 0.0:
        xi = np.concatenate([[0.0], xi])
        weights = np.concatenate([[weights[0]], weights])
    profile = scale_invariant_profile(model)
    times = np.concatenate([[0.0], np.geomspace(t_max / 1000.0, t_max, n_times)])
    trajectories = mode_sweep(profile, xi, t_max, data=data, times=times, tol=tol)
    energies = assemble_energies(trajectories, profile, weights)
    clock = np.array([profile.A(float(t)) for t in times])
    # tolerance is given for time exponents
    tolerance = tolerance / prediction.time_scale

    fits = {}
    potential_model = RateModel.POWER_LOG if prediction.potential_log_power else RateModel.POWER
    fits["potential"] = fit_rate(times, energies.u_L2, potential_model, prediction.potential_exponent,
                                 tolerance, log_power=prediction.potential_log_power, clock=clock)
    fits["kinetic"] = fit_rate(times, energies.kinetic, RateModel.POWER, prediction.kinetic_exponent,
                               tolerance, clock=clock)
    if prediction.energy_exponent is not None:
        fits["energy"] = fit_rate(times, energies.E_eff, RateModel.POWER, prediction.energy_exponent,
                                  tolerance, clock=clock)
    verification = RateVerification(prediction=prediction, fits=fits, horizon=t_max, n_modes=len(xi))
    logger.info(f"Rate verification for {profile.label}: passed={verification.passed}")
    return verification
