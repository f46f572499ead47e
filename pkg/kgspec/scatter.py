"""
Free-wave fundamental solutions, the perturbation Q and the wave operator.

Frames, one mode at a time:
    free wave      U_a  = (i |xi| a v, v_t),   U_a' = [[a'/a, i|xi|a], [i|xi|a, 0]] U_a
    full equation  U_am = (i |xi| a u, u_t),   U_am' = (same + R_am) U_am,
                   R_am = [[0, 0], [i m^2/(|xi| a), 0]]
    Q(t, s) = E_a(t, s)^-1 E_am(t, s) solves D_t Q = P Q with
                   P(t, s) = -i E_a(t, s)^-1 R_am(t) E_a(t, s).
"""
import logging
import math
from dataclasses import dataclass, field
from typing import Callable, List, Optional, Sequence, Tuple

import numpy as np
from numpy.polynomial import chebyshev

from .classify import classify, tail_test
from .coeffs import CoefficientProfile, quad_integral
from .config import settings
from .errors import (
    ConvergenceError,
    PreconditionError,
    SeriesTruncationError,
    ZoneViolationError,
)
from .models import ClassKind, FundamentalKind, ZoneGeometry
from .modes import mode_fundamental
from .zones import h_symbol, separating_time, xi_bracket

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

MatrixFn = Callable[[float], np.ndarray]


@dataclass(frozen=True)
class FundamentalSolution:
    """2x2 complex matrices sampled on [s, times[-1]], identity at s."""
    kind: FundamentalKind
    s: float
    times: np.ndarray
    matrices: np.ndarray
    xi_norm: Optional[float] = None
    truncation_bound: Optional[float] = None
    terms: Optional[int] = None

    @property
    def final(self) -> np.ndarray:
        return self.matrices[-1]

    def at(self, t: float) -> np.ndarray:
        idx = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[idx], t, rel_tol=1e-9, abs_tol=1e-12):
            raise PreconditionError(f"t={t} is not a sample time")
        return self.matrices[idx]


@dataclass(frozen=True)
class WaveOperatorSample:
    """Wave operator restricted to one radial frequency above the cutoff."""
    xi_norm: float
    theta: float
    Q_limit: np.ndarray
    W_plus: np.ndarray
    ladder: np.ndarray
    residual_curve: np.ndarray
    bound_curve: np.ndarray
    last_increment: float
    bound_ratio: float


@dataclass(frozen=True)
class DiscrepancyCurve:
    times: np.ndarray
    discrepancy: np.ndarray
    samples: List[WaveOperatorSample] = field(default_factory=list)


def free_profile(profile: CoefficientProfile) -> CoefficientProfile:
    """Same speed, zero mass."""
    zero = lambda t: 0.0
    return CoefficientProfile(
        a=profile.a, m=zero, a1=profile.a1, a2=profile.a2, m1=zero, m2=zero,
        A_closed=profile.A_closed, label=f"{profile.label}/free",
        family={**profile.family, "mass": "zero"},
    )


def _check_increasing(profile: CoefficientProfile, s: float, t: float, allow_constant_speed: bool):
    for tau in np.linspace(s, max(t, s + 1e-9), 33):
        slope = profile.d_a(float(tau))
        if slope < 0.0 or (slope == 0.0 and not allow_constant_speed):
            raise PreconditionError(f"a is not increasing at t={tau:.4g} (a'={slope:.3g})")


def _bracket_scale(profile: CoefficientProfile, t: float, xi_norm: float) -> np.ndarray:
    """C(t) = diag(<xi>/(|xi| a), 1): U_modes = C U_am."""
    return np.diag([xi_bracket(profile, t, xi_norm) / (xi_norm * profile.a(t)), 1.0]).astype(complex)


def free_wave_fundamental(profile: CoefficientProfile, s: float, t, xi_norm: float,
                          N: Optional[float] = None, tol: Optional[float] = None,
                          allow_constant_speed: bool = False,
                          check_zone: bool = True) -> FundamentalSolution:
    """
    E_a(t, s, xi) for one time or an increasing array of times, integrated
    in the diagonalized frame once (s, xi) is in the hyperbolic zone.
    """
    N = settings.zone_N if N is None else N
    times = np.atleast_1d(np.asarray(t, dtype=float))
    if times[0] < s:
        raise PreconditionError("free_wave_fundamental needs s <= t")
    if xi_norm <= 0:
        raise PreconditionError("xi_norm must be positive")
    if check_zone and profile.A(s) * xi_norm < N:
        raise ZoneViolationError(f"(s={s:g}, |xi|={xi_norm:g}) is outside the hyperbolic zone for N={N:g}")
    _check_increasing(profile, s, float(times[-1]), allow_constant_speed)
    if times[-1] == s:
        mats = np.repeat(np.eye(2, dtype=complex)[None], len(times), axis=0)
    else:
        grid = times if times[0] > s else times[1:]
        sampled = mode_fundamental(free_profile(profile), xi_norm, s, grid, tol=tol, N=N)
        mats = sampled if times[0] > s else np.concatenate([np.eye(2, dtype=complex)[None], sampled])
    return FundamentalSolution(FundamentalKind.FREE_WAVE_EA, s, times, mats, xi_norm=xi_norm)


def full_fundamental(profile: CoefficientProfile, s: float, times: Sequence[float], xi_norm: float,
                     N: Optional[float] = None, tol: Optional[float] = None) -> FundamentalSolution:
    """E_am(t, s, xi) in the U_am frame."""
    times = np.asarray(times, dtype=float)
    grid = times if times[0] > s else times[1:]
    E = mode_fundamental(profile, xi_norm, s, grid, tol=tol, N=N)
    C_s = _bracket_scale(profile, s, xi_norm)
    mats = np.array([np.linalg.solve(_bracket_scale(profile, float(tt), xi_norm), Ej @ C_s)
                     for tt, Ej in zip(grid, E)])
    if times[0] == s:
        mats = np.concatenate([np.eye(2, dtype=complex)[None], mats])
    return FundamentalSolution(FundamentalKind.COMPOSED_EAM, s, times, mats, xi_norm=xi_norm)


def perturbation_Q(profile: CoefficientProfile, s: float, times: Sequence[float], xi_norm: float,
                   N: Optional[float] = None, tol: Optional[float] = None,
                   allow_constant_speed: bool = False) -> FundamentalSolution:
    """Q(t, s) = E_a(t, s)^-1 E_am(t, s)."""
    times = np.asarray(times, dtype=float)
    Ea = free_wave_fundamental(profile, s, times, xi_norm, N=N, tol=tol,
                               allow_constant_speed=allow_constant_speed)
    Eam = full_fundamental(profile, s, times, xi_norm, N=N, tol=tol)
    mats = np.array([np.linalg.solve(a, b) for a, b in zip(Ea.matrices, Eam.matrices)])
    return FundamentalSolution(FundamentalKind.PERTURBATION_Q, s, times, mats, xi_norm=xi_norm)


def R_am(profile: CoefficientProfile, t: float, xi_norm: float) -> np.ndarray:
    return np.array([[0.0, 0.0], [1j * profile.m(t) ** 2 / (xi_norm * profile.a(t)), 0.0]])


def perturbation_P(profile: CoefficientProfile, s: float, t: float, xi_norm: float,
                   N: Optional[float] = None, tol: Optional[float] = None,
                   allow_constant_speed: bool = False) -> np.ndarray:
    """P(t, s) = -i E_a(t, s)^-1 R_am(t) E_a(t, s)."""
    E = free_wave_fundamental(profile, s, t, xi_norm, N=N, tol=tol,
                              allow_constant_speed=allow_constant_speed).final
    return -1j * np.linalg.solve(E, R_am(profile, t, xi_norm) @ E)


def peano_baker(P_values: MatrixFn, s: float, t: float, K_terms: int, tol: Optional[float] = None,
                n_nodes: int = 48) -> FundamentalSolution:
    """
    Truncated series Q = I + sum_k i^k int...int P...P on Chebyshev nodes.

    The iterated integrals are built by repeated spectral integration, the
    reported bound is L^(K+1)/(K+1)! e^L with L = int ||P||.
    """
    if K_terms < 1:
        raise PreconditionError("K_terms must be at least 1")
    if t <= s:
        raise PreconditionError("peano_baker needs s < t")
    x = np.cos(np.pi * np.arange(n_nodes + 1) / n_nodes)[::-1]
    taus = s + 0.5 * (t - s) * (x + 1.0)
    P = np.array([np.asarray(P_values(float(tau)), dtype=complex) for tau in taus])
    half = 0.5 * (t - s)

    def cumulative(G: np.ndarray) -> np.ndarray:
        flat = G.reshape(len(taus), -1)
        stacked = np.hstack([flat.real, flat.imag])
        coef = chebyshev.chebfit(x, stacked, n_nodes)
        integral = chebyshev.chebval(x, chebyshev.chebint(coef, lbnd=-1.0)).T * half
        k = flat.shape[1]
        return (integral[:, :k] + 1j * integral[:, k:]).reshape(G.shape)

    term = np.repeat(np.eye(2, dtype=complex)[None], len(taus), axis=0)
    total = term.copy()
    for _ in range(K_terms):
        term = cumulative(1j * np.einsum("nij,njk->nik", P, term))
        total = total + term
    L = float(cumulative(np.linalg.norm(P, ord=2, axis=(1, 2)).astype(complex)).real[-1])
    bound = L ** (K_terms + 1) / math.factorial(K_terms + 1) * math.exp(L)
    if tol is not None and bound > tol:
        logger.error(f"Peano-Baker bound {bound:.3g} exceeds tol {tol:.3g} with K={K_terms}")
        raise SeriesTruncationError(bound, tol, K_terms)
    return FundamentalSolution(FundamentalKind.PERTURBATION_Q, s, taus, total,
                               truncation_bound=bound, terms=K_terms)


def tail_bound(profile: CoefficientProfile, t: float, T_max: float) -> float:
    """int_t^inf (A/a) m^2 from quadrature to T_max plus a power-law tail."""
    f = lambda tau: profile.A(tau) / profile.a(tau) * profile.m(tau) ** 2
    if t >= T_max:
        return 0.0
    body = quad_integral(f, t, T_max)
    p = tail_test(f, T_max)["slope"]
    extra = f(T_max) * T_max / (-p - 1.0) if math.isfinite(p) and p < -1.0 else 0.0
    return body + extra


def liouville_ratio(E: FundamentalSolution, profile: CoefficientProfile) -> np.ndarray:
    """|det E_a(t, s)| / (a(t)/a(s)) per sample."""
    dets = np.abs(np.linalg.det(E.matrices))
    a_s = profile.a(E.s)
    return dets / np.array([profile.a(float(tt)) / a_s for tt in E.times])


def cocycle_defect(profile: CoefficientProfile, xi_norm: float, r: float, s: float, t: float,
                   N: Optional[float] = None, tol: Optional[float] = None,
                   allow_constant_speed: bool = False) -> float:
    """||E_a(t,s) E_a(s,r) - E_a(t,r)|| / ||E_a(t,r)||."""
    kw = dict(N=N, tol=tol, allow_constant_speed=allow_constant_speed)
    E_sr = free_wave_fundamental(profile, r, s, xi_norm, **kw).final
    E_ts = free_wave_fundamental(profile, s, t, xi_norm, **kw).final
    E_tr = free_wave_fundamental(profile, r, t, xi_norm, **kw).final
    return float(np.linalg.norm(E_ts @ E_sr - E_tr) / np.linalg.norm(E_tr))


def h_normalization(profile: CoefficientProfile, xi_norm: float, times: Sequence[float],
                    N: Optional[float] = None) -> np.ndarray:
    """h(t, xi)/(|xi| a(t)), tending to 1 in the hyperbolic zone."""
    N = settings.zone_N if N is None else N
    return np.array([h_symbol(profile, float(t), xi_norm, N) / (xi_norm * profile.a(float(t)))
                     for t in times])


def additional_constant(profile: CoefficientProfile, T_max: float, n_samples: int = 48) -> Tuple[float, float]:
    """
    sup of sqrt(a) int_0^t sqrt(a) / A over a sample grid.

    Returns (constant, worst t).
    """
    grid = np.geomspace(1e-2, T_max, n_samples)
    root = lambda tau: math.sqrt(profile.a(tau))
    values = []
    lo, acc = 0.0, 0.0
    for t in grid:
        acc += quad_integral(root, lo, float(t))
        lo = float(t)
        values.append(root(float(t)) * acc / profile.A(float(t)))
    values = np.array(values)
    k = int(np.argmax(values))
    return float(values[k]), float(grid[k])


def _require_scattering(profile: CoefficientProfile, T_max: float = 1e4):
    result = classify(profile, T_max=T_max)
    if result.kind != ClassKind.SCATTERING:
        raise PreconditionError(f"{profile.label} is classified {result.kind}, not Scattering")
    return result


def wave_operator(profile: CoefficientProfile, xi_norm: float, epsilon_cutoff: float,
                  tol: Optional[float] = None, N: Optional[float] = None,
                  ladder: Optional[Sequence[float]] = None, horizon: Optional[float] = None,
                  allow_constant_speed: bool = False, require_class: bool = True,
                  ode_tol: Optional[float] = None) -> WaveOperatorSample:
    """
    Q(inf, theta, xi) from an increasing time ladder and W_+ for one mode.

    W_+ maps (i<xi>(0) u0, u1) to (i|xi|a(0) v0, v1) of the free mode that
    the solution approaches.
    """
    N = settings.zone_N if N is None else N
    tol = 1e-6 if tol is None else tol
    if not (epsilon_cutoff > 0 and xi_norm >= epsilon_cutoff):
        raise PreconditionError("xi_norm must be at least the positive cutoff")
    if require_class:
        _require_scattering(profile)
    theta = separating_time(ZoneGeometry(N=N), profile, xi_norm)
    if horizon is None:
        horizon = max(10.0 * (1.0 + theta), 1e3)
    if ladder is None:
        ladder = np.geomspace(1.0 + theta, 1.0 + horizon, 40) - 1.0
    ladder = np.asarray(ladder, dtype=float)
    ladder = np.concatenate([[theta], ladder[ladder > theta]])
    if len(ladder) < 3:
        raise PreconditionError("the time ladder needs at least two points past theta")

    Q = perturbation_Q(profile, theta, ladder, xi_norm, N=N, tol=ode_tol,
                       allow_constant_speed=allow_constant_speed).matrices
    increments = np.linalg.norm(np.diff(Q, axis=0), ord=2, axis=(1, 2))
    last = float(increments[-1])
    if last >= tol:
        logger.error(f"Wave operator at |xi|={xi_norm:g} did not converge: last increment {last:.3g}")
        raise ConvergenceError(f"Q(t, theta) not converged by t={ladder[-1]:g}", last)
    Q_limit = Q[-1]
    residual = np.linalg.norm(Q - Q_limit, ord=2, axis=(1, 2))
    bound = np.array([tail_bound(profile, float(t), max(10.0 * float(t), 1e4)) for t in ladder])
    usable = (bound > 0) & (np.arange(len(ladder)) < len(ladder) - 1)
    ratio = float(np.max(residual[usable] / bound[usable])) if np.any(usable) else 0.0

    # W_+ = E_a(0, theta) Q_inf C(theta)^-1 E_modes(theta, 0)
    if theta > 0.0:
        E_free = free_wave_fundamental(profile, 0.0, theta, xi_norm, N=N, tol=ode_tol,
                                       allow_constant_speed=True, check_zone=False).final
        E_full = mode_fundamental(profile, xi_norm, 0.0, [theta], tol=ode_tol, N=N)[-1]
    else:
        E_free = np.eye(2, dtype=complex)
        E_full = np.eye(2, dtype=complex)
    W = np.linalg.solve(E_free, Q_limit @ np.linalg.solve(_bracket_scale(profile, theta, xi_norm), E_full))
    logger.info(f"Wave operator at |xi|={xi_norm:g}: theta={theta:.4g}, last increment {last:.3g}")
    return WaveOperatorSample(
        xi_norm=float(xi_norm), theta=float(theta), Q_limit=Q_limit, W_plus=W, ladder=ladder,
        residual_curve=residual, bound_curve=bound, last_increment=last, bound_ratio=ratio,
    )


def band_residual(samples: Sequence[WaveOperatorSample], times: Sequence[float]) -> np.ndarray:
    """
    sup over the frequencies already in the hyperbolic zone of
    ||Q(t) - Q_inf||, on ladder points shared by the samples.
    """
    out = []
    for t in times:
        values = []
        for sample in samples:
            if sample.theta <= t < sample.ladder[-1]:
                idx = np.flatnonzero(np.isclose(sample.ladder, t, rtol=1e-12, atol=0.0))
                if len(idx):
                    values.append(sample.residual_curve[idx[0]])
        out.append(max(values) if values else np.nan)
    return np.array(out)


def asymptotic_equivalence(profile: CoefficientProfile, data: Callable[[float], Tuple[complex, complex]],
                           xi_grid: Sequence[float], t_ladder: Sequence[float],
                           weights: Optional[Sequence[float]] = None, epsilon_cutoff: Optional[float] = None,
                           symbol: str = "bracket", N: Optional[float] = None, tol: Optional[float] = None,
                           allow_constant_speed: bool = False, require_class: bool = True,
                           ode_tol: Optional[float] = None) -> DiscrepancyCurve:
    """
    t -> a(t)^(-1/2) || (a grad v, v_t) - (<D(t)> u, u_t) || over the radial
    grid, with v the free wave whose data is W_+ applied to the data of u.
    symbol 'h' replaces <xi>_{a,m} by h(t, xi).
    """
    N = settings.zone_N if N is None else N
    xi_grid = np.asarray(xi_grid, dtype=float)
    times = np.asarray(t_ladder, dtype=float)
    weights = np.ones(len(xi_grid)) if weights is None else np.asarray(weights, dtype=float)
    epsilon_cutoff = float(xi_grid.min()) if epsilon_cutoff is None else epsilon_cutoff
    if symbol not in ("bracket", "h"):
        raise PreconditionError(f"unknown symbol: {symbol}")
    if require_class:
        _require_scattering(profile)
    free = free_profile(profile)
    total = np.zeros(len(times))
    samples = []
    for w, xi in zip(weights, xi_grid):
        sample = wave_operator(profile, float(xi), epsilon_cutoff, tol=tol, N=N,
                               horizon=max(float(times[-1]), 1e3),
                               allow_constant_speed=allow_constant_speed, require_class=False,
                               ode_tol=ode_tol)
        samples.append(sample)
        u0, u1 = data(float(xi))
        U0 = np.array([1j * xi_bracket(profile, 0.0, xi) * u0, u1])
        V0 = sample.W_plus @ U0
        E_u = mode_fundamental(profile, float(xi), 0.0, times, tol=ode_tol, N=N)
        E_v = mode_fundamental(free, float(xi), 0.0, times, tol=ode_tol, N=N)
        for j, t in enumerate(times):
            U = E_u[j] @ U0
            V = E_v[j] @ V0
            if symbol == "h":
                U = U.copy()
                U[0] *= h_symbol(profile, float(t), xi, N) / xi_bracket(profile, float(t), xi)
            total[j] += w * float(np.sum(np.abs(V - U) ** 2)) / profile.a(float(t))
    logger.info(f"Asymptotic equivalence over {len(xi_grid)} modes to t={times[-1]:g}")
    return DiscrepancyCurve(times=times, discrepancy=np.sqrt(total), samples=samples)
