"""
Zones of the extended phase space and the refined diagonalizer.

Conventions for one mode with U = (i<xi> u, u_t):

    U' = (i <xi> J + r E11) U,   r = d<xi>/<xi>,  J = [[0, 1], [1, 0]].

T = [[1, 1], [1, -1]]/sqrt(2) turns i<xi>J into i<xi> diag(1, -1) and r E11
into r/2 [[1, 1], [1, 1]]. The refined diagonalizer K = I + K1 removes the
off-diagonal part of the latter to first order.
"""
import logging
import math
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import optimize

from .coeffs import CoefficientProfile, primitive, quad_integral
from .config import settings
from .errors import BracketError, DiagonalizerError, PreconditionError, ZoneViolationError
from .models import SymbolValues, ZoneGeometry, ZoneVariant

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

T_SCAN_LIMIT = 1e12
SQRT_HALF = math.sqrt(0.5)
T_MATRIX = SQRT_HALF * np.array([[1.0, 1.0], [1.0, -1.0]], dtype=complex)


def _symbol(profile: CoefficientProfile, t: float, xi: float) -> Tuple[float, float, float]:
    """g = xi^2 a^2 + m^2 with g' and g''."""
    a, a1, a2 = profile.a(t), profile.d_a(t), profile.dd_a(t)
    m, m1, m2 = profile.m(t), profile.d_m(t), profile.dd_m(t)
    x2 = xi * xi
    g = x2 * a * a + m * m
    g1 = 2.0 * (x2 * a * a1 + m * m1)
    g2 = 2.0 * (x2 * (a1 * a1 + a * a2) + m1 * m1 + m * m2)
    return g, g1, g2


def xi_bracket(profile: CoefficientProfile, t: float, xi: float) -> float:
    """<xi>_{a,m}(t) = (xi^2 a^2 + m^2)^(1/2)."""
    return math.sqrt(_symbol(profile, t, xi)[0])


def d_xi_bracket(profile: CoefficientProfile, t: float, xi: float) -> float:
    """(xi^2 a a' + m m')/<xi>, from the analytic profile derivatives."""
    g, g1, _ = _symbol(profile, t, xi)
    return g1 / (2.0 * math.sqrt(g))


def k_coefficients(profile: CoefficientProfile, t: float, xi: float) -> Tuple[float, float, float, float]:
    """(<xi>, r, k, k') with r = d<xi>/<xi>, k = d<xi>/<xi>^2."""
    g, g1, g2 = _symbol(profile, t, xi)
    if g <= 0.0:
        raise PreconditionError(f"<xi> vanishes at t={t}, |xi|={xi}")
    sg = math.sqrt(g)
    k = g1 / (2.0 * g * sg)
    k1 = g2 / (2.0 * g * sg) - 3.0 * g1 * g1 / (4.0 * g * g * sg)
    return sg, g1 / (2.0 * g), k, k1


def h_symbol(profile: CoefficientProfile, t: float, xi: float, N: float) -> float:
    """h(t, xi) = (xi^2 a^2 + N^2 eta^2)^(1/2)."""
    return math.sqrt((xi * profile.a(t)) ** 2 + (N * profile.eta(t)) ** 2)


def symbol_values(profile: CoefficientProfile, t: float, xi_norm: float, N: float) -> SymbolValues:
    g, g1, _ = _symbol(profile, t, xi_norm)
    return SymbolValues(
        t=t, xi_norm=xi_norm,
        xi_bracket=math.sqrt(g),
        d_xi_bracket=g1 / (2.0 * math.sqrt(g)) if g > 0 else 0.0,
        h=h_symbol(profile, t, xi_norm, N),
    )


def _expand_bracket(F, t0: float = 0.0, t1: float = 1.0) -> Optional[Tuple[float, float]]:
    """Doubling search for a sign change of F from negative to nonnegative."""
    lo, hi = t0, max(t1, t0 + 1.0)
    while hi <= T_SCAN_LIMIT:
        try:
            value = F(hi)
        except OverflowError:
            value = math.inf
        if not math.isfinite(value):
            # shrink back into the representable range
            mid = 0.5 * (lo + hi)
            if mid - lo < 1e-9:
                return None
            hi = mid
            continue
        if value >= 0.0:
            return lo, hi
        lo, hi = hi, 2.0 * hi
    return None


def separating_time(geom: ZoneGeometry, profile: CoefficientProfile, xi_norm: float,
                    T_max: Optional[float] = None) -> float:
    """
    theta_|xi|: the time the mode enters the hyperbolic zone.

    wavefront: A(theta) = N/|xi|; 0 for |xi| >= N, inf for xi = 0.
    effective: first root of A^2 |xi|^2 + mu^2 = N^2 below T_max, inf if none.
    """
    if xi_norm < 0:
        raise PreconditionError("xi_norm must be nonnegative")
    N = geom.N
    if geom.variant == ZoneVariant.WAVEFRONT:
        if xi_norm == 0.0:
            return math.inf
        target = N / xi_norm
        if target <= primitive(profile, 0.0):
            return 0.0

        def F(t):
            return primitive(profile, t) - target

        bracket = _expand_bracket(F)
        if bracket is None:
            raise BracketError(geom.variant.value, xi_norm, f"A(t) stays below N/|xi| = {target:.6g}")
        return float(optimize.brentq(F, bracket[0], bracket[1], xtol=1e-10, rtol=4 * np.finfo(float).eps))

    T_max = 1e6 if T_max is None else T_max

    def G(t):
        return (primitive(profile, t) * xi_norm) ** 2 + profile.mu(t) ** 2 - N * N

    if G(0.0) >= 0.0:
        return 0.0
    scan = np.concatenate([[0.0], np.geomspace(1e-3, T_max, 400)])
    previous = 0.0
    for t in scan[1:]:
        if G(float(t)) >= 0.0:
            try:
                return float(optimize.brentq(G, previous, float(t), xtol=1e-10))
            except ValueError as e:
                raise BracketError(geom.variant.value, xi_norm, str(e))
        previous = float(t)
    return math.inf


def zone_of(geom: ZoneGeometry, profile: CoefficientProfile, t: float, xi_norm: float) -> str:
    """'hyp' or 'pd' for the point (t, |xi|)."""
    if geom.variant == ZoneVariant.WAVEFRONT:
        return "hyp" if primitive(profile, t) * xi_norm >= geom.N else "pd"
    ratio = xi_bracket(profile, t, xi_norm) / profile.eta(t)
    return "hyp" if ratio >= geom.N else "pd"


def is_pd_compact(geom: ZoneGeometry, profile: CoefficientProfile, T_max: float,
                  xi_grid: Optional[Sequence[float]] = None) -> Tuple[bool, float]:
    """
    Effective variant: the pseudo-differential zone is compact when every
    |xi| <= N (including 0) reaches the hyperbolic zone before T_max.

    Returns (compact, largest separating time).
    """
    if xi_grid is None:
        xi_grid = np.concatenate([[0.0], np.geomspace(1e-3, geom.N, 20)])
    thetas = [separating_time(geom, profile, float(x), T_max) for x in xi_grid]
    worst = max(thetas)
    return math.isfinite(worst), worst


def k1_matrix(k: float) -> np.ndarray:
    """K1 = (k/(4i)) [[0, -1], [1, 0]]."""
    c = k / 4j
    return np.array([[0.0, -c], [c, 0.0]], dtype=complex)


def diagonalizer_matrices(profile: CoefficientProfile, t: float, xi_norm: float, N: float,
                          det_floor: Optional[float] = None,
                          check_zone: bool = False) -> Tuple[np.ndarray, np.ndarray, float]:
    """
    K = I + K1, its inverse and the remainder scale eta^2/<xi>.

    det K = 1 - k^2/16 must stay above det_floor, otherwise N is too small.
    """
    det_floor = settings.det_floor if det_floor is None else det_floor
    xb, _, k, _ = k_coefficients(profile, t, xi_norm)
    if check_zone and xb / profile.eta(t) < N:
        raise ZoneViolationError(f"(t={t:.4g}, |xi|={xi_norm:.4g}) is not in the hyperbolic zone for N={N:g}")
    det = 1.0 - k * k / 16.0
    if abs(det) < det_floor:
        logger.error(f"Refined diagonalizer degenerate: det K = {det:.4g}")
        raise DiagonalizerError(det, N)
    K = np.eye(2, dtype=complex) + k1_matrix(k)
    c = k / 4j
    K_inv = np.array([[1.0, c], [-c, 1.0]], dtype=complex) / det
    return K, K_inv, profile.eta(t) ** 2 / xb


def remainder_R2(profile: CoefficientProfile, t: float, xi_norm: float) -> np.ndarray:
    """
    R2 = K^-1 (B K1 - K1') with B = (r/2)[[0, 1], [1, 0]], the remainder of
    the refined diagonalization in the d/dt form.
    """
    _, r, k, k1 = k_coefficients(profile, t, xi_norm)
    c = k / 4j
    c1 = k1 / 4j
    det = 1.0 + c * c
    half_r = 0.5 * r
    return np.array([
        [half_r * c - c * c1, c1 - half_r * c * c],
        [-half_r * c * c - c1, -c * c1 - half_r * c],
    ], dtype=complex) / det


def phase(profile: CoefficientProfile, s: float, t: float, xi_norm: float) -> float:
    """int_s^t <xi>_{a,m} by adaptive quadrature."""
    if t < s:
        raise PreconditionError("phase needs s <= t")
    if t == s:
        return 0.0
    return quad_integral(lambda tau: xi_bracket(profile, tau, xi_norm), s, t)


def phase_matrix(profile: CoefficientProfile, s: float, t: float, xi_norm: float) -> np.ndarray:
    """diag(exp(-i Phi), exp(i Phi)) with Phi = int_s^t <xi>."""
    phi = phase(profile, s, t, xi_norm)
    return np.diag([np.exp(-1j * phi), np.exp(1j * phi)])
