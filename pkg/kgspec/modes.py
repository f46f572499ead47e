"""
Per-frequency integration of u_tt + <xi>_{a,m}(t)^2 u = 0 and energy assembly.

Inside the hyperbolic zone the slowly varying variable Z of the refined
diagonalization is integrated instead of the oscillating mode, and U is
rebuilt through T, the amplitude factor, K and the phase matrix.
"""
import logging
import math
from dataclasses import dataclass
from typing import Callable, List, Optional, Sequence, Tuple, Union

import numpy as np
from scipy import integrate, interpolate

from .classify import PsiProfile
from .coeffs import CoefficientProfile
from .config import settings
from .errors import (
    DegenerateDataError,
    GridMismatchError,
    IntegrationError,
    PreconditionError,
    ZoneViolationError,
)
from .models import XiGridSpec, ZoneGeometry, ZoneVariant
from .zones import (
    T_MATRIX,
    d_xi_bracket,
    diagonalizer_matrices,
    remainder_R2,
    separating_time,
    xi_bracket,
)

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

# direct integration is kept below this many local periods
AUTO_PERIODS = 500.0

ModeData = Tuple[complex, complex]


@dataclass(frozen=True)
class ModeTrajectory:
    """Samples of one Fourier mode; U = (i<xi> u, u_t)."""
    xi_norm: float
    times: np.ndarray
    u_hat: np.ndarray
    u_hat_t: np.ndarray
    U: np.ndarray
    xi_brackets: np.ndarray
    method: str = "direct"
    switch_time: Optional[float] = None
    switch_mismatch: Optional[float] = None
    data: ModeData = (1.0, 0.0)

    @property
    def U_norm2(self) -> np.ndarray:
        return np.sum(np.abs(self.U) ** 2, axis=1)

    def index_of(self, t: float) -> int:
        idx = int(np.argmin(np.abs(self.times - t)))
        if not math.isclose(self.times[idx], t, rel_tol=1e-9, abs_tol=1e-12):
            raise PreconditionError(f"t={t} is not a sample time of the trajectory")
        return idx


@dataclass(frozen=True)
class PseudoZoneState:
    """E(t, 0, xi) for the system of V = (psi eta u, psi u_t - psi' u)."""
    t: float
    xi_norm: float
    E_matrix: np.ndarray
    sup_norm: float
    times: np.ndarray
    norms: np.ndarray
    V: Optional[np.ndarray] = None


@dataclass(frozen=True)
class EnergySeries:
    """Weighted Plancherel sums over a radial grid."""
    times: np.ndarray
    E_am: np.ndarray
    E_eff: np.ndarray
    gamma: np.ndarray
    claim_ratio: np.ndarray
    u_L2: np.ndarray
    kinetic: np.ndarray
    E_p: Optional[np.ndarray] = None
    q: Optional[np.ndarray] = None


def _check_ivp(sol, what: str):
    if sol.status == -1 or not sol.success:
        t_fail = float(sol.t[-1]) if len(sol.t) else None
        logger.error(f"{what} failed near t={t_fail}: {sol.message}")
        raise IntegrationError(f"{what}: {sol.message}", t=t_fail)


def _max_step(profile: CoefficientProfile, xi_norm: float, t0: float, t1: float) -> float:
    """A fraction of the shortest local period on [t0, t1]."""
    samples = np.linspace(t0, t1, 65)
    peak = max(xi_bracket(profile, float(t), xi_norm) for t in samples)
    if peak <= 0.0:
        return np.inf
    return settings.max_step_fraction * 2.0 * math.pi / peak


def _direct(profile: CoefficientProfile, xi_norm: float, y0: np.ndarray, t0: float, t1: float,
            t_eval: np.ndarray, tol: float):
    scale = max(float(np.max(np.abs(y0))), 1e-300)

    def rhs(t, y):
        g = (xi_norm * profile.a(t)) ** 2 + profile.m(t) ** 2
        return np.array([y[1], -g * y[0]])

    sol = integrate.solve_ivp(
        rhs, (t0, t1), y0.astype(complex), method="DOP853", t_eval=t_eval,
        rtol=tol, atol=tol * 1e-2 * scale, max_step=_max_step(profile, xi_norm, t0, t1),
    )
    _check_ivp(sol, f"direct mode integration (|xi|={xi_norm:g})")
    return sol


def _to_U(profile: CoefficientProfile, xi_norm: float, t: float, u: complex, ut: complex) -> np.ndarray:
    return np.array([1j * xi_bracket(profile, t, xi_norm) * u, ut])


def _from_U(profile: CoefficientProfile, xi_norm: float, t: float, U: np.ndarray) -> Tuple[complex, complex]:
    return U[0] / (1j * xi_bracket(profile, t, xi_norm)), U[1]


def _z_rhs(profile: CoefficientProfile, xi_norm: float):
    def rhs(t, y):
        R2 = remainder_R2(profile, t, xi_norm)
        e = np.exp(2j * y[2].real)
        z1, z2 = y[0], y[1]
        return np.array([
            R2[0, 0] * z1 + R2[0, 1] / e * z2,
            R2[1, 0] * e * z1 + R2[1, 1] * z2,
            xi_bracket(profile, t, xi_norm),
        ])
    return rhs


def _reconstruct(profile: CoefficientProfile, xi_norm: float, t: float, theta: float,
                 z: np.ndarray, phi: float, N: float) -> np.ndarray:
    K, _, _ = diagonalizer_matrices(profile, t, xi_norm, N)
    rho = math.sqrt(xi_bracket(profile, t, xi_norm) / xi_bracket(profile, theta, xi_norm))
    D = np.diag([np.exp(1j * phi), np.exp(-1j * phi)])
    return T_MATRIX @ (rho * (K @ (D @ z)))


def integrate_mode(profile: CoefficientProfile, xi_norm: float, data: ModeData, t_end: float,
                   tol: Optional[float] = None, times: Optional[Sequence[float]] = None,
                   method: str = "auto", t_start: float = 0.0,
                   N: Optional[float] = None) -> ModeTrajectory:
    """
    Integrate one mode from (u(t_start), u_t(t_start)) = data to t_end.

    method: 'direct', 'diagonalized' or 'auto'. The diagonalized method
    switches to the Z frame at the wavefront separating time and records the
    mismatch of both representations one local period later.
    """
    tol = settings.ode_rtol if tol is None else tol
    if tol <= 0:
        raise PreconditionError("tol must be positive")
    if t_end <= t_start:
        raise PreconditionError("t_end must exceed t_start")
    if xi_norm < 0:
        raise PreconditionError("xi_norm must be nonnegative")
    N = settings.zone_N if N is None else N
    if times is None:
        times = np.linspace(t_start, t_end, 201)
    times = np.asarray(times, dtype=float)
    if times[0] < t_start or times[-1] > t_end or np.any(np.diff(times) <= 0):
        raise PreconditionError("sample times must be increasing inside [t_start, t_end]")

    theta = math.inf
    if method != "direct" and xi_norm > 0:
        theta = max(separating_time(ZoneGeometry(N=N, variant=ZoneVariant.WAVEFRONT), profile, xi_norm), t_start)
    if method == "auto":
        span = t_end - min(theta, t_end)
        periods = xi_bracket(profile, t_end, xi_norm) * span / (2.0 * math.pi)
        method = "diagonalized" if theta < t_end and periods > AUTO_PERIODS else "direct"

    y0 = np.array(data, dtype=complex)
    if method == "direct" or theta >= t_end:
        sol = _direct(profile, xi_norm, y0, t_start, t_end, times, tol)
        u, ut = sol.y[0], sol.y[1]
        return _trajectory(profile, xi_norm, times, u, ut, "direct", data=data)
    if method != "diagonalized":
        raise PreconditionError(f"unknown integration method: {method}")

    early = times[times <= theta]
    late = times[times > theta]
    u = np.empty(len(times), dtype=complex)
    ut = np.empty(len(times), dtype=complex)

    # direct segment up to the separating time
    if theta > t_start:
        seg_eval = np.append(early, theta) if (len(early) == 0 or early[-1] < theta) else early
        sol = _direct(profile, xi_norm, y0, t_start, theta, seg_eval, tol)
        u[:len(early)] = sol.y[0][:len(early)]
        ut[:len(early)] = sol.y[1][:len(early)]
        y_theta = sol.y[:, -1]
    else:
        y_theta = y0
        u[:len(early)] = y0[0]
        ut[:len(early)] = y0[1]
    U_theta = _to_U(profile, xi_norm, theta, y_theta[0], y_theta[1])
    _, K_inv, _ = diagonalizer_matrices(profile, theta, xi_norm, N)
    z0 = K_inv @ (T_MATRIX @ U_theta)

    period = 2.0 * math.pi / xi_bracket(profile, theta, xi_norm)
    t_check = min(theta + period, t_end)
    z_eval = np.union1d(late, [t_check])
    rtol_z = max(settings.z_rtol, tol)
    sol_z = integrate.solve_ivp(
        _z_rhs(profile, xi_norm), (theta, t_end), np.array([z0[0], z0[1], 0.0], dtype=complex),
        method="DOP853", t_eval=z_eval, rtol=rtol_z,
        atol=rtol_z * 1e-2 * max(float(np.max(np.abs(z0))), 1e-300),
    )
    _check_ivp(sol_z, f"Z-frame integration (|xi|={xi_norm:g})")

    U_check = None
    for j, t in enumerate(sol_z.t):
        U = _reconstruct(profile, xi_norm, float(t), theta, sol_z.y[:2, j], sol_z.y[2, j].real, N)
        if t == t_check:
            U_check = U
        k = np.searchsorted(late, t)
        if k < len(late) and late[k] == t:
            u[len(early) + k], ut[len(early) + k] = _from_U(profile, xi_norm, float(t), U)

    # both representations one period past the switch
    ref = _direct(profile, xi_norm, y_theta, theta, t_check, np.array([t_check]), tol)
    U_ref = _to_U(profile, xi_norm, t_check, ref.y[0, -1], ref.y[1, -1])
    mismatch = float(np.linalg.norm(U_check - U_ref) / max(np.linalg.norm(U_ref), 1e-300))
    if mismatch > 1e-6:
        logger.warning(f"Zone switch mismatch {mismatch:.3g} at |xi|={xi_norm:g}, theta={theta:.6g}")
    return _trajectory(profile, xi_norm, times, u, ut, "diagonalized", theta, mismatch, data)


def _trajectory(profile, xi_norm, times, u, ut, method, theta=None, mismatch=None, data=(1.0, 0.0)):
    brackets = np.array([xi_bracket(profile, float(t), xi_norm) for t in times])
    U = np.column_stack([1j * brackets * u, ut])
    return ModeTrajectory(
        xi_norm=float(xi_norm), times=times, u_hat=np.asarray(u), u_hat_t=np.asarray(ut), U=U,
        xi_brackets=brackets, method=method, switch_time=theta, switch_mismatch=mismatch,
        data=(complex(data[0]), complex(data[1])),
    )


def two_sided_check(traj: ModeTrajectory, s: float, t: float, profile: CoefficientProfile,
                    geom: Optional[ZoneGeometry] = None) -> float:
    """r = |U(t)|^2 <xi>(s) / (|U(s)|^2 <xi>(t))."""
    if geom is not None:
        for tt in (s, t):
            if xi_bracket(profile, tt, traj.xi_norm) / profile.eta(tt) < geom.N:
                raise ZoneViolationError(f"(t={tt:g}, |xi|={traj.xi_norm:g}) is outside the hyperbolic zone")
    i, j = traj.index_of(s), traj.index_of(t)
    norm_s = traj.U_norm2[i]
    if norm_s == 0.0:
        raise DegenerateDataError(f"|U(s)| = 0 at s={s:g}")
    return float(traj.U_norm2[j] * traj.xi_brackets[i] / (norm_s * traj.xi_brackets[j]))


def pseudo_zone_fundamental(profile: CoefficientProfile, psi: PsiProfile, xi_norm: float, t: float,
                            data: Optional[ModeData] = None, N: Optional[float] = None,
                            tol: Optional[float] = None, n_samples: int = 201) -> PseudoZoneState:
    """
    Fundamental solution of V' = B V on [0, t] with

        B = [[2 psi'/psi + eta'/eta, eta], [-(xi^2 a^2 + m^2 + psi''/psi)/eta, 0]].

    t may not exceed the wavefront separating time of |xi|.
    """
    N = settings.zone_N if N is None else N
    tol = settings.ode_rtol if tol is None else tol
    theta = separating_time(ZoneGeometry(N=N), profile, xi_norm) if xi_norm > 0 else math.inf
    if t > theta * (1.0 + 1e-12):
        raise ZoneViolationError(f"t={t:g} is beyond the separating time {theta:.6g} for |xi|={xi_norm:g}")
    ok, c = psi.validate(np.linspace(0.0, max(t, 1.0), 64), profile)
    if not ok:
        raise PreconditionError(f"psi fails the growth condition on [0, {t:g}] (c={c:.3g})")
    if t == 0.0:
        E = np.eye(2)
        return PseudoZoneState(0.0, xi_norm, E, 1.0, np.array([0.0]), np.array([1.0]),
                               _pseudo_data(profile, psi, data))

    def rhs(tt, y):
        eta, eta1, _ = profile.eta_derivatives(tt)
        p, p1, p2 = psi.psi(tt), psi.psi1(tt), psi.psi2(tt)
        g = (xi_norm * profile.a(tt)) ** 2 + profile.m(tt) ** 2
        B = np.array([[2.0 * p1 / p + eta1 / eta, eta], [-(g + p2 / p) / eta, 0.0]])
        return (B @ y.reshape(2, 2)).ravel()

    times = np.linspace(0.0, t, n_samples)
    sol = integrate.solve_ivp(rhs, (0.0, t), np.eye(2).ravel(), method="DOP853", t_eval=times,
                              rtol=tol, atol=tol * 1e-2)
    _check_ivp(sol, f"pseudo-zone system (|xi|={xi_norm:g})")
    mats = sol.y.T.reshape(-1, 2, 2)
    norms = np.linalg.norm(mats, ord=2, axis=(1, 2))
    E = mats[-1]
    V0 = _pseudo_data(profile, psi, data)
    logger.info(f"Pseudo-zone fundamental solution at |xi|={xi_norm:g}: sup norm {norms.max():.4g}")
    return PseudoZoneState(float(t), float(xi_norm), E, float(norms.max()), times, norms,
                           None if V0 is None else E @ V0)


def _pseudo_data(profile, psi, data):
    if data is None:
        return None
    u0, u1 = data
    return np.array([psi.psi(0.0) * profile.eta(0.0) * u0, psi.psi(0.0) * u1 - psi.psi1(0.0) * u0])


def wronskian(first: ModeTrajectory, second: ModeTrajectory) -> np.ndarray:
    """u1 u2' - u2 u1', constant for the mode equation."""
    if not np.array_equal(first.times, second.times) or first.xi_norm != second.xi_norm:
        raise GridMismatchError("Wronskian needs two trajectories of the same mode on one grid")
    return first.u_hat * second.u_hat_t - second.u_hat * first.u_hat_t


def energy_identity_residual(traj: ModeTrajectory, profile: CoefficientProfile) -> float:
    """
    Relative sup difference between d/dt of (|u_t|^2 + <xi>^2|u|^2)/2, taken
    from a spline of the samples, and <xi> d<xi> |u|^2.
    """
    energy = 0.5 * (np.abs(traj.u_hat_t) ** 2 + traj.xi_brackets ** 2 * np.abs(traj.u_hat) ** 2)
    lhs = interpolate.CubicSpline(traj.times, energy).derivative()(traj.times)
    rhs = traj.xi_brackets * np.array([d_xi_bracket(profile, float(t), traj.xi_norm) for t in traj.times]) * np.abs(traj.u_hat) ** 2
    # ends of the spline carry the boundary condition error
    inner = slice(2, -2)
    scale = max(float(np.max(np.abs(rhs[inner]))), float(np.max(energy)) * 1e-12, 1e-300)
    return float(np.max(np.abs(lhs[inner] - rhs[inner])) / scale)


def radial_grid(spec: XiGridSpec) -> Tuple[np.ndarray, np.ndarray]:
    """Radial |xi| nodes and trapezoid weights times |xi|^(n-1)."""
    if spec.kind == "geometric" and spec.xi_min > 0:
        xi = np.geomspace(spec.xi_min, spec.xi_max, spec.count)
    elif spec.kind in ("geometric", "uniform"):
        xi = np.linspace(spec.xi_min, spec.xi_max, spec.count)
    else:
        raise PreconditionError(f"unknown xi grid kind: {spec.kind}")
    for center, width, count in spec.clusters:
        extra = np.linspace(center - width, center + width, int(count))
        xi = np.concatenate([xi, extra[extra >= 0]])
    xi = np.unique(xi)
    if len(xi) == 1:
        return xi, np.ones(1)
    gaps = np.diff(xi)
    w = np.zeros_like(xi)
    w[:-1] += 0.5 * gaps
    w[1:] += 0.5 * gaps
    return xi, w * xi ** (spec.dimension - 1)


def gaussian_mode_data(xi_norm: float, width: float = 1.0) -> ModeData:
    """Fourier data of a Gaussian position with zero velocity."""
    return complex(math.exp(-0.5 * (width * xi_norm) ** 2)), 0j


def mode_sweep(profile: CoefficientProfile, xi_values: Sequence[float], t_end: float,
               data: Union[ModeData, Callable[[float], ModeData]] = gaussian_mode_data,
               times: Optional[Sequence[float]] = None, tol: Optional[float] = None,
               method: str = "auto", N: Optional[float] = None) -> List[ModeTrajectory]:
    """Integrate every mode on one shared time grid, in grid order."""
    if times is None:
        times = np.linspace(0.0, t_end, 201)
    trajectories = []
    for xi in xi_values:
        mode_data = data(float(xi)) if callable(data) else data
        trajectories.append(integrate_mode(profile, float(xi), mode_data, t_end, tol=tol,
                                           times=times, method=method, N=N))
    logger.info(f"Mode sweep finished: {len(trajectories)} modes to t={t_end:g} ({profile.label})")
    return trajectories


def assemble_energies(trajectories: Sequence[ModeTrajectory], profile: CoefficientProfile,
                      weights: Sequence[float], psi: Optional[PsiProfile] = None) -> EnergySeries:
    """Plancherel sums of the mode energy densities in grid order."""
    weights = np.asarray(weights, dtype=float)
    if len(trajectories) == 0 or len(weights) != len(trajectories):
        raise GridMismatchError("one weight per trajectory is required")
    times = trajectories[0].times
    for traj in trajectories[1:]:
        if not np.array_equal(traj.times, times):
            raise GridMismatchError("trajectories do not share a time grid")

    a = np.array([profile.a(float(t)) for t in times])
    m = np.array([profile.m(float(t)) for t in times])
    gamma = np.maximum(a, m)
    E_am = np.zeros(len(times))
    E_eff = np.zeros(len(times))
    u_L2 = np.zeros(len(times))
    kinetic = np.zeros(len(times))
    claim = np.zeros(len(times))
    p = q = E_p = None
    if psi is not None:
        eta = np.array([profile.eta(float(t)) for t in times])
        ps = np.array([psi.psi(float(t)) for t in times])
        q = np.maximum(a, ps ** -2)
        p = eta * ps * np.sqrt(q)
        E_p = np.zeros(len(times))

    for w, traj in zip(weights, trajectories):
        u2 = np.abs(traj.u_hat) ** 2
        ut2 = np.abs(traj.u_hat_t) ** 2
        grad = (a * traj.xi_norm) ** 2 * u2
        E_am += w * 0.5 * (ut2 + grad + m ** 2 * u2)
        E_eff += w * 0.5 * (ut2 + grad + m * gamma * u2)
        u_L2 += w * u2
        kinetic += w * (ut2 + grad)
        if E_p is not None:
            E_p += w * 0.5 * (ut2 + grad + p ** 2 * u2)
        u0, u1 = traj.data
        e0 = abs(u1) ** 2 + (1.0 + traj.xi_norm ** 2) * abs(u0) ** 2
        if e0 > 0.0:
            claim = np.maximum(claim, (ut2 + grad + gamma * m * u2) / (gamma * e0))
    return EnergySeries(times=times, E_am=E_am, E_eff=E_eff, gamma=gamma, claim_ratio=claim,
                        u_L2=u_L2, kinetic=kinetic, E_p=E_p, q=q)


def mode_fundamental(profile: CoefficientProfile, xi_norm: float, s: float, times: Sequence[float],
                     tol: Optional[float] = None, method: str = "auto",
                     N: Optional[float] = None) -> np.ndarray:
    """E(t, s) acting on U = (i<xi> u, u_t), one 2x2 matrix per sample time."""
    times = np.asarray(times, dtype=float)
    if xi_bracket(profile, s, xi_norm) == 0.0:
        raise DegenerateDataError(f"<xi> vanishes at s={s:g}; U does not determine the mode")
    first = (1.0 / (1j * xi_bracket(profile, s, xi_norm)), 0j)
    columns = []
    for data in (first, (0j, 1.0 + 0j)):
        traj = integrate_mode(profile, xi_norm, data, float(times[-1]), tol=tol, times=times,
                              method=method, t_start=s, N=N)
        columns.append(traj.U)
    return np.stack(columns, axis=2)
