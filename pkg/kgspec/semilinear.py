"""
Pseudospectral Duhamel solver for u_tt - e^{2t} Delta u + m^2 u = |u|^p on a
periodic box, with the X-norm ledger and the a posteriori checks that go with it.

Fourier coefficients follow the unnormalized numpy convention, so that
||u||_{L^2}^2 = L^n / M^{2n} * sum |U_k|^2.
"""
import functools
import logging
import math
from dataclasses import dataclass, field, replace
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy import fft, integrate

from .coeffs import CoefficientProfile, constant_mass, exponential_speed, make_profile
from .config import settings
from .errors import AliasingError, GridMismatchError, PreconditionError, SmallnessViolatedError
from .fitting import fit_rate
from .modes import _check_ivp, integrate_mode
from .models import RateFit, RateModel

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

MAX_DIMENSION = 4
CONTAINMENT_LIMIT = 1e-8


def _axis(L: float, M: int) -> np.ndarray:
    return -L / 2.0 + np.arange(M) * (L / M)


def wavenumbers(n: int, L: float, M: int) -> np.ndarray:
    """|k| on the full coefficient array."""
    k = 2.0 * math.pi * fft.fftfreq(M, d=L / M)
    grids = np.meshgrid(*([k] * n), indexing="ij")
    return np.sqrt(sum(g ** 2 for g in grids))


def radii(n: int, L: float, M: int) -> np.ndarray:
    x = _axis(L, M)
    grids = np.meshgrid(*([x] * n), indexing="ij")
    return np.sqrt(sum(g ** 2 for g in grids))


@dataclass(frozen=True)
class SpectralField:
    """u and u_t at time t on the torus [-L/2, L/2)^n with M points per axis."""
    n: int
    L: float
    M: int
    coeffs: np.ndarray
    coeffs_t: np.ndarray
    t: float = 0.0

    def __post_init__(self):
        if not 1 <= self.n <= MAX_DIMENSION:
            raise PreconditionError(f"dimension n={self.n} outside 1..{MAX_DIMENSION}")
        shape = (self.M,) * self.n
        if self.coeffs.shape != shape or self.coeffs_t.shape != shape:
            raise GridMismatchError(
                f"coefficient shapes {self.coeffs.shape}/{self.coeffs_t.shape} do not match grid {shape}"
            )

    @classmethod
    def from_grid(cls, n: int, L: float, M: int, values: np.ndarray, values_t: np.ndarray,
                  t: float = 0.0) -> "SpectralField":
        return cls(n=n, L=float(L), M=int(M), coeffs=fft.fftn(np.asarray(values, dtype=float)),
                   coeffs_t=fft.fftn(np.asarray(values_t, dtype=float)), t=float(t))

    @classmethod
    def zeros(cls, n: int, L: float, M: int) -> "SpectralField":
        shape = (M,) * n
        return cls(n=n, L=float(L), M=int(M), coeffs=np.zeros(shape, dtype=complex),
                   coeffs_t=np.zeros(shape, dtype=complex))

    @property
    def cell(self) -> float:
        return (self.L / self.M) ** self.n

    @property
    def _spectral_weight(self) -> float:
        return self.L ** self.n / float(self.M) ** (2 * self.n)

    def values(self) -> np.ndarray:
        return fft.ifftn(self.coeffs).real

    def values_t(self) -> np.ndarray:
        return fft.ifftn(self.coeffs_t).real

    def l2_norm(self) -> float:
        return spectral_norm(self.coeffs, self.L, self.M)

    def grid_l2_norm(self) -> float:
        return math.sqrt(self.cell * float(np.sum(self.values() ** 2)))

    def grad_norm(self) -> float:
        k = wavenumbers(self.n, self.L, self.M)
        return spectral_norm(k * self.coeffs, self.L, self.M)

    def dt_norm(self) -> float:
        return spectral_norm(self.coeffs_t, self.L, self.M)

    def lp_norm(self, p: float) -> float:
        return (self.cell * float(np.sum(np.abs(self.values()) ** p))) ** (1.0 / p)

    def l1_norm(self) -> float:
        """Riemann sum of |u|."""
        return self.cell * float(np.sum(np.abs(self.values())))

    def parseval_defect(self) -> float:
        norm = self.l2_norm()
        if norm == 0.0:
            return 0.0
        return abs(norm - self.grid_l2_norm()) / norm

    def is_conjugate_symmetric(self, tol: float = 1e-10) -> bool:
        for c in (self.coeffs, self.coeffs_t):
            scale = float(np.max(np.abs(c))) if c.size else 0.0
            if scale == 0.0:
                continue
            mirrored = np.roll(np.flip(c), shift=1, axis=tuple(range(self.n)))
            if float(np.max(np.abs(c - np.conj(mirrored)))) > tol * scale:
                return False
        return True


def spectral_norm(coeffs: np.ndarray, L: float, M: int) -> float:
    n = coeffs.ndim
    return math.sqrt(L ** n / float(M) ** (2 * n) * float(np.sum(np.abs(coeffs) ** 2)))


def data_norm(data: SpectralField) -> float:
    """||u0||_{L^1} + ||u0||_{H^1} + ||u1||_{L^1} + ||u1||_{L^2}."""
    u1_l1 = data.cell * float(np.sum(np.abs(data.values_t())))
    h1 = math.sqrt(data.l2_norm() ** 2 + data.grad_norm() ** 2)
    return data.l1_norm() + h1 + u1_l1 + data.dt_norm()


def gaussian_data(n: int = 2, L: float = 64.0, M: int = 128, width: float = 2.0, eps: float = 1e-3,
                  zero_mean: bool = True) -> SpectralField:
    """
    u0 = u1 = c exp(-|x|^2 / (2 width^2)), scaled to data norm eps.

    With zero_mean the box average is removed, so the k = 0 oscillator of the
    torus carries no data.
    """
    g = np.exp(-radii(n, L, M) ** 2 / (2.0 * width ** 2))
    if zero_mean:
        g = g - g.mean()
    unit = SpectralField.from_grid(n, L, M, g, g)
    norm = data_norm(unit)
    if eps == 0.0 or norm == 0.0:
        return SpectralField.zeros(n, L, M)
    scale = eps / norm
    return SpectralField(n=n, L=float(L), M=int(M), coeffs=unit.coeffs * scale,
                         coeffs_t=unit.coeffs_t * scale)


def d_factor(t: float, n: int) -> float:
    """Low-frequency loss in one dimension."""
    return math.sqrt(1.0 + t) if n == 1 else 1.0


def d_two(t: float, s: float, n: int, q: float) -> float:
    if math.isclose(n, q / (2.0 - q)):
        return (t - s) ** ((2.0 - q) / (2.0 * q))
    return 1.0


def x_norm_sample(t: float, n: int, l2: float, grad: float, kinetic: float) -> float:
    return math.exp(t / 2.0) * (l2 / d_factor(t, n) + grad + math.exp(-t) * kinetic)


@dataclass
class XNormLedger:
    """Running record of the X-norm samples and their supremum."""
    n: int
    times: List[float] = field(default_factory=list)
    samples: List[float] = field(default_factory=list)
    sup_so_far: List[float] = field(default_factory=list)

    def record(self, t: float, value: float) -> float:
        previous = self.sup_so_far[-1] if self.sup_so_far else 0.0
        self.times.append(float(t))
        self.samples.append(float(value))
        self.sup_so_far.append(max(previous, float(value)))
        return self.sup_so_far[-1]

    @property
    def sup(self) -> float:
        return self.sup_so_far[-1] if self.sup_so_far else 0.0

    def value_at(self, t: float) -> float:
        if not self.times:
            raise PreconditionError("empty ledger")
        j = int(np.argmin(np.abs(np.asarray(self.times) - t)))
        return self.samples[j]


# Kernels

@functools.lru_cache(maxsize=32)
def _sitter_profile(m: float) -> CoefficientProfile:
    speed = exponential_speed()
    return make_profile(speed, constant_mass(speed, m), label=f"exponential/m={m:g}")


@functools.lru_cache(maxsize=4096)
def _kernel_pair(m: float, s: float, t: float, xi_norm: float, tol: float) -> Tuple[float, float]:
    profile = _sitter_profile(m)
    first = integrate_mode(profile, xi_norm, (1.0, 0.0), t_end=t, times=[s, t], t_start=s, tol=tol)
    second = integrate_mode(profile, xi_norm, (0.0, 1.0), t_end=t, times=[s, t], t_start=s, tol=tol)
    return float(first.u_hat[-1].real), float(second.u_hat[-1].real)


def linear_kernels(m: float, s: float, t: float, xi_norm: float,
                   tol: Optional[float] = None) -> Tuple[float, float]:
    """
    Multipliers (K0, K1) propagating (u(s), u_t(s)) to u(t) for
    u_tt + (e^{2t}|xi|^2 + m^2) u = 0. K1 carries the data (0, 1).
    """
    if m <= 0:
        raise PreconditionError("mass m must be positive")
    if s < 0 or t < s:
        raise PreconditionError(f"need 0 <= s <= t, got s={s}, t={t}")
    if xi_norm < 0:
        raise PreconditionError("xi_norm must be nonnegative")
    if t == s:
        return 1.0, 0.0
    tol = settings.ode_rtol if tol is None else tol
    return _kernel_pair(float(m), float(s), float(t), float(xi_norm), float(tol))


@dataclass(frozen=True)
class KernelTable:
    """
    Fundamental pair y1 (data 1, 0) and y2 (data 0, 1) at times[0], sampled
    on a time grid for every distinct |k|. The Wronskian is 1, so
    K0(t,s) = y1(t) y2'(s) - y2(t) y1'(s) and K1(t,s) = y2(t) y1(s) - y1(t) y2(s).
    """
    m: float
    times: np.ndarray
    k_unique: np.ndarray
    y1: np.ndarray
    y1p: np.ndarray
    y2: np.ndarray
    y2p: np.ndarray

    def K0(self, i_t: int, i_s: int) -> np.ndarray:
        return self.y1[i_t] * self.y2p[i_s] - self.y2[i_t] * self.y1p[i_s]

    def K1(self, i_t: int, i_s: int) -> np.ndarray:
        return self.y2[i_t] * self.y1[i_s] - self.y1[i_t] * self.y2[i_s]

    def dK0(self, i_t: int, i_s: int) -> np.ndarray:
        return self.y1p[i_t] * self.y2p[i_s] - self.y2p[i_t] * self.y1p[i_s]

    def dK1(self, i_t: int, i_s: int) -> np.ndarray:
        return self.y2p[i_t] * self.y1[i_s] - self.y1p[i_t] * self.y2[i_s]

    def wronskian_defect(self) -> float:
        return float(np.max(np.abs(self.y1 * self.y2p - self.y2 * self.y1p - 1.0)))


def build_kernel_table(m: float, times: Sequence[float], k_unique: np.ndarray,
                       tol: Optional[float] = None) -> KernelTable:
    """One vectorized DOP853 solve for all distinct |k|."""
    tol = settings.z_rtol if tol is None else tol
    times = np.asarray(times, dtype=float)
    k2 = np.asarray(k_unique, dtype=float) ** 2
    K = len(k2)

    def rhs(t, y):
        Y = y.reshape(4, K)
        w2 = math.exp(2.0 * t) * k2 + m * m
        return np.concatenate([Y[1], -w2 * Y[0], Y[3], -w2 * Y[2]])

    y0 = np.concatenate([np.ones(K), np.zeros(K), np.zeros(K), np.ones(K)])
    if len(times) == 1:
        Y = y0.reshape(4, K)[:, None, :]
    else:
        sol = integrate.solve_ivp(rhs, (times[0], times[-1]), y0, method="DOP853", t_eval=times,
                                  rtol=tol, atol=tol * 1e-2)
        _check_ivp(sol, f"kernel table ({K} wavenumbers, m={m:g})")
        Y = sol.y.reshape(4, K, len(times)).transpose(0, 2, 1)
    table = KernelTable(m=float(m), times=times, k_unique=np.asarray(k_unique, dtype=float),
                        y1=Y[0], y1p=Y[1], y2=Y[2], y2p=Y[3])
    defect = table.wronskian_defect()
    if defect > 1e3 * tol:
        logger.warning(f"Kernel table Wronskian defect {defect:.3g} at tol {tol:.1e}")
    logger.info(f"Kernel table built: {K} wavenumbers, {len(times)} times, t <= {times[-1]:g}")
    return table


def _unique_wavenumbers(n: int, L: float, M: int) -> Tuple[np.ndarray, np.ndarray]:
    k = wavenumbers(n, L, M)
    k_unique, inverse = np.unique(np.round(k, 12), return_inverse=True)
    return k_unique, inverse.reshape(k.shape)


def check_propadd(m: float, s_grid: Sequence[float], t_grid: Sequence[float], q: float, n: int,
                  L: float = 64.0, M: int = 64, width: float = 2.0,
                  tol: Optional[float] = None) -> Dict[str, float]:
    """
    Sup over pairs s <= t of

      (||d_t K1 f|| + e^t ||grad K1 f||) / (e^{(t-s)/2} ||f||)
      ||K1 f|| / (e^{(s-t)/2} d(t,s) (||f||_2 + ||f||_q))

    for a Gaussian f. When the d(t,s) branch is active the second ratio is
    also reported without that factor.
    """
    if not 1.0 <= q < 2.0:
        raise PreconditionError("q must lie in [1, 2)")
    s_grid = np.asarray(sorted(s_grid), dtype=float)
    t_grid = np.asarray(sorted(t_grid), dtype=float)
    if len(s_grid) == 0 or len(t_grid) == 0 or s_grid[0] < 0:
        raise PreconditionError("s and t grids must be nonempty and nonnegative")

    times = np.union1d(s_grid, t_grid)
    k_unique, inverse = _unique_wavenumbers(n, L, M)
    table = build_kernel_table(m, times, k_unique, tol)
    kabs = wavenumbers(n, L, M)

    g = np.exp(-radii(n, L, M) ** 2 / (2.0 * width ** 2))
    f = SpectralField.from_grid(n, L, M, g, np.zeros_like(g))
    f_l2 = f.l2_norm()
    f_mixed = f_l2 + f.lp_norm(q)
    branch = math.isclose(n, q / (2.0 - q))

    report = {"sup_energy_ratio": 0.0, "sup_l2_ratio": 0.0, "sup_l2_ratio_without_d": 0.0,
              "d_branch_active": branch, "pairs": 0, "m": m, "q": q, "n": n, "M": M,
              "worst_energy_s": 0.0, "worst_energy_t": 0.0, "worst_l2_s": 0.0, "worst_l2_t": 0.0,
              "without_d_growth": float("nan"), "with_d_growth": float("nan")}
    first_row: List[Tuple[float, float, float]] = []
    for s in s_grid:
        i_s = int(np.searchsorted(times, s))
        for t in t_grid[t_grid >= s]:
            i_t = int(np.searchsorted(times, t))
            K1f = table.K1(i_t, i_s)[inverse] * f.coeffs
            dK1f = table.dK1(i_t, i_s)[inverse] * f.coeffs
            energy = spectral_norm(dK1f, L, M) + math.exp(t) * spectral_norm(kabs * K1f, L, M)
            r1 = energy / (math.exp((t - s) / 2.0) * f_l2)
            if r1 > report["sup_energy_ratio"]:
                report.update(sup_energy_ratio=r1, worst_energy_s=float(s), worst_energy_t=float(t))
            report["pairs"] += 1
            if t == s:
                continue
            lhs = spectral_norm(K1f, L, M)
            plain = lhs / (math.exp((s - t) / 2.0) * f_mixed)
            r2 = plain / d_two(t, s, n, q)
            if r2 > report["sup_l2_ratio"]:
                report.update(sup_l2_ratio=r2, worst_l2_s=float(s), worst_l2_t=float(t))
            report["sup_l2_ratio_without_d"] = max(report["sup_l2_ratio_without_d"], plain)
            if s == s_grid[0]:
                first_row.append((float(t - s), plain, r2))

    # growth of both L2 ratios along the first s, from gap ~1 to the widest gap
    if first_row:
        gaps = np.array([g for g, _, _ in first_row])
        near = int(np.argmin(np.abs(gaps - 1.0)))
        report["without_d_growth"] = first_row[-1][1] / first_row[near][1]
        report["with_d_growth"] = first_row[-1][2] / first_row[near][2]
    logger.info(
        f"Kernel estimate check n={n}, q={q:g}: energy ratio {report['sup_energy_ratio']:.4g}, "
        f"L2 ratio {report['sup_l2_ratio']:.4g} over {report['pairs']} pairs"
    )
    return report


# Nonlinearity

def padded_power(coeffs: np.ndarray, p: float, factor: float) -> Tuple[np.ndarray, float]:
    """
    |u|^p evaluated on a grid refined by `factor` and truncated back.

    Returns the truncated coefficients and the fraction of spectral energy
    that fell outside the retained band.
    """
    n = coeffs.ndim
    M = coeffs.shape[0]
    Mp = 2 * int(math.ceil(M * factor / 2.0))
    lo = (Mp - M) // 2
    padded = np.pad(fft.fftshift(coeffs), [(lo, Mp - M - lo)] * n)
    u = fft.ifftn(fft.ifftshift(padded)).real * (Mp / M) ** n
    F = fft.fftshift(fft.fftn(np.abs(u) ** p)) * (M / Mp) ** n
    kept = F[tuple(slice(lo, lo + M) for _ in range(n))]
    total = float(np.sum(np.abs(F) ** 2))
    dropped = 0.0 if total == 0.0 else max(total - float(np.sum(np.abs(kept) ** 2)), 0.0) / total
    return fft.ifftshift(kept), dropped


def _check_exponent(n: int, p: float):
    if not 1 <= n <= MAX_DIMENSION:
        raise PreconditionError(f"dimension n={n} outside 1..{MAX_DIMENSION}")
    if p <= 1.0:
        raise PreconditionError("power p must exceed 1")
    if n >= 2 and p < 2.0:
        raise PreconditionError(f"n={n} needs p >= 2, got {p}")
    if n >= 3 and p > n / (n - 2.0):
        raise PreconditionError(f"n={n} needs p <= {n / (n - 2.0):g}, got {p}")


@dataclass(frozen=True)
class SemilinearResult:
    n: int
    p: float
    m: float
    times: np.ndarray
    l2: np.ndarray
    grad: np.ndarray
    kinetic: np.ndarray
    ledger: XNormLedger
    final: SpectralField
    data: SpectralField
    data_norm: float
    max_alias: float
    containment: float
    linear_only: bool
    table: KernelTable
    inverse: np.ndarray
    history: Optional[np.ndarray] = None
    history_t: Optional[np.ndarray] = None
    picard: Optional[float] = None

    @property
    def decay_constants(self) -> Dict[str, float]:
        """sup e^{-t/2} ||u_t|| and sup e^{t/2} ||u|| / d(t)."""
        d = np.array([d_factor(float(t), self.n) for t in self.times])
        return {
            "kinetic": float(np.max(np.exp(-self.times / 2.0) * self.kinetic)),
            "l2": float(np.max(np.exp(self.times / 2.0) * self.l2 / d)),
        }

    def duhamel_weights(self, j: int) -> np.ndarray:
        """Trapezoid weights of int_0^{t_j} on the march grid: dt/2 at both ends, dt inside."""
        if j == 0:
            return np.zeros(1)
        dt = float(self.times[1] - self.times[0])
        w = np.full(j + 1, dt)
        w[0] = w[-1] = dt / 2.0
        return w


def _containment(field_: SpectralField, outside: np.ndarray) -> float:
    u2 = field_.values() ** 2
    total = float(np.sum(u2))
    return 0.0 if total == 0.0 else float(np.sum(u2[outside])) / total


def solve_semilinear(data: SpectralField, p: float = 2.0, m: float = 1.0, horizon: float = 8.0,
                     tol: Optional[float] = None, dt: float = 0.05, linear_only: bool = False,
                     kernel_tol: Optional[float] = None, smallness_multiple: Optional[float] = None,
                     alias_tol: Optional[float] = None, keep_history: bool = True) -> SemilinearResult:
    """
    March u(t) = K0 u0 + K1 u1 + int_0^t K1(t,s) |u(s)|^p ds on a uniform grid.

    K1(t,s) separates into y1, y2 products, so the trapezoid memory integral
    reduces to two running sums. The endpoint term of u vanishes because
    K1(t,t) = 0, which keeps the march explicit; u_t takes the endpoint
    half weight once |u(t)|^p is known.
    """
    tol = 1e-6 if tol is None else tol
    smallness_multiple = settings.smallness_multiple if smallness_multiple is None else smallness_multiple
    alias_tol = settings.alias_tol if alias_tol is None else alias_tol
    n, L, M = data.n, data.L, data.M
    _check_exponent(n, p)
    if m <= 0:
        raise PreconditionError("mass m must be positive")
    if horizon <= 0 or dt <= 0:
        raise PreconditionError("horizon and dt must be positive")
    if not data.is_conjugate_symmetric():
        raise PreconditionError("data coefficients are not conjugate-symmetric")

    steps = max(int(math.ceil(horizon / dt)), 1)
    times = np.linspace(0.0, horizon, steps + 1)
    dt = float(times[1] - times[0])
    k_unique, inverse = _unique_wavenumbers(n, L, M)
    table = build_kernel_table(m, times, k_unique, kernel_tol)
    kabs = wavenumbers(n, L, M)
    outside = radii(n, L, M) >= L / 4.0
    factor = p / 2.0 + 1.0

    norm0 = data_norm(data)
    limit = smallness_multiple * norm0
    U0, U1 = data.coeffs, data.coeffs_t
    S1 = np.zeros_like(U0)
    S2 = np.zeros_like(U0)
    ledger = XNormLedger(n=n)
    l2 = np.empty(len(times))
    grad = np.empty(len(times))
    kinetic = np.empty(len(times))
    history = np.empty((len(times),) + U0.shape, dtype=complex) if keep_history else None
    history_t = np.empty_like(history) if keep_history else None
    max_alias = 0.0
    containment = 0.0

    logger.info(f"Semilinear march: n={n}, p={p:g}, m={m:g}, M={M}, L={L:g}, "
                f"horizon={horizon:g}, dt={dt:g}, data norm {norm0:.3e}")
    for j, t in enumerate(times):
        y1, y1p = table.y1[j][inverse], table.y1p[j][inverse]
        y2, y2p = table.y2[j][inverse], table.y2p[j][inverse]
        U = y1 * (U0 - S2) + y2 * (U1 + S1)
        Ut = y1p * (U0 - S2) + y2p * (U1 + S1)
        F = None
        if not linear_only:
            F, dropped = padded_power(U, p, factor)
            max_alias = max(max_alias, dropped)
            if dropped > alias_tol:
                logger.error(f"Aliasing check failed at t={t:.4g}: dropped fraction {dropped:.3e}")
                raise AliasingError(f"nonlinear term lost {dropped:.3e} of its energy at t={t:.4g} "
                                    f"(limit {alias_tol:.1e}); increase M")
            if j > 0:
                # trapezoid endpoint s = t: K1(t,t) = 0 but d/dt K1(t,s) at s = t is the Wronskian
                Ut = Ut + 0.5 * dt * (y2p * y1 - y1p * y2) * F
        l2[j] = spectral_norm(U, L, M)
        grad[j] = spectral_norm(kabs * U, L, M)
        kinetic[j] = spectral_norm(Ut, L, M)
        value = x_norm_sample(float(t), n, l2[j], grad[j], kinetic[j])
        sup = ledger.record(float(t), value)
        if not math.isfinite(value) or sup > limit:
            logger.error(f"Smallness violated at t={t:.4g}: ledger {value:.3e}, limit {limit:.3e}")
            raise SmallnessViolatedError(float(t), value, limit)
        if history is not None:
            history[j] = U
            history_t[j] = Ut
        if j % 20 == 0 or j == len(times) - 1:
            containment = max(containment, _containment(SpectralField(n, L, M, U, Ut, float(t)), outside))
        if F is None:
            continue

        w = dt / 2.0 if j == 0 else dt
        S1 += w * y1 * F
        S2 += w * y2 * F

    if containment > CONTAINMENT_LIMIT:
        logger.warning(f"Mass outside |x| < L/4 reached {containment:.3e}; the box wraps the solution")
    final = SpectralField(n, L, M, U, Ut, float(times[-1]))
    result = SemilinearResult(
        n=n, p=p, m=m, times=times, l2=l2, grad=grad, kinetic=kinetic, ledger=ledger, final=final,
        data=data, data_norm=norm0, max_alias=max_alias, containment=containment,
        linear_only=linear_only, table=table, inverse=inverse, history=history, history_t=history_t,
    )
    if history is not None and not linear_only:
        residual = picard_residual(result)
        result = replace(result, picard=residual)
        if residual > tol:
            logger.warning(f"Picard residual {residual:.3e} above tol {tol:.1e}")
    logger.info(f"Semilinear march done: ledger sup {ledger.sup:.4e}, ||u(T)|| {l2[-1]:.4e}")
    return result


def picard_residual(result: SemilinearResult) -> float:
    """
    sup_t of the X-norm of P(u) - u, with P the Duhamel map rebuilt from the
    stored history through the dense kernel K1(t_j, t_l).
    """
    if result.history is None:
        raise PreconditionError("Picard residual needs the stored history")
    data, table, inv = result.data, result.table, result.inverse
    L, M, n = data.L, data.M, data.n
    shape = data.coeffs.shape
    factor = result.p / 2.0 + 1.0
    kabs = wavenumbers(n, L, M).ravel()
    flat_inv = inv.ravel()
    F = np.stack([padded_power(U, result.p, factor)[0].ravel() for U in result.history])
    y1, y1p = table.y1[:, flat_inv], table.y1p[:, flat_inv]
    y2, y2p = table.y2[:, flat_inv], table.y2p[:, flat_inv]
    U0, U1 = data.coeffs.ravel(), data.coeffs_t.ravel()

    worst = 0.0
    for j, t in enumerate(result.times):
        kernel = y2[j] * y1[:j + 1] - y1[j] * y2[:j + 1]
        dkernel = y2p[j] * y1[:j + 1] - y1p[j] * y2[:j + 1]
        wf = result.duhamel_weights(j)[:, None] * F[:j + 1]
        P = y1[j] * U0 + y2[j] * U1 + np.sum(kernel * wf, axis=0)
        Pt = y1p[j] * U0 + y2p[j] * U1 + np.sum(dkernel * wf, axis=0)
        diff = P - result.history[j].ravel()
        diff_t = Pt - result.history_t[j].ravel()
        value = x_norm_sample(float(t), n, spectral_norm(diff.reshape(shape), L, M),
                              spectral_norm((kabs * diff).reshape(shape), L, M),
                              spectral_norm(diff_t.reshape(shape), L, M))
        worst = max(worst, value)
    return worst


def gagliardo_nirenberg_check(state: SpectralField, p: float, ks: Sequence[int] = (1, 2)) -> Dict[int, Optional[float]]:
    """
    C_k = ||u||_{L^{kp}}^p / (||u||^{p(1-theta)} ||grad u||^{p theta}),
    theta = n (1/2 - 1/(kp)). None where theta leaves [0, 1] or u = 0.
    """
    constants: Dict[int, Optional[float]] = {}
    l2, grad = state.l2_norm(), state.grad_norm()
    for k in ks:
        theta = state.n * (0.5 - 1.0 / (k * p))
        if not 0.0 <= theta <= 1.0 or l2 == 0.0 or (theta > 0 and grad == 0.0):
            constants[k] = None
            continue
        lhs = state.lp_norm(k * p) ** p
        constants[k] = lhs / (l2 ** (p * (1.0 - theta)) * grad ** (p * theta))
    return constants


def gn_constants(result: SemilinearResult, stride: int = 10) -> Dict[int, Optional[float]]:
    """Largest Gagliardo-Nirenberg ratio over every stride-th stored state."""
    if result.history is None:
        raise PreconditionError("Gagliardo-Nirenberg check needs the stored history")
    data = result.data
    worst: Dict[int, Optional[float]] = {}
    for j in range(0, len(result.times), stride):
        U = result.history[j]
        state = SpectralField(data.n, data.L, data.M, U, np.zeros_like(U), float(result.times[j]))
        for k, c in gagliardo_nirenberg_check(state, result.p).items():
            if c is not None:
                worst[k] = c if worst.get(k) is None else max(worst[k], c)
            else:
                worst.setdefault(k, None)
    return worst


def decay_fit(result: SemilinearResult, window: Optional[Tuple[float, float]] = None,
              tolerance: float = 0.05) -> RateFit:
    """Exponent of ||u(t)|| in e^t scale; the prediction is -1/2 for n >= 2."""
    horizon = float(result.times[-1])
    window = (horizon / 2.0, horizon) if window is None else window
    return fit_rate(result.times, result.l2, model=RateModel.EXP, predicted=-0.5,
                    tolerance=tolerance, window=window)


def resolution_defect(n: int = 2, L: float = 64.0, M: int = 64, width: float = 2.0, eps: float = 1e-3,
                      p: float = 2.0, m: float = 1.0, horizon: float = 2.0, dt: float = 0.05) -> float:
    """Relative change of ||u(T)|| when M doubles."""
    norms = []
    for size in (M, 2 * M):
        data = gaussian_data(n, L, size, width, eps)
        result = solve_semilinear(data, p=p, m=m, horizon=horizon, dt=dt, keep_history=False)
        norms.append(float(result.l2[-1]))
    return abs(norms[1] - norms[0]) / max(norms[0], 1e-300)
