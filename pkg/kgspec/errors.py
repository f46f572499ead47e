"""
Exception hierarchy for the numerical lab.

Undetermined outcomes (an integrability test inside its dead band, a fit
with too short a window) are reported as values. The exceptions below are
raised when a precondition fails or the numerical machinery cannot deliver.
"""
from typing import Optional, Tuple


class KGSpecError(Exception):
    """Base class for all lab errors."""

    def to_dict(self) -> dict:
        return {"type": type(self).__name__, "message": str(self)}


class ConfigError(KGSpecError):
    """Malformed experiment configuration."""


class PreconditionError(KGSpecError):
    """Operation called outside its admissible parameter range."""


class QuadratureError(KGSpecError):
    """Adaptive quadrature failed to converge on a subinterval."""

    def __init__(self, message: str, interval: Tuple[float, float]):
        super().__init__(f"{message} on [{interval[0]:.6g}, {interval[1]:.6g}]")
        self.interval = interval

    def to_dict(self) -> dict:
        data = super().to_dict()
        data["interval"] = list(self.interval)
        return data


class HypothesisEvaluationError(KGSpecError):
    """Coefficient or derivative evaluation failed at a sample point."""

    def __init__(self, message: str, t: float):
        super().__init__(f"{message} at t={t:.6g}")
        self.t = t


class IntegrationError(KGSpecError):
    """ODE integration stopped before reaching the requested time."""

    def __init__(self, message: str, t: Optional[float] = None):
        where = f" (stopped at t={t:.6g})" if t is not None else ""
        super().__init__(f"{message}{where}")
        self.t = t


class ZoneViolationError(KGSpecError):
    """Requested (t, xi) lies outside the zone the operation is valid in."""


class BracketError(KGSpecError):
    """Root of a zone relation could not be bracketed."""

    def __init__(self, variant: str, xi_norm: float, detail: str = ""):
        super().__init__(
            f"No bracketing interval for the {variant} separating curve at |xi|={xi_norm:.6g}"
            + (f": {detail}" if detail else "")
        )
        self.variant = variant
        self.xi_norm = xi_norm


class DiagonalizerError(KGSpecError):
    """det K too small for the refined diagonalizer to be invertible."""

    def __init__(self, det: float, N: float):
        super().__init__(
            f"|det K| = {det:.4g} below threshold with N = {N:g}; choose a larger zone constant N"
        )
        self.det = det
        self.N = N


class DegenerateDataError(KGSpecError):
    """Data vanishes where a ratio needs it to be nonzero."""


class NoConstructivePsiError(KGSpecError):
    """No closed-form psi is known for the profile and none was supplied."""

    def __init__(self, label: str):
        super().__init__(
            f"No constructive psi available for profile '{label}'. The general series "
            "construction with Catalan-type coefficients is a known extension that is "
            "not built here; supply a psi explicitly."
        )
        self.label = label


class SeriesTruncationError(KGSpecError):
    """Peano-Baker truncation bound exceeds the requested tolerance."""

    def __init__(self, bound: float, tol: float, K_terms: int):
        super().__init__(
            f"Truncation bound {bound:.3e} exceeds tolerance {tol:.1e} at K={K_terms}; "
            "use more terms or the ODE solver path"
        )
        self.bound = bound
        self.tol = tol
        self.K_terms = K_terms


class ConvergenceError(KGSpecError):
    """A limit did not converge within the horizon."""

    def __init__(self, message: str, last_increment: float):
        super().__init__(f"{message} (last increment {last_increment:.3e})")
        self.last_increment = last_increment


class SmallnessViolatedError(KGSpecError):
    """X-norm ledger exceeded the allowed multiple of the data norm."""

    def __init__(self, t: float, ledger_value: float, limit: float):
        super().__init__(
            f"Smallness violated at t={t:.4g}: X-norm {ledger_value:.3e} exceeds {limit:.3e}"
        )
        self.t = t
        self.ledger_value = ledger_value
        self.limit = limit


class AliasingError(KGSpecError):
    """Nonlinear term carries too much energy outside the retained band."""


class GridMismatchError(KGSpecError):
    """Trajectories or fields do not share the same grid."""
