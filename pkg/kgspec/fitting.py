"""
Rate fitting on the final decade of a time series.
"""
import logging
import math
from typing import Optional, Sequence, Tuple

import numpy as np
from scipy import stats

from .config import settings
from .models import FitStatus, RateFit, RateModel

logging.basicConfig(level=logging.INFO)
logger = logging.getLogger(__name__)

MIN_SAMPLES = 8


def final_decade(times: Sequence[float]) -> Tuple[float, float]:
    t_end = float(np.max(times))
    return t_end / 10.0, t_end


def fit_rate(times: Sequence[float], values: Sequence[float], model: RateModel = RateModel.POWER,
             predicted: Optional[float] = None, tolerance: float = 0.05, log_power: float = 0.0,
             window: Optional[Tuple[float, float]] = None, gate: Optional[float] = None,
             clock: Optional[Sequence[float]] = None) -> RateFit:
    """
    Least-squares exponent of values against the model.

    power:     log v  ~ p log(clock),          clock defaults to 1 + t
    power_log: log v - k log ln(e + clock) ~ p log(clock), k = log_power
    exp:       log v  ~ p t

    A residual above the gate or too few usable samples gives an
    inconclusive fit, never a pass.
    """
    gate = settings.fit_gate if gate is None else gate
    times = np.asarray(times, dtype=float)
    values = np.asarray(values, dtype=float)
    clock = 1.0 + times if clock is None else np.asarray(clock, dtype=float)
    window = final_decade(times) if window is None else window
    base = dict(model=model, predicted=predicted, tolerance=tolerance, gate=gate,
                log_power=log_power, window=(float(window[0]), float(window[1])))

    mask = (times >= window[0]) & (times <= window[1]) & np.isfinite(values) & (values > 0)
    n = int(mask.sum())
    if n < MIN_SAMPLES:
        return RateFit(**base, n_samples=n, status=FitStatus.INCONCLUSIVE,
                       reason=f"only {n} usable samples in the fit window")

    y = np.log(values[mask])
    if model == RateModel.EXP:
        x = times[mask]
    else:
        x = np.log(clock[mask])
        if model == RateModel.POWER_LOG:
            y = y - log_power * np.log(np.log(math.e + clock[mask]))
    fit = stats.linregress(x, y)
    residual = float(np.sqrt(np.mean((y - (fit.intercept + fit.slope * x)) ** 2)))
    exponent = float(fit.slope)

    if residual > gate:
        status, reason = FitStatus.INCONCLUSIVE, f"residual {residual:.3g} above gate {gate:.3g}"
    elif predicted is not None and abs(exponent - predicted) > tolerance:
        status, reason = FitStatus.FAIL, f"exponent {exponent:.4f} vs predicted {predicted:.4f}"
    else:
        status, reason = FitStatus.PASS, ""
    if status != FitStatus.PASS:
        logger.warning(f"Rate fit {status.value}: {reason}")
    return RateFit(**base, exponent=exponent, intercept=float(fit.intercept), residual=residual,
                   n_samples=n, status=status, reason=reason)
