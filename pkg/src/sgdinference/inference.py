"""Normal-approximation inference: CDF/quantile utilities, intervals, Wald tests."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)
_erfc_u = np.frompyfunc(math.erfc, 1, 1)


def normal_cdf(x):
    """Standard normal CDF via the complementary error function.

    Accurate to well under 1e-12 in absolute error across the real line.
    Scalars in, float out; arrays in, float64 array out.
    """
    if np.isscalar(x):
        return 0.5 * math.erfc(-float(x) / _SQRT2)
    arr = np.asarray(x, dtype=float)
    return 0.5 * _erfc_u(-arr / _SQRT2).astype(float)


def _normal_pdf(x: float) -> float:
    return math.exp(-0.5 * x * x) / _SQRT2PI


# rational initial approximation for the normal quantile (low/central/high
# regions), then Newton steps against the erfc-based CDF
_QA = (-3.969683028665376e+01, 2.209460984245205e+02, -2.759285104469687e+02,
       1.383577518672690e+02, -3.066479806614716e+01, 2.506628277459239e+00)
_QB = (-5.447609879822406e+01, 1.615858368580409e+02, -1.556989798598866e+02,
       6.680131188771972e+01, -1.328068155288572e+01)
_QC = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e+00,
       -2.549732539343734e+00, 4.374664141464968e+00, 2.938163982698783e+00)
_QD = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e+00,
       3.754408661907416e+00)
_Q_LOW = 0.02425


def _quantile_seed(p: float) -> float:
    if p < _Q_LOW:
        q = math.sqrt(-2.0 * math.log(p))
        return (((((_QC[0] * q + _QC[1]) * q + _QC[2]) * q + _QC[3]) * q + _QC[4]) * q + _QC[5]) / \
               ((((_QD[0] * q + _QD[1]) * q + _QD[2]) * q + _QD[3]) * q + 1.0)
    if p > 1.0 - _Q_LOW:
        q = math.sqrt(-2.0 * math.log(1.0 - p))
        return -(((((_QC[0] * q + _QC[1]) * q + _QC[2]) * q + _QC[3]) * q + _QC[4]) * q + _QC[5]) / \
               ((((_QD[0] * q + _QD[1]) * q + _QD[2]) * q + _QD[3]) * q + 1.0)
    q = p - 0.5
    r = q * q
    return (((((_QA[0] * r + _QA[1]) * r + _QA[2]) * r + _QA[3]) * r + _QA[4]) * r + _QA[5]) * q / \
           (((((_QB[0] * r + _QB[1]) * r + _QB[2]) * r + _QB[3]) * r + _QB[4]) * r + 1.0)


def normal_quantile(p: float) -> float:
    """Inverse of normal_cdf on (0, 1): rational seed plus two Newton steps."""
    p = float(p)
    if not 0.0 < p < 1.0:
        raise ValueError(f"p must lie in (0, 1), got {p}")
    x = _quantile_seed(p)
    for _ in range(2):
        err = normal_cdf(x) - p
        pdf = _normal_pdf(x)
        if pdf == 0.0:
            break
        x -= err / pdf
    return x


@dataclass(frozen=True)
class ConfidenceInterval:
    """Two-sided interval center +- half_width at the given level.

    degenerate marks a zero variance estimate: the interval collapses to a
    point and should not be read as exact certainty.
    """

    center: float
    half_width: float
    level: float
    label: str = ""
    degenerate: bool = False

    @property
    def lower(self) -> float:
        return self.center - self.half_width

    @property
    def upper(self) -> float:
        return self.center + self.half_width


def confidence_interval(estimate: float, vhat: float, level: float = 0.95,
                        label: str = "") -> ConfidenceInterval:
    if not 0.0 < level < 1.0:
        raise ValueError(f"level must lie in (0, 1), got {level}")
    vhat = float(vhat)
    if not math.isfinite(vhat) or vhat < 0.0:
        raise ValueError(f"variance estimate must be finite and >= 0, got {vhat}")
    if vhat == 0.0:
        return ConfidenceInterval(center=float(estimate), half_width=0.0,
                                  level=level, label=label, degenerate=True)
    z = normal_quantile(0.5 * (1.0 + level))
    return ConfidenceInterval(center=float(estimate), half_width=z * math.sqrt(vhat),
                              level=level, label=label)


@dataclass(frozen=True)
class WaldResult:
    """Two-sided z-test of one coordinate against zero."""

    coordinate: int
    z: float
    p_value: float
    reject_at: Optional[float] = None  # significance level if a rejection was requested and met


def wald_test(theta: np.ndarray, coordinate: int, vhat: float,
              significance: Optional[float] = None) -> WaldResult:
    """Test H0: theta[coordinate] = 0 with the supplied variance estimate."""
    theta = np.asarray(theta, dtype=float)
    if not 0 <= coordinate < theta.shape[0]:
        raise ValueError(f"coordinate {coordinate} out of range for dim {theta.shape[0]}")
    vhat = float(vhat)
    if not math.isfinite(vhat) or vhat <= 0.0:
        raise ValueError(f"variance estimate must be positive for a Wald test, got {vhat}")
    z = float(theta[coordinate]) / math.sqrt(vhat)
    p = 2.0 * (1.0 - normal_cdf(abs(z)))
    reject_at = None
    if significance is not None:
        if not 0.0 < significance < 1.0:
            raise ValueError(f"significance must lie in (0, 1), got {significance}")
        if p < significance:
            reject_at = significance
    return WaldResult(coordinate=coordinate, z=z, p_value=p, reject_at=reject_at)
