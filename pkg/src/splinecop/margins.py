"""Marginal machinery: pseudo-observations, rescaled ECDF, kernel densities.

The copula fit consumes rank-rescaled pseudo-observations; joint-density
reconstruction multiplies the copula density at ECDF-transformed coordinates
by kernel marginal density estimates.  The standard-normal quantile here only
feeds the simulation harness.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from .copula import CopulaModel, density

_SQRT2 = math.sqrt(2.0)
_SQRT2PI = math.sqrt(2.0 * math.pi)
_erfc = np.vectorize(math.erfc, otypes=[float])


@dataclass(eq=False)
class MarginalModel:
    """Sorted sample plus a Gaussian-kernel bandwidth."""

    sample: np.ndarray
    bandwidth: float

    @property
    def size(self) -> int:
        return self.sample.size


def fit_margin(data) -> MarginalModel:
    """Build a marginal model with the Silverman rule-of-thumb bandwidth.

    The spread estimate is min(sample sd, IQR / 1.34), which guards the
    bandwidth against heavy tails; a zero-spread sample is rejected.
    """
    x = np.sort(np.asarray(data, dtype=float))
    if x.size < 2:
        raise ValueError("need at least 2 observations")
    if not np.isfinite(x).all():
        raise ValueError("non-finite values in sample")
    sd = x.std(ddof=1)
    iqr = np.percentile(x, 75) - np.percentile(x, 25)
    spread = min(sd, iqr / 1.34) if iqr > 0 else sd
    if spread <= 0:
        raise ValueError("zero-variance sample")
    h = 1.06 * spread * x.size ** (-0.2)
    return MarginalModel(sample=x, bandwidth=float(h))


def pseudo_observations(data) -> np.ndarray:
    """Rank-rescaled observations: per axis, count(x_s <= x_t) / (N + 1).

    Ties share the value given by the <=-count itself.  Output lies strictly
    inside (0, 1).
    """
    x = np.asarray(data, dtype=float)
    if x.ndim == 1:
        x = x[:, None]
    if x.shape[0] < 2:
        raise ValueError("need at least 2 observations")
    if not np.isfinite(x).all():
        raise ValueError("non-finite values in data")
    n = x.shape[0]
    out = np.empty_like(x)
    for j in range(x.shape[1]):
        col = x[:, j]
        out[:, j] = np.searchsorted(np.sort(col), col, side="right") / (n + 1)
    return out


def ecdf_rescaled(model: MarginalModel, x) -> float | np.ndarray:
    """Right-continuous rescaled ECDF, count(sample <= x) / (N + 1)."""
    xv = np.asarray(x, dtype=float)
    vals = np.searchsorted(model.sample, np.atleast_1d(xv), side="right") / (model.size + 1)
    return float(vals[0]) if xv.ndim == 0 else vals


def kde_density(model: MarginalModel, x) -> float | np.ndarray:
    """Gaussian-kernel density estimate at x (scalar or array)."""
    xv = np.asarray(x, dtype=float)
    pts = np.atleast_1d(xv)
    z = (pts[:, None] - model.sample[None, :]) / model.bandwidth
    vals = np.exp(-0.5 * z * z).mean(axis=1) / (model.bandwidth * _SQRT2PI)
    return float(vals[0]) if xv.ndim == 0 else vals


def joint_density(model: CopulaModel, margins: list[MarginalModel], point) -> float | np.ndarray:
    """c(F_1(x_1), ..., F_D(x_D)) * prod_j f_j(x_j) at one or many points."""
    if len(margins) != model.ndim:
        raise ValueError(f"expected {model.ndim} marginal models, got {len(margins)}")
    pts = np.asarray(point, dtype=float)
    scalar = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != model.ndim:
        raise ValueError(f"expected {model.ndim} coordinates, got {pts.shape[1]}")
    u = np.column_stack([ecdf_rescaled(mg, pts[:, j]) for j, mg in enumerate(margins)])
    vals = density(model, u)
    for j, mg in enumerate(margins):
        vals = vals * kde_density(mg, pts[:, j])
    return float(vals[0]) if scalar else vals


def normal_cdf(x) -> float | np.ndarray:
    """Standard normal CDF via the complementary error function."""
    xv = np.asarray(x, dtype=float)
    vals = 0.5 * _erfc(-np.atleast_1d(xv) / _SQRT2)
    return float(vals[0]) if xv.ndim == 0 else vals


# Rational approximation coefficients (Acklam), refined by one Halley step.
_A = (-3.969683028665376e01, 2.209460984245205e02, -2.759285104469687e02,
      1.383577518672690e02, -3.066479806614716e01, 2.506628277459239e00)
_B = (-5.447609879822406e01, 1.615858368580409e02, -1.556989798598866e02,
      6.680131188771972e01, -1.328068155288572e01)
_C = (-7.784894002430293e-03, -3.223964580411365e-01, -2.400758277161838e00,
      -2.549732539343734e00, 4.374664141464968e00, 2.938163982698783e00)
_D = (7.784695709041462e-03, 3.224671290700398e-01, 2.445134137142996e00,
      3.754408661907416e00)
_P_LOW = 0.02425


def normal_quantile(p) -> float | np.ndarray:
    """Standard normal quantile, accurate to well under 1e-9 absolute."""
    pv = np.asarray(p, dtype=float)
    pa = np.atleast_1d(pv)
    if pa.size and (pa.min() <= 0.0 or pa.max() >= 1.0):
        raise ValueError("probabilities must lie strictly inside (0, 1)")

    x = np.empty_like(pa)
    low = pa < _P_LOW
    high = pa > 1.0 - _P_LOW
    mid = ~(low | high)

    if low.any():
        q = np.sqrt(-2.0 * np.log(pa[low]))
        x[low] = ((((( _C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
                 (((( _D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if high.any():
        q = np.sqrt(-2.0 * np.log(1.0 - pa[high]))
        x[high] = -((((( _C[0] * q + _C[1]) * q + _C[2]) * q + _C[3]) * q + _C[4]) * q + _C[5]) / \
                  (((( _D[0] * q + _D[1]) * q + _D[2]) * q + _D[3]) * q + 1.0)
    if mid.any():
        q = pa[mid] - 0.5
        r = q * q
        x[mid] = ((((( _A[0] * r + _A[1]) * r + _A[2]) * r + _A[3]) * r + _A[4]) * r + _A[5]) * q / \
                 ((((( _B[0] * r + _B[1]) * r + _B[2]) * r + _B[3]) * r + _B[4]) * r + 1.0)

    # one Halley refinement against the erfc-based CDF; the upper tail works
    # through the complementary probability (1 - p is exact for p >= 0.5)
    upper = pa > 0.5
    err = np.where(upper,
                   (1.0 - pa) - 0.5 * _erfc(x / _SQRT2),
                   0.5 * _erfc(-x / _SQRT2) - pa)
    u = err * _SQRT2PI * np.exp(0.5 * x * x)
    x = x - u / (1.0 + 0.5 * x * u)
    return float(x[0]) if pv.ndim == 0 else x
