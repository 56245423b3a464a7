"""Clamped B-spline basis systems on the unit interval.

Everything downstream (copula densities, EM fitting, samplers) rests on one
object: a clamped B-spline basis with equally spaced interior knots together
with the integral weight of each basis function.  Basis values come from the
Cox-de Boor recurrence, integrals from the closed-form support-width identity,
and cumulative functions from per-knot-span Gauss-Legendre panels (exact for
polynomials of the basis degree).
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial.legendre import leggauss

MAX_DEGREE = 30


def uniform_knots(degree: int, count: int) -> np.ndarray:
    """Clamped knot vector with ``count - degree`` equal intervals on [0, 1].

    The boundary knots are repeated ``degree + 1`` times; interior knots are
    at i/p for i = 1..p-1 with p = count - degree.  Length is
    ``count + degree + 1``.
    """
    if degree < 1:
        raise ValueError(f"degree must be >= 1, got {degree}")
    if degree > MAX_DEGREE:
        raise ValueError(f"degree must be <= {MAX_DEGREE}, got {degree}")
    if count < degree + 1:
        raise ValueError(
            f"basis count must be >= degree + 1, got count={count}, degree={degree}"
        )
    p = count - degree
    interior = np.arange(1, p) / p
    return np.concatenate([np.zeros(degree + 1), interior, np.ones(degree + 1)])


@dataclass(eq=False)
class BasisSystem:
    """One axis's normalized B-spline system.

    Treat instances as immutable after construction; all evaluations are pure,
    so a system can be shared freely across threads.

    Attributes
    ----------
    degree : spline degree d (>= 1)
    count : number of basis functions m (>= d + 1); ``count == degree + 1``
        is the Bernstein case with no interior knots
    knots : clamped knot vector of length m + d + 1
    weights : integral of each basis function, length m; positive, sums to 1
    """

    degree: int
    count: int
    knots: np.ndarray
    weights: np.ndarray
    # cumulative unnormalized span integrals, shape (m, spans+1); built lazily
    _cum_spans: np.ndarray | None = field(default=None, repr=False)

    @property
    def spans(self) -> int:
        """Number of knot intervals p = count - degree."""
        return self.count - self.degree

    @property
    def interior_knots(self) -> int:
        return self.spans - 1

    def span_breaks(self) -> np.ndarray:
        """The p + 1 distinct knot values delimiting the spans."""
        d = self.degree
        return self.knots[d : d + self.spans + 1]


def build_uniform_basis(degree: int, count: int) -> BasisSystem:
    """Construct the clamped equally spaced system with precomputed weights."""
    knots = uniform_knots(degree, count)
    weights = _closed_form_integrals(degree, count, knots)
    return BasisSystem(degree=degree, count=count, knots=knots, weights=weights)


def _closed_form_integrals(degree: int, count: int, knots: np.ndarray) -> np.ndarray:
    # integral of a degree-d basis function = support width / (d + 1)
    return (knots[degree + 1 : degree + 1 + count] - knots[:count]) / (degree + 1)


def basis_integrals(sys: BasisSystem) -> np.ndarray:
    """Integral over [0, 1] of each basis function (closed form)."""
    return _closed_form_integrals(sys.degree, sys.count, sys.knots)


def _find_spans(sys: BasisSystem, x: np.ndarray) -> np.ndarray:
    # 0-based index i into the knot vector with t_i <= x < t_{i+1}; x == 1 is
    # folded into the last nonempty span so the final basis function is 1 there
    span = np.searchsorted(sys.knots, x, side="right") - 1
    return np.clip(span, sys.degree, sys.count - 1)


def design_matrix(sys: BasisSystem, x) -> np.ndarray:
    """Values of all ``count`` basis functions at points x, shape (len(x), count).

    Uses the Cox-de Boor recurrence on the d + 1 bases active at each point.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise ValueError("evaluation points must lie in [0, 1]")
    T, d, m = sys.knots, sys.degree, sys.count
    span = _find_spans(sys, x)
    npts = x.size
    vals = np.zeros((npts, d + 1))
    vals[:, 0] = 1.0
    left = np.empty((npts, d))
    right = np.empty((npts, d))
    for j in range(1, d + 1):
        left[:, j - 1] = x - T[span + 1 - j]
        right[:, j - 1] = T[span + j] - x
        saved = np.zeros(npts)
        for r in range(j):
            tmp = vals[:, r] / (right[:, r] + left[:, j - 1 - r])
            vals[:, r] = saved + right[:, r] * tmp
            saved = left[:, j - 1 - r] * tmp
        vals[:, j] = saved
    out = np.zeros((npts, m))
    cols = span[:, None] - d + np.arange(d + 1)[None, :]
    np.put_along_axis(out, cols, vals, axis=1)
    return out


def eval_bspline(sys: BasisSystem, k: int, x: float) -> float:
    """Value of the k-th basis function (k in 1..count) at x in [0, 1]."""
    _check_index(sys, k)
    return float(design_matrix(sys, [x])[0, k - 1])


def density_matrix(sys: BasisSystem, x) -> np.ndarray:
    """Normalized basis densities (basis value / weight) at x, shape (len(x), count)."""
    return design_matrix(sys, x) / sys.weights


def eval_density(sys: BasisSystem, k: int, x: float) -> float:
    """The k-th normalized basis density (integrates to 1 over [0, 1])."""
    _check_index(sys, k)
    return float(eval_bspline(sys, k, x) / sys.weights[k - 1])


def _span_cumulative(sys: BasisSystem) -> np.ndarray:
    # cum[k, s] = integral of unnormalized basis k over [0, break_s]
    if sys._cum_spans is None:
        breaks = sys.span_breaks()
        nodes, wts = leggauss(sys.degree + 2)
        mid = 0.5 * (breaks[:-1] + breaks[1:])
        half = 0.5 * np.diff(breaks)
        pts = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
        dm = design_matrix(sys, pts).reshape(sys.spans, nodes.size, sys.count)
        span_int = np.einsum("sgk,g->sk", dm, wts) * half[:, None]
        cum = np.zeros((sys.count, sys.spans + 1))
        cum[:, 1:] = np.cumsum(span_int.T, axis=1)
        sys._cum_spans = cum
    return sys._cum_spans


def cdf_matrix(sys: BasisSystem, x) -> np.ndarray:
    """Cumulative normalized basis functions at x, shape (len(x), count).

    Accumulates exact Gauss-Legendre panels per knot span, plus a partial
    panel from the span start to each point.
    """
    x = np.atleast_1d(np.asarray(x, dtype=float))
    if x.size and (x.min() < 0.0 or x.max() > 1.0):
        raise ValueError("evaluation points must lie in [0, 1]")
    d = sys.degree
    cum = _span_cumulative(sys)
    breaks = sys.span_breaks()
    span = _find_spans(sys, x) - d  # 0-based span number in 0..p-1
    a = breaks[span]
    nodes, wts = leggauss(d + 2)
    mid = 0.5 * (a + x)
    half = 0.5 * (x - a)
    pts = (mid[:, None] + half[:, None] * nodes[None, :]).ravel()
    dm = design_matrix(sys, pts).reshape(x.size, nodes.size, sys.count)
    partial = np.einsum("ngk,g->nk", dm, wts) * half[:, None]
    return (cum[:, span].T + partial) / sys.weights


def eval_cdf(sys: BasisSystem, k: int, x: float) -> float:
    """CDF of the k-th normalized basis density at x; 0 at 0, 1 at 1."""
    _check_index(sys, k)
    return float(cdf_matrix(sys, [x])[0, k - 1])


def _check_index(sys: BasisSystem, k: int) -> None:
    if not 1 <= k <= sys.count:
        raise IndexError(f"basis index {k} out of range 1..{sys.count}")
