"""Tensor-parameterized B-spline copulas: constraints, density, CDF, serialization.

A copula model couples D basis systems with a nonnegative parameter tensor
whose marginal sums along each axis equal that axis's basis weights.  Under
those constraints every univariate margin of the CDF is the identity.  D = 2
is the primary path; the same contraction code covers any D >= 2 (the
Bernstein copula is the special case with no interior knots).
"""

from __future__ import annotations

import json
from dataclasses import dataclass

import numpy as np

from .basis import BasisSystem, build_uniform_basis, cdf_matrix, density_matrix

CONSTRAINT_TOL = 1e-8

_AXIS_LETTERS = "abcdefghijkl"


@dataclass(eq=False)
class ParamTensor:
    """Nonnegative parameter tensor with per-axis marginal-sum targets.

    ``entries`` has shape (m_1, ..., m_D); ``targets[j]`` is the length-m_j
    vector that the sum of ``entries`` over all other axes must match.
    """

    entries: np.ndarray
    targets: list[np.ndarray]

    @property
    def dims(self) -> tuple[int, ...]:
        return self.entries.shape

    def marginal_sums(self, axis: int) -> np.ndarray:
        other = tuple(j for j in range(self.entries.ndim) if j != axis)
        return self.entries.sum(axis=other)


@dataclass(eq=False)
class CopulaModel:
    """D basis systems plus a matching parameter tensor."""

    bases: list[BasisSystem]
    params: ParamTensor

    @property
    def ndim(self) -> int:
        return len(self.bases)


@dataclass
class ConstraintReport:
    """Raw feasibility residuals of a parameter tensor."""

    axis_residuals: list[float]
    min_entry: float
    total_deviation: float
    ok: bool


def validate(params: ParamTensor, bases: list[BasisSystem] | None = None) -> ConstraintReport:
    """Check nonnegativity, total sum, and all marginal-sum constraints.

    Returns the raw residuals; ``ok`` flags violations beyond 1e-8 (the inner
    solver's feasibility tolerance).
    """
    if bases is not None:
        counts = tuple(b.count for b in bases)
        if counts != params.dims:
            raise ValueError(f"parameter dims {params.dims} do not match basis counts {counts}")
    if len(params.targets) != params.entries.ndim:
        raise ValueError("one target vector per tensor axis is required")
    residuals = []
    for j, t in enumerate(params.targets):
        if t.shape != (params.dims[j],):
            raise ValueError(f"target length mismatch on axis {j}")
        residuals.append(float(np.max(np.abs(params.marginal_sums(j) - t))))
    min_entry = float(params.entries.min())
    total_dev = float(abs(params.entries.sum() - 1.0))
    ok = (
        min_entry >= -CONSTRAINT_TOL
        and total_dev <= 1e-10 + CONSTRAINT_TOL
        and max(residuals) <= CONSTRAINT_TOL
    )
    return ConstraintReport(residuals, min_entry, total_dev, ok)


def contract(entries: np.ndarray, mats: list[np.ndarray]) -> np.ndarray:
    """Sum of entries[k_1..k_D] * prod_j mats[j][t, k_j], vectorized over t."""
    n = mats[0].shape[0]
    x = mats[0] @ entries.reshape(entries.shape[0], -1)
    for mat in mats[1:]:
        x = x.reshape(n, mat.shape[1], -1)
        x = np.einsum("nkr,nk->nr", x, mat)
    return x.reshape(n)


def _as_points(model: CopulaModel, point) -> tuple[np.ndarray, bool]:
    pts = np.asarray(point, dtype=float)
    scalar = pts.ndim == 1
    pts = np.atleast_2d(pts)
    if pts.shape[1] != model.ndim:
        raise ValueError(f"expected {model.ndim} coordinates, got {pts.shape[1]}")
    if pts.size and (pts.min() < 0.0 or pts.max() > 1.0):
        raise ValueError("coordinates must lie in [0, 1]")
    return pts, scalar


def density(model: CopulaModel, point) -> float | np.ndarray:
    """Copula density at one point (D,) or many points (N, D)."""
    pts, scalar = _as_points(model, point)
    mats = [density_matrix(b, pts[:, j]) for j, b in enumerate(model.bases)]
    vals = contract(model.params.entries, mats)
    return float(vals[0]) if scalar else vals


def cdf(model: CopulaModel, point) -> float | np.ndarray:
    """Copula CDF at one point (D,) or many points (N, D)."""
    pts, scalar = _as_points(model, point)
    mats = [cdf_matrix(b, pts[:, j]) for j, b in enumerate(model.bases)]
    vals = contract(model.params.entries, mats)
    return float(vals[0]) if scalar else vals


def diagonal_model(sys: BasisSystem) -> CopulaModel:
    """Maximal positive dependence for a shared basis: diagonal weight matrix."""
    entries = np.diag(sys.weights.copy())
    params = ParamTensor(entries, [sys.weights.copy(), sys.weights.copy()])
    return CopulaModel([sys, sys], params)


def independence_model(*bases: BasisSystem) -> CopulaModel:
    """Outer product of the weight vectors; the density is identically 1."""
    if len(bases) < 2:
        raise ValueError("need at least two basis systems")
    entries = bases[0].weights.copy()
    for b in bases[1:]:
        entries = np.multiply.outer(entries, b.weights)
    return CopulaModel(list(bases), ParamTensor(entries, [b.weights.copy() for b in bases]))


def model_from_arrays(bases: list[BasisSystem], entries: np.ndarray) -> CopulaModel:
    """Wrap a raw entry tensor with targets taken from the bases."""
    entries = np.asarray(entries, dtype=float)
    if entries.shape != tuple(b.count for b in bases):
        raise ValueError("entry tensor shape does not match basis counts")
    return CopulaModel(list(bases), ParamTensor(entries, [b.weights.copy() for b in bases]))


def model_to_dict(model: CopulaModel) -> dict:
    return {
        "degrees": [b.degree for b in model.bases],
        "counts": [b.count for b in model.bases],
        "interior_knot_counts": [b.interior_knots for b in model.bases],
        "entries": model.params.entries.ravel(order="C").tolist(),
        "targets": [t.tolist() for t in model.params.targets],
    }


def model_from_dict(doc: dict) -> CopulaModel:
    degrees = doc["degrees"]
    counts = doc["counts"]
    if "interior_knot_counts" in doc:
        for d, m, ik in zip(degrees, counts, doc["interior_knot_counts"]):
            if m - d - 1 != ik:
                raise ValueError("inconsistent interior knot count in model document")
    bases = [build_uniform_basis(d, m) for d, m in zip(degrees, counts)]
    entries = np.asarray(doc["entries"], dtype=float).reshape(tuple(counts), order="C")
    model = model_from_arrays(bases, entries)
    if "targets" in doc:
        for j, t in enumerate(doc["targets"]):
            if not np.allclose(np.asarray(t), model.params.targets[j], atol=1e-12):
                raise ValueError(f"stored targets disagree with basis weights on axis {j}")
    return model


def save_model(model: CopulaModel, path) -> None:
    with open(path, "w") as fh:
        json.dump(model_to_dict(model), fh, indent=2)


def load_model(path) -> CopulaModel:
    with open(path) as fh:
        return model_from_dict(json.load(fh))
