"""Rejection sampling from copula models and the simulation data generators.

The envelope is a grid maximum of the density (grid includes all knot lines),
sharpened by a few local zoom passes and inflated by a configurable safety
factor.  If a proposal's density ever exceeds the envelope, the envelope is
raised to 1.05x the offending value and the whole run restarts from the same
seed, so results stay deterministic and the final envelope is always valid.

All randomness flows through counter-based Philox generators keyed by
``SeedSequence([seed, ...])`` paths, giving reproducible, disjoint streams
for replicate datasets.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .basis import build_uniform_basis
from .copula import CopulaModel, ParamTensor, density
from .margins import normal_quantile


class SamplerBudgetError(RuntimeError):
    """The proposal budget was exhausted (pathological envelope)."""


@dataclass(frozen=True)
class SamplerConfig:
    seed: int = 0
    grid_resolution: int = 201
    safety_factor: float = 1.05
    max_attempts_per_draw: int = 1_000_000

    def __post_init__(self):
        if self.grid_resolution < 51:
            raise ValueError("grid_resolution must be >= 51")
        if self.safety_factor < 1.0:
            raise ValueError("safety_factor must be >= 1.0")
        if self.max_attempts_per_draw < 1:
            raise ValueError("max_attempts_per_draw must be positive")


@dataclass
class SamplerStats:
    """Bookkeeping of one rejection-sampling run."""

    proposals: int
    accepted: int
    envelope: float
    grid_max: float
    restarts: int

    @property
    def acceptance_rate(self) -> float:
        return self.accepted / self.proposals if self.proposals else 0.0


def _rng(seed_path) -> np.random.Generator:
    return np.random.Generator(np.random.Philox(np.random.SeedSequence(list(seed_path))))


def _axis_grid(model: CopulaModel, axis: int, resolution: int) -> np.ndarray:
    pts = np.linspace(0.0, 1.0, resolution)
    return np.union1d(pts, model.bases[axis].span_breaks())


def _density_on_mesh(model: CopulaModel, axes: list[np.ndarray]) -> np.ndarray:
    mesh = np.meshgrid(*axes, indexing="ij")
    pts = np.column_stack([m.ravel() for m in mesh])
    return np.asarray(density(model, pts)).reshape([a.size for a in axes])


def _grid_max(model: CopulaModel, resolution: int) -> float:
    """Grid maximum with three local zoom refinements around the argmax."""
    axes = [_axis_grid(model, j, resolution) for j in range(model.ndim)]
    vals = _density_on_mesh(model, axes)
    best = float(vals.max())
    arg = np.unravel_index(int(vals.argmax()), vals.shape)
    center = np.array([axes[j][arg[j]] for j in range(model.ndim)])
    radius = np.array([
        (axes[j][min(arg[j] + 1, axes[j].size - 1)] - axes[j][max(arg[j] - 1, 0)]) / 2.0
        or 1.0 / resolution
        for j in range(model.ndim)
    ])
    for _ in range(3):
        local = [
            np.clip(np.linspace(center[j] - radius[j], center[j] + radius[j], 21), 0.0, 1.0)
            for j in range(model.ndim)
        ]
        vals = _density_on_mesh(model, local)
        arg = np.unravel_index(int(vals.argmax()), vals.shape)
        center = np.array([local[j][arg[j]] for j in range(model.ndim)])
        best = max(best, float(vals.max()))
        radius = radius / 10.0
    return best


def max_density(model: CopulaModel, cfg: SamplerConfig | None = None) -> float:
    """Envelope value for rejection sampling: refined grid max times safety."""
    cfg = cfg or SamplerConfig()
    return _grid_max(model, cfg.grid_resolution) * cfg.safety_factor


_BATCH = 8192


def rejection_sample(model: CopulaModel, count: int,
                     cfg: SamplerConfig | None = None) -> tuple[np.ndarray, SamplerStats]:
    """Exactly ``count`` i.i.d. draws from the copula density, with run stats."""
    cfg = cfg or SamplerConfig()
    if count < 1:
        raise ValueError("count must be positive")
    grid_max = _grid_max(model, cfg.grid_resolution)
    envelope = grid_max * cfg.safety_factor
    budget = cfg.max_attempts_per_draw * count
    restarts = 0
    while True:
        rng = _rng((cfg.seed,))
        out = np.empty((count, model.ndim))
        have = 0
        proposals = 0
        excess = None
        while have < count:
            batch = min(_BATCH, budget - proposals)
            if batch <= 0:
                raise SamplerBudgetError(
                    f"exceeded {budget} proposals for {count} draws (envelope {envelope:g})"
                )
            u = rng.uniform(size=(batch, model.ndim))
            s = rng.uniform(size=batch)
            dens = np.asarray(density(model, u))
            if dens.max() > envelope:
                excess = float(dens.max())
                break
            accept = np.flatnonzero(s * envelope <= dens)
            take = accept[: count - have]
            if take.size:
                out[have : have + take.size] = u[take]
                have += take.size
            if have >= count:
                # count only proposals up to the one yielding the final draw
                proposals += int(take[-1]) + 1
            else:
                proposals += batch
        if excess is not None:
            envelope = 1.05 * excess
            restarts += 1
            continue
        stats = SamplerStats(
            proposals=proposals,
            accepted=count,
            envelope=envelope,
            grid_max=grid_max,
            restarts=restarts,
        )
        return out, stats


def generate_study_data(model: CopulaModel, count: int, datasets: int, seed: int,
                        cfg: SamplerConfig | None = None) -> list[np.ndarray]:
    """Replicate datasets from disjoint streams spawned off one master seed."""
    cfg = cfg or SamplerConfig()
    out = []
    grid_max = _grid_max(model, cfg.grid_resolution)
    envelope = grid_max * cfg.safety_factor
    budget = cfg.max_attempts_per_draw * count
    for j in range(datasets):
        out.append(_draws_from_stream(model, count, envelope, budget, (seed, j)))
    return out


def _draws_from_stream(model: CopulaModel, count: int, envelope: float,
                       budget: int, seed_path) -> np.ndarray:
    while True:
        rng = _rng(seed_path)
        out = np.empty((count, model.ndim))
        have = 0
        proposals = 0
        excess = None
        while have < count:
            batch = min(_BATCH, budget - proposals)
            if batch <= 0:
                raise SamplerBudgetError("proposal budget exhausted")
            u = rng.uniform(size=(batch, model.ndim))
            s = rng.uniform(size=batch)
            dens = np.asarray(density(model, u))
            if dens.max() > envelope:
                excess = float(dens.max())
                break
            accept = np.flatnonzero(s * envelope <= dens)
            take = accept[: count - have]
            if take.size:
                out[have : have + take.size] = u[take]
                have += take.size
            proposals += batch
        if excess is not None:
            envelope = 1.05 * excess
            continue
        return out


def trivariate_block_model(n1: int = 20, n2: int = 20, n3: int = 2) -> CopulaModel:
    """Bernstein copula whose upper slab concentrates mass on the diagonal.

    The first third-axis slab is uniform with total mass 1/2; the second puts
    1/(2*n1) on each diagonal cell, so the dependence between the first two
    coordinates strengthens as the third grows.
    """
    if n1 != n2:
        raise ValueError("diagonal slab requires n1 == n2")
    entries = np.zeros((n1, n2, n3))
    entries[:, :, 0] = 1.0 / (2.0 * n1 * n2)
    for k in range(n1):
        entries[k, k, 1] = 1.0 / (2.0 * n1)
    if n3 > 2:
        raise ValueError("block construction is defined for n3 == 2")
    bases = [build_uniform_basis(n - 1, n) for n in (n1, n2, n3)]
    return CopulaModel(bases, ParamTensor(entries, [b.weights.copy() for b in bases]))


def baker_trivariate(count: int, n1: int = 20, n2: int = 20, n3: int = 2,
                     seed: int = 0, cfg: SamplerConfig | None = None
                     ) -> tuple[np.ndarray, np.ndarray, CopulaModel]:
    """Draws from the trivariate block copula plus their normal-score transform."""
    model = trivariate_block_model(n1, n2, n3)
    cfg = cfg or SamplerConfig(seed=seed, grid_resolution=61)
    uvw, _ = rejection_sample(model, count, cfg)
    xyz = normal_quantile(np.clip(uvw, 1e-12, 1.0 - 1e-12))
    return uvw, xyz, model


def uniform_ks_statistic(values: np.ndarray) -> float:
    """Kolmogorov-Smirnov distance of a sample to the uniform law on [0, 1]."""
    x = np.sort(np.asarray(values, dtype=float))
    n = x.size
    up = np.arange(1, n + 1) / n - x
    down = x - np.arange(0, n) / n
    return float(max(up.max(), down.max()))
