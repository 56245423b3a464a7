"""Simulation-study drivers: penalty MSE sweeps, CV tuning, size selection,
the trivariate density comparison, and small-sample MSE trends.

Three true parameter matrices drive the two-axis studies: a sparse
permutation-like matrix, a dense matrix with no zeros, and a block-diagonal
matrix; penalization should pay off exactly when the truth is sparse.  Study
data are drawn directly from the copulas and fitted in identity mode (the
coordinates are already uniform scores), which isolates the estimator from
rank-transform noise; the trivariate study uses rank-based pseudo-observations
end to end.
"""

from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .basis import build_uniform_basis
from .copula import CopulaModel, density, model_from_arrays, validate
from .em import FitConfig, ScadParams, fit, fit_nd
from .margins import fit_margin, joint_density, normal_quantile, pseudo_observations
from .sample import SamplerConfig, generate_study_data, rejection_sample, trivariate_block_model
from .select import SelectionGrid, cross_validate, mse, mse_joint_density, pseudo_aic, select_size

SPARSE = np.array([
    [0.125, 0.0, 0.0, 0.0, 0.125],
    [0.0, 0.25, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.0, 0.25, 0.0],
    [0.0, 0.0, 0.25, 0.0, 0.0],
])

DENSE = np.array([
    [0.050, 0.050, 0.050, 0.050, 0.050],
    [0.025, 0.150, 0.025, 0.025, 0.025],
    [0.025, 0.025, 0.025, 0.150, 0.025],
    [0.025, 0.025, 0.150, 0.025, 0.025],
])

BLOCK = np.array([
    [0.120, 0.005, 0.0, 0.0, 0.0],
    [0.005, 0.245, 0.0, 0.0, 0.0],
    [0.0, 0.0, 0.240, 0.010, 0.0],
    [0.0, 0.0, 0.010, 0.240, 0.0],
    [0.0, 0.0, 0.0, 0.0, 0.125],
])

FIXTURE_DEGREE = 3

# fits in the study sweeps use the default 1e-8 tolerance but enough headroom
# that slow unpenalized runs still converge
STUDY_FIT_CONFIG = FitConfig(max_outer_iters=30000)


def fixture_models() -> dict[str, CopulaModel]:
    """The three study truths keyed as sparse / dense / block."""
    out = {}
    for name, mat in (("sparse", SPARSE), ("dense", DENSE), ("block", BLOCK)):
        bases = [build_uniform_basis(FIXTURE_DEGREE, m) for m in mat.shape]
        out[name] = model_from_arrays(bases, mat)
    return out


def _fixture_seed(base: int, name: str) -> int:
    return base + {"sparse": 1, "dense": 2, "block": 3}[name]


def _mse_task(args):
    data, dims, alpha, beta, truth = args
    bases = [build_uniform_basis(FIXTURE_DEGREE, m) for m in dims]
    report = fit(data, bases, ScadParams(alpha, beta), STUDY_FIT_CONFIG)
    return float(np.sum((report.params.entries - truth) ** 2)), report.converged


def _run_tasks(fn, tasks, threads: int):
    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            return list(pool.map(fn, tasks, chunksize=1))
    return [fn(t) for t in tasks]


@dataclass
class PenaltyMseResult:
    alphas: list[float]
    betas: list[float]
    tables: dict[str, np.ndarray] = field(default_factory=dict)  # (alpha, beta) grids

    def summary(self) -> dict:
        out = {}
        for name, table in self.tables.items():
            flat = int(np.argmin(table))
            ia, ib = np.unravel_index(flat, table.shape)
            out[name] = {
                "best_alpha": self.alphas[ia],
                "best_beta": self.betas[ib],
                "table": table.tolist(),
            }
        return out


def penalty_mse_study(alphas=(0.0, 0.05, 0.1, 0.15, 0.2, 0.25), betas=(3.0,),
                      n: int = 1000, replicates: int = 20, seed: int = 500,
                      threads: int = 1,
                      fixtures: tuple[str, ...] = ("sparse", "dense", "block"),
                      ) -> PenaltyMseResult:
    """Mean squared parameter error per (alpha, beta) cell, per fixture."""
    models = fixture_models()
    result = PenaltyMseResult(list(alphas), list(betas))
    for name in fixtures:
        model = models[name]
        truth = model.params.entries
        datasets = generate_study_data(model, n, replicates, _fixture_seed(seed, name))
        table = np.empty((len(alphas), len(betas)))
        for ia, alpha in enumerate(alphas):
            for ib, beta in enumerate(betas):
                tasks = [(d, truth.shape, alpha, beta, truth) for d in datasets]
                scores = _run_tasks(_mse_task, tasks, threads)
                table[ia, ib] = float(np.mean([s for s, _ in scores]))
        result.tables[name] = table
    return result


@dataclass
class TuningCvResult:
    alphas: list[float]
    betas: list[float]
    tables: dict[str, np.ndarray] = field(default_factory=dict)  # mean CV per cell

    def summary(self) -> dict:
        out = {}
        for name, table in self.tables.items():
            flat = int(np.argmax(table))
            ia, ib = np.unravel_index(flat, table.shape)
            out[name] = {
                "best_alpha": self.alphas[ia],
                "best_beta": self.betas[ib],
                "table": table.tolist(),
            }
        return out


def tuning_cv_study(alphas=(0.0, 0.1, 0.25), betas=(3.0,), n: int = 1000,
                    replicates: int = 20, folds: int = 5, seed: int = 900,
                    threads: int = 1,
                    fixtures: tuple[str, ...] = ("sparse", "dense", "block"),
                    ) -> TuningCvResult:
    """Mean cross-validation score per (alpha, beta) cell at the true size."""
    models = fixture_models()
    result = TuningCvResult(list(alphas), list(betas))
    for name in fixtures:
        model = models[name]
        dims = model.params.dims
        datasets = generate_study_data(model, n, replicates, _fixture_seed(seed, name))
        table = np.zeros((len(alphas), len(betas)))
        for j, data in enumerate(datasets):
            grid = SelectionGrid(alphas=tuple(alphas), betas=tuple(betas),
                                 sizes=(dims,), folds=folds, seed=seed + 7 * j)
            rep = cross_validate(data, grid, degrees=(FIXTURE_DEGREE, FIXTURE_DEGREE),
                                 cfg=STUDY_FIT_CONFIG, pseudo_mode="identity",
                                 threads=threads)
            for ia, alpha in enumerate(alphas):
                for ib, beta in enumerate(betas):
                    table[ia, ib] += rep.cv_table[(*dims, alpha, beta)]
        result.tables[name] = table / replicates
    return result


@dataclass
class SizeSelectionResult:
    sizes: list[tuple[int, int]]
    cv_tables: dict[str, dict] = field(default_factory=dict)  # mean CV per size
    aic_tables: dict[str, dict] = field(default_factory=dict)  # mean AIC per size

    def summary(self) -> dict:
        out = {}
        for name in self.cv_tables:
            cv = self.cv_tables[name]
            aic = self.aic_tables[name]
            out[name] = {
                "cv": {f"{m},{n}": v for (m, n), v in cv.items()},
                "aic": {f"{m},{n}": v for (m, n), v in aic.items()},
                "best_cv": max(cv, key=cv.get),
                "best_aic": min(aic, key=aic.get),
            }
        return out


def size_selection_study(sizes=((4, 4), (4, 5), (4, 6), (5, 4), (5, 5), (5, 6),
                                (6, 4), (6, 5), (6, 6)),
                         n: int = 1000, replicates: int = 20, folds: int = 5,
                         seed: int = 1300, threads: int = 1,
                         fixtures: tuple[str, ...] = ("sparse", "dense", "block"),
                         ) -> SizeSelectionResult:
    """Mean CV and pseudo-AIC per candidate size, unpenalized fits."""
    models = fixture_models()
    sizes = [tuple(s) for s in sizes]
    result = SizeSelectionResult(sizes)
    for name in fixtures:
        model = models[name]
        datasets = generate_study_data(model, n, replicates, _fixture_seed(seed, name))
        cv_acc = {s: 0.0 for s in sizes}
        aic_acc = {s: 0.0 for s in sizes}
        for j, data in enumerate(datasets):
            rep = select_size(data, sizes, alpha=0.0, beta=3.0, cfg=STUDY_FIT_CONFIG,
                              method="both", degrees=(FIXTURE_DEGREE, FIXTURE_DEGREE),
                              folds=folds, seed=seed + 7 * j,
                              pseudo_mode="identity", threads=threads)
            for s in sizes:
                cv_acc[s] += rep.cv_table[s]
                aic_acc[s] += rep.aic_table[s]
        result.cv_tables[name] = {s: v / replicates for s, v in cv_acc.items()}
        result.aic_tables[name] = {s: v / replicates for s, v in aic_acc.items()}
    return result


@dataclass
class TrivariateResult:
    mse: dict[str, float] = field(default_factory=dict)
    max_constraint_residual: dict[str, float] = field(default_factory=dict)

    def summary(self) -> dict:
        return {"mse": self.mse, "max_constraint_residual": self.max_constraint_residual}


TRIVARIATE_SPECS = {
    "bernstein_20x20x2": ((20, 20, 2), (19, 19, 1)),
    "bspline_20x20x2": ((20, 20, 2), (3, 3, 1)),
    "bspline_10x10x2": ((10, 10, 2), (3, 3, 1)),
}


def trivariate_study(n: int = 2000, seed: int = 1700, alpha: float = 0.01,
                     beta: float = 2.25, threads: int = 1) -> TrivariateResult:
    """Joint-density MSE of three copula parameterizations on shared 3-D data.

    Data come from the block trivariate copula, pushed to normal margins; the
    truth evaluates the generating density exactly, the estimates use the
    rank-ECDF / kernel plug-in pipeline.
    """
    truth_model = trivariate_block_model()
    cfg3 = SamplerConfig(seed=seed, grid_resolution=61)
    uvw, _ = rejection_sample(truth_model, n, cfg3)
    xyz = normal_quantile(np.clip(uvw, 1e-12, 1 - 1e-12))
    norm_pdf = np.exp(-0.5 * xyz**2) / np.sqrt(2 * np.pi)
    truth_vals = np.asarray(density(truth_model, uvw)) * norm_pdf.prod(axis=1)

    sample_u = pseudo_observations(xyz)
    margins_hat = [fit_margin(xyz[:, j]) for j in range(3)]
    result = TrivariateResult()
    for label, (counts, degrees) in TRIVARIATE_SPECS.items():
        bases = [build_uniform_basis(d, m) for d, m in zip(degrees, counts)]
        report = fit_nd(sample_u, bases, ScadParams(alpha, beta), STUDY_FIT_CONFIG)
        est = joint_density(CopulaModel(bases, report.params), margins_hat, xyz)
        result.mse[label] = mse_joint_density(est, truth_vals)
        result.max_constraint_residual[label] = max(
            validate(report.params).axis_residuals
        )
    return result


@dataclass
class SmallSampleResult:
    sample_sizes: list[int]
    alphas: list[float]
    betas: list[float]
    tables: dict[str, dict[int, np.ndarray]] = field(default_factory=dict)

    def summary(self) -> dict:
        out = {}
        for name, per_n in self.tables.items():
            out[name] = {
                str(n): table.tolist() for n, table in per_n.items()
            }
            lo, hi = min(per_n), max(per_n)
            out[name]["mean_mse_decreases"] = bool(np.all(per_n[hi] < per_n[lo]))
        return out


def small_sample_study(sample_sizes=(100, 300), alphas=(0.0, 0.05, 0.1, 0.2),
                       betas=(2.5, 3.5), replicates: int = 10, seed: int = 2100,
                       threads: int = 1,
                       fixtures: tuple[str, ...] = ("sparse", "dense", "block"),
                       ) -> SmallSampleResult:
    """Penalty-MSE surfaces at small sample sizes; error shrinks with N."""
    models = fixture_models()
    result = SmallSampleResult(list(sample_sizes), list(alphas), list(betas))
    for name in fixtures:
        model = models[name]
        truth = model.params.entries
        per_n = {}
        for n in sample_sizes:
            datasets = generate_study_data(model, n, replicates,
                                           _fixture_seed(seed, name) + 101 * n)
            table = np.empty((len(alphas), len(betas)))
            for ia, alpha in enumerate(alphas):
                for ib, beta in enumerate(betas):
                    tasks = [(d, truth.shape, alpha, beta, truth) for d in datasets]
                    scores = _run_tasks(_mse_task, tasks, threads)
                    table[ia, ib] = float(np.mean([s for s, _ in scores]))
            per_n[n] = table
        result.tables[name] = per_n
    return result
