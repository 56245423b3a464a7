"""Tuning-parameter and model-size selection: cross-validation, pseudo-AIC, MSE.

Cross-validation scores each grid cell by the summed out-of-fold mean log
copula density.  In rank mode, pseudo-observations are recomputed on every
training set and held-out points are transformed through the training ECDFs
(the standard out-of-sample convention, which avoids leakage); in identity
mode the coordinates are used as given, which matches simulation studies
drawing directly from the copula.  Failed or non-finite cells are kept as NaN
sentinels and never win the argmax.
"""

from __future__ import annotations

import csv
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field

import numpy as np

from .basis import BasisSystem, build_uniform_basis
from .copula import ParamTensor, contract
from .em import FitConfig, FitReport, ScadParams, _phi_mats, fit_nd
from .margins import pseudo_observations


@dataclass(frozen=True)
class SelectionGrid:
    """Sweep definition: tuning values, candidate sizes, folds, seed."""

    alphas: tuple[float, ...] = (0.0, 0.02, 0.05, 0.1, 0.15, 0.2, 0.25)
    betas: tuple[float, ...] = (2.5, 3.0, 3.7, 4.0)
    sizes: tuple[tuple[int, ...], ...] = ((4, 5),)
    folds: int = 5
    seed: int = 0

    def __post_init__(self):
        if not (self.alphas and self.betas and self.sizes):
            raise ValueError("grids must be non-empty")
        if self.folds < 2:
            raise ValueError("need at least 2 folds")


@dataclass
class CellScore:
    size: tuple[int, ...]
    alpha: float
    beta: float
    fold: int
    score: float
    converged: bool


@dataclass(eq=False)
class SelectionReport:
    """Per-cell cross-validation scores and optional pseudo-AIC table."""

    folds: int
    rows: list[CellScore] = field(default_factory=list)
    cv_table: dict = field(default_factory=dict)
    aic_table: dict = field(default_factory=dict)

    def best_cv(self):
        return _argbest(self.cv_table, largest=True)

    def best_aic(self):
        return _argbest(self.aic_table, largest=False)

    def write_cv_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m", "n", "alpha", "beta", "fold", "score"])
            for r in self.rows:
                w.writerow([*r.size, _fmt(r.alpha), _fmt(r.beta), r.fold, _fmt(r.score)])

    def write_aic_csv(self, path) -> None:
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["m", "n", "aic"])
            for size, val in sorted(self.aic_table.items()):
                w.writerow([*size, _fmt(val)])

    def summary(self) -> dict:
        return {
            "folds": self.folds,
            "cv": {_key_str(k): v for k, v in self.cv_table.items()},
            "aic": {_key_str(k): v for k, v in self.aic_table.items()},
            "best_cv": _key_str(self.best_cv()) if self.best_cv() is not None else None,
            "best_aic": _key_str(self.best_aic()) if self.best_aic() is not None else None,
        }


def _fmt(x) -> str:
    return format(float(x), ".17g")


def _key_str(key) -> str:
    return ",".join(str(k) for k in key) if isinstance(key, tuple) else str(key)


def _argbest(table: dict, largest: bool):
    finite = {k: v for k, v in table.items() if math.isfinite(v)}
    if not finite:
        return None
    return (max if largest else min)(finite, key=finite.get)


def fold_indices(n: int, folds: int, seed: int) -> list[np.ndarray]:
    """Seeded random partition into folds whose sizes differ by at most 1."""
    if folds > n:
        raise ValueError("more folds than observations")
    rng = np.random.Generator(np.random.Philox(np.random.SeedSequence([seed])))
    return [np.sort(chunk) for chunk in np.array_split(rng.permutation(n), folds)]


def _rank_transform(train: np.ndarray, test: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
    train_u = pseudo_observations(train)
    n = train.shape[0]
    test_u = np.empty_like(test)
    for j in range(train.shape[1]):
        col = np.sort(train[:, j])
        test_u[:, j] = np.searchsorted(col, test[:, j], side="right") / (n + 1)
    return train_u, test_u


def _held_out_score(entries: np.ndarray, bases: list[BasisSystem], test_u: np.ndarray) -> float:
    dens = contract(entries, _phi_mats(bases, test_u))
    if dens.min() <= 0.0:
        return float("-inf")
    return float(np.mean(np.log(dens)))


def _cv_cell_task(args):
    (train, test, size, degrees, alpha, beta, cfg, mode) = args
    bases = [build_uniform_basis(d, m) for d, m in zip(degrees, size)]
    if mode == "rank":
        train_u, test_u = _rank_transform(train, test)
    else:
        train_u, test_u = train, test
    try:
        report = fit_nd(train_u, bases, ScadParams(alpha, beta), cfg)
    except Exception:
        return float("nan"), False
    if not report.converged:
        return float("nan"), False
    return _held_out_score(report.params.entries, bases, test_u), True


def cross_validate(data, grid: SelectionGrid, degrees: tuple[int, ...] = (3, 3),
                   cfg: FitConfig | None = None, pseudo_mode: str = "rank",
                   threads: int = 1) -> SelectionReport:
    """Score every (size, alpha, beta) cell by summed out-of-fold log density."""
    data = np.asarray(data, dtype=float)
    cfg = cfg or FitConfig()
    if pseudo_mode not in ("rank", "identity"):
        raise ValueError("pseudo_mode must be 'rank' or 'identity'")
    folds = fold_indices(data.shape[0], grid.folds, grid.seed)
    masks = []
    for idx in folds:
        mask = np.zeros(data.shape[0], dtype=bool)
        mask[idx] = True
        masks.append(mask)

    tasks = []
    keys = []
    for size in grid.sizes:
        for alpha in grid.alphas:
            for beta in grid.betas:
                for i, mask in enumerate(masks):
                    tasks.append((data[~mask], data[mask], size, degrees,
                                  alpha, beta, cfg, pseudo_mode))
                    keys.append((size, alpha, beta, i))

    if threads > 1:
        with ProcessPoolExecutor(max_workers=threads) as pool:
            results = list(pool.map(_cv_cell_task, tasks, chunksize=4))
    else:
        results = [_cv_cell_task(t) for t in tasks]

    report = SelectionReport(folds=grid.folds)
    sums: dict = {}
    bad: set = set()
    for (size, alpha, beta, i), (score, ok) in zip(keys, results):
        report.rows.append(CellScore(size, alpha, beta, i, score, ok))
        cell = (*size, alpha, beta)
        if not ok or not math.isfinite(score):
            bad.add(cell)
        sums[cell] = sums.get(cell, 0.0) + score
    for cell, total in sums.items():
        report.cv_table[cell] = float("nan") if cell in bad else total
    return report


def pseudo_aic(fit: FitReport | ParamTensor, sample, bases: list[BasisSystem]) -> float:
    """AIC-type score: -2 * summed log density + 2 * prod_j (m_j - 1).

    The correction counts only the free tensor entries; the penalty is not
    treated as a parameter.
    """
    if isinstance(fit, FitReport):
        if not fit.converged:
            raise ValueError("pseudo-AIC requires a converged fit")
        params = fit.params
    else:
        params = fit
    pts = np.asarray(sample, dtype=float)
    dens = contract(params.entries, _phi_mats(bases, pts))
    if dens.min() <= 0.0:
        raise ValueError("zero density at a data point")
    k = 1
    for m in params.dims:
        k *= m - 1
    return float(-2.0 * np.sum(np.log(dens)) + 2.0 * k)


def _aic_cell_task(args):
    (sample, size, degrees, alpha, beta, cfg) = args
    bases = [build_uniform_basis(d, m) for d, m in zip(degrees, size)]
    try:
        report = fit_nd(sample, bases, ScadParams(alpha, beta), cfg)
        if not report.converged:
            return float("nan"), False
        return pseudo_aic(report, sample, bases), True
    except Exception:
        return float("nan"), False


def select_size(data, sizes, alpha: float = 0.0, beta: float = 3.0,
                cfg: FitConfig | None = None, method: str = "both",
                degrees: tuple[int, ...] = (3, 3), folds: int = 5, seed: int = 0,
                pseudo_mode: str = "rank", threads: int = 1) -> SelectionReport:
    """Choose the tensor size by cross-validation, pseudo-AIC, or both."""
    if method not in ("cv", "aic", "both"):
        raise ValueError("method must be 'cv', 'aic', or 'both'")
    data = np.asarray(data, dtype=float)
    cfg = cfg or FitConfig()
    report = SelectionReport(folds=folds)
    if method in ("cv", "both"):
        grid = SelectionGrid(alphas=(alpha,), betas=(beta,), sizes=tuple(sizes),
                             folds=folds, seed=seed)
        cv = cross_validate(data, grid, degrees=degrees, cfg=cfg,
                            pseudo_mode=pseudo_mode, threads=threads)
        report.rows = cv.rows
        report.cv_table = {k[: len(sizes[0])]: v for k, v in cv.cv_table.items()}
    if method in ("aic", "both"):
        if pseudo_mode == "rank":
            sample = pseudo_observations(data)
        else:
            sample = data
        tasks = [(sample, tuple(size), degrees, alpha, beta, cfg) for size in sizes]
        if threads > 1:
            with ProcessPoolExecutor(max_workers=threads) as pool:
                results = list(pool.map(_aic_cell_task, tasks, chunksize=1))
        else:
            results = [_aic_cell_task(t) for t in tasks]
        for size, (score, ok) in zip(sizes, results):
            report.aic_table[tuple(size)] = score if ok else float("nan")
    return report


def mse(estimates, truth: ParamTensor | np.ndarray) -> float:
    """Mean over estimates of the summed squared entry deviations from truth."""
    t = truth.entries if isinstance(truth, ParamTensor) else np.asarray(truth, dtype=float)
    total = 0.0
    count = 0
    for est in estimates:
        e = est.entries if isinstance(est, ParamTensor) else np.asarray(est, dtype=float)
        if e.shape != t.shape:
            raise ValueError(f"shape mismatch: {e.shape} vs {t.shape}")
        total += float(np.sum((e - t) ** 2))
        count += 1
    if count == 0:
        raise ValueError("no estimates given")
    return total / count


def mse_joint_density(estimated: np.ndarray, truth: np.ndarray) -> float:
    """Mean squared pointwise deviation between two joint-density evaluations."""
    est = np.asarray(estimated, dtype=float)
    tru = np.asarray(truth, dtype=float)
    if est.shape != tru.shape:
        raise ValueError("mismatched evaluation shapes")
    return float(np.mean((est - tru) ** 2))
