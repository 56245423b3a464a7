"""Penalized pseudo-likelihood EM for the copula parameter tensor.

Fitting alternates an E-step (mixture responsibilities averaged over the
sample) with a constrained M-step.  The M-step freezes the penalty derivative
at the current iterate, then solves for one Lagrange-multiplier vector per
axis by alternating per-index 1-D root solves; the multiplicative update
``r = tau / (sum of multipliers + penalty slope)`` then satisfies all
marginal-sum constraints at once.  The penalty is SCAD: linear near zero,
quadratically clipped, flat beyond alpha*beta, so the frozen-slope surrogate
minorizes the true objective and the penalized log-likelihood increases every
iteration.

Each 1-D root function is strictly decreasing from +inf to 0 on the
admissible ray, so a bracketed, bisection-safeguarded Newton iteration finds
the unique root; the solves are vectorized across all indices of a family.
The additive degeneracy between multiplier families is removed by recentering
every family except the last so its weighted mean stays at the configured
start value.
"""

from __future__ import annotations

from dataclasses import dataclass, field, replace

import numpy as np

from .basis import BasisSystem, density_matrix
from .copula import ParamTensor, contract


class ZeroDensityError(ValueError):
    """A sample point has zero mixture density under the current parameters."""


class MultiplierSolveError(RuntimeError):
    """The inner multiplier solver failed to converge."""


@dataclass(frozen=True)
class ScadParams:
    """SCAD tuning pair; alpha = 0 disables the penalty entirely."""

    alpha: float
    beta: float = 3.7

    def __post_init__(self):
        if self.alpha < 0:
            raise ValueError(f"alpha must be >= 0, got {self.alpha}")
        if self.beta <= 2:
            raise ValueError(f"beta must be > 2, got {self.beta}")


@dataclass(frozen=True)
class FitConfig:
    """Tolerances and iteration caps for the outer EM loop and inner solver."""

    outer_tol: float = 1e-8
    max_outer_iters: int = 5000
    inner_tol: float = 1e-10
    max_inner_iters: int = 500
    root_tol: float = 1e-12
    mu0: float = 0.5

    def __post_init__(self):
        for name in ("outer_tol", "inner_tol", "root_tol"):
            if getattr(self, name) <= 0:
                raise ValueError(f"{name} must be positive")


@dataclass(eq=False)
class FitReport:
    """Converged parameters plus diagnostics of one EM run.

    ``kkt_residual`` is the maximum stationarity defect of the penalized
    objective over entries above 1e-6.  ``lp_trajectory`` covers the feasible
    iterates (those after each M-step) and is nondecreasing up to solver
    noise; the unpenalized mean log-likelihood may dip when alpha > 0.
    """

    params: ParamTensor
    multipliers: list[np.ndarray]
    lp_trajectory: np.ndarray
    lpstar_trajectory: np.ndarray
    iterations: int
    converged: bool
    kkt_residual: float
    config: FitConfig
    penalty: ScadParams

    @property
    def mu(self) -> np.ndarray:
        return self.multipliers[0]

    @property
    def lam(self) -> np.ndarray:
        return self.multipliers[1]

    def to_dict(self, extra: dict | None = None) -> dict:
        doc = {
            "params": self.params.entries.ravel(order="C").tolist(),
            "dims": list(self.params.dims),
            "mu": self.multipliers[0].tolist(),
            "lambda": self.multipliers[1].tolist(),
            "multipliers": [m.tolist() for m in self.multipliers],
            "lp_trajectory": self.lp_trajectory.tolist(),
            "lpstar_trajectory": self.lpstar_trajectory.tolist(),
            "iterations": self.iterations,
            "converged": self.converged,
            "kkt_residual": self.kkt_residual,
            "config": {
                "outer_tol": self.config.outer_tol,
                "max_outer_iters": self.config.max_outer_iters,
                "inner_tol": self.config.inner_tol,
                "max_inner_iters": self.config.max_inner_iters,
                "root_tol": self.config.root_tol,
                "mu0": self.config.mu0,
            },
            "penalty": {"alpha": self.penalty.alpha, "beta": self.penalty.beta},
        }
        if extra:
            doc.update(extra)
        return doc


def scad(r, p: ScadParams):
    """SCAD penalty value, elementwise on nonnegative r."""
    r = np.asarray(r, dtype=float)
    a, b = p.alpha, p.beta
    flat = a * a * (b + 1.0) / 2.0
    mid = (2.0 * a * b * r - r * r - a * a) / (2.0 * (b - 1.0))
    out = np.where(r <= a, a * r, np.where(r <= a * b, mid, flat))
    return float(out) if out.ndim == 0 else out


def scad_deriv(r, p: ScadParams):
    """SCAD derivative: alpha, then linearly decaying to zero past alpha*beta."""
    r = np.asarray(r, dtype=float)
    a, b = p.alpha, p.beta
    decay = np.maximum(a * b - r, 0.0) / (b - 1.0)
    out = np.where(r <= a, a, decay)
    return float(out) if out.ndim == 0 else out


_AXIS_LETTERS = "abcdefghijkl"


def _phi_mats(bases: list[BasisSystem], pts: np.ndarray) -> list[np.ndarray]:
    return [density_matrix(b, pts[:, j]) for j, b in enumerate(bases)]


def _weighted_outer_mean(mats: list[np.ndarray], w: np.ndarray) -> np.ndarray:
    """(1/N) sum_t w_t * outer(mats[0][t], ..., mats[D-1][t])."""
    if len(mats) == 2:
        return (mats[0] * w[:, None]).T @ mats[1] / w.size
    sub = ",".join("n" + _AXIS_LETTERS[j] for j in range(len(mats)))
    sub += ",n->" + _AXIS_LETTERS[: len(mats)]
    return np.einsum(sub, *mats, w, optimize=True) / w.size


def _as_sample(sample, ndim: int) -> np.ndarray:
    pts = np.asarray(sample, dtype=float)
    if pts.ndim != 2 or pts.shape[1] != ndim:
        raise ValueError(f"sample must be an (N, {ndim}) array")
    if pts.shape[0] < 1:
        raise ValueError("empty sample")
    if pts.size and (pts.min() < 0.0 or pts.max() > 1.0):
        raise ValueError("sample coordinates must lie in [0, 1]")
    return pts


def init_param(bases: list[BasisSystem], sample) -> ParamTensor:
    """Moment-matched starting tensor: weight products times mean density products.

    Marginal sums are only approximately on target; the first M-step restores
    feasibility exactly.
    """
    pts = _as_sample(sample, len(bases))
    phis = _phi_mats(bases, pts)
    entries = _weighted_outer_mean(phis, np.ones(pts.shape[0]))
    for j, b in enumerate(bases):
        shape = [1] * len(bases)
        shape[j] = b.count
        entries = entries * b.weights.reshape(shape)
    return ParamTensor(entries, [b.weights.copy() for b in bases])


def e_step(params: ParamTensor, sample, bases: list[BasisSystem]) -> np.ndarray:
    """Averaged responsibilities; nonnegative, summing to 1 over all cells."""
    pts = _as_sample(sample, len(bases))
    phis = _phi_mats(bases, pts)
    return _e_step_cached(params.entries, phis)[0]


def _e_step_cached(entries: np.ndarray, phis: list[np.ndarray]) -> tuple[np.ndarray, np.ndarray]:
    dens = contract(entries, phis)
    if dens.min() <= 0.0:
        raise ZeroDensityError(
            "zero mixture density at a sample point (infeasible parameters or corrupted sample)"
        )
    tau = entries * _weighted_outer_mean(phis, 1.0 / dens)
    return tau, dens


def _broadcast(vec: np.ndarray, axis: int, ndim: int) -> np.ndarray:
    shape = [1] * ndim
    shape[axis] = vec.size
    return vec.reshape(shape)


def _solve_rows(tau2: np.ndarray, base2: np.ndarray, target: np.ndarray,
                x0: np.ndarray, root_tol: float) -> np.ndarray:
    """Solve sum_c tau2[i, c] / (base2[i, c] + x_i) = target[i] per row.

    Each row function is strictly decreasing and convex on the admissible ray
    x > -min(base2 over active cells), falling from +inf to 0, so the root is
    unique.  Newton steps are clamped into a shrinking bracket with bisection
    fallback, which converges for every row.
    """
    act = tau2 > 0.0

    def f_of(x):
        den = base2 + x[:, None]
        q = np.divide(tau2, den, out=np.zeros_like(tau2), where=act)
        return q, den

    lo = -np.min(np.where(act, base2, np.inf), axis=1)
    hi = lo + 1.0
    for _ in range(200):
        q, _ = f_of(hi)
        bad = q.sum(axis=1) >= target
        if not bad.any():
            break
        hi = np.where(bad, lo + 2.0 * (hi - lo), hi)
    else:
        raise MultiplierSolveError("failed to bracket a multiplier root")

    x = np.where((x0 > lo) & (x0 < hi), x0, 0.5 * (lo + hi))
    lob = lo.copy()
    hib = hi.copy()
    done = np.zeros(x.size, dtype=bool)
    for _ in range(200):
        q, den = f_of(x)
        g = q.sum(axis=1) - target
        done |= np.abs(g) <= root_tol
        done |= (hib - lob) <= 1e-15 * (1.0 + np.abs(x))
        if done.all():
            return x
        lob = np.where(~done & (g > 0), x, lob)
        hib = np.where(~done & (g < 0), x, hib)
        fp = -np.divide(q, den, out=np.zeros_like(q), where=act).sum(axis=1)
        with np.errstate(divide="ignore", invalid="ignore"):
            step = x - g / fp
        inside = np.isfinite(step) & (step > lob) & (step < hib)
        x = np.where(done, x, np.where(inside, step, 0.5 * (lob + hib)))
    raise MultiplierSolveError("multiplier root solve did not converge")


def _marginal_gaps(tau: np.ndarray, total: np.ndarray,
                   targets: list[np.ndarray]) -> list[np.ndarray]:
    """Per family: marginal sums of the implied update minus the targets."""
    entries = np.divide(tau, total, out=np.zeros_like(tau), where=tau > 0.0)
    gaps = []
    for j, t in enumerate(targets):
        other = tuple(k for k in range(tau.ndim) if k != j)
        gaps.append(entries.sum(axis=other) - t)
    return gaps


def _gauge_fix(mults: list[np.ndarray], targets: list[np.ndarray], mu0: float) -> None:
    """Pin each family's weighted mean except the last, preserving denominators."""
    carry = 0.0
    for j in range(len(mults) - 1):
        shift = float(targets[j] @ mults[j]) - mu0 * float(targets[j].sum())
        mults[j] -= shift
        carry += shift
    mults[-1] += carry


def _solve_system(tau: np.ndarray, targets: list[np.ndarray], pdot: np.ndarray,
                  cfg: FitConfig, warm: list[np.ndarray] | None) -> list[np.ndarray]:
    """Multiplier system solve: alternating sweeps, then joint Newton.

    Convergence is measured on what the M-step needs: the marginal-sum
    residuals of the implied multiplicative update.  A couple of alternating
    per-family sweeps (each index a bracketed 1-D root solve) give a feasible
    warm point; when the responsibility tensor is nearly block-diagonal those
    sweeps alone stall, because the inter-block multiplier gauges are almost
    unidentified, so a damped Newton iteration on the joint system (the
    Hessian of the concave inner dual, regularized along its exact gauge null
    space) finishes the solve.  The final gauge fix shifts whole families
    while preserving every denominator, so it lands on the same recentered
    fixed point the alternating scheme targets.
    """
    ndim = tau.ndim
    if warm is None:
        mults = [np.full(m, cfg.mu0) for m in tau.shape]
    else:
        mults = [w.copy() for w in warm]
    act = tau > 0.0
    sizes = list(tau.shape)
    offsets = np.concatenate([[0], np.cumsum(sizes)]).astype(int)
    order = list(range(ndim - 1, 0, -1)) + [0]

    total = pdot.copy()
    for j, mu in enumerate(mults):
        total = total + _broadcast(mu, j, ndim)

    def one_sweep(total_now):
        for j in order:
            base = total_now - _broadcast(mults[j], j, ndim)
            base_rows = np.moveaxis(base, j, 0).reshape(tau.shape[j], -1)
            tau_rows = np.moveaxis(tau, j, 0).reshape(tau.shape[j], -1)
            mults[j] = _solve_rows(tau_rows, base_rows, targets[j], mults[j], cfg.root_tol)
            total_now = base + _broadcast(mults[j], j, ndim)
        return total_now

    if warm is None:
        total = one_sweep(total)

    for _ in range(cfg.max_inner_iters):
        gaps = _marginal_gaps(tau, total, targets)
        gvec = np.concatenate(gaps)
        if float(np.max(np.abs(gvec))) < cfg.inner_tol:
            _gauge_fix(mults, targets, cfg.mu0)
            return mults
        w = np.divide(tau, total * total, out=np.zeros_like(tau), where=act)
        dim = int(offsets[-1])
        hess = np.zeros((dim, dim))
        for j in range(ndim):
            other = tuple(k for k in range(ndim) if k != j)
            sl_j = slice(offsets[j], offsets[j + 1])
            hess[sl_j, sl_j] = np.diag(w.sum(axis=other))
            for j2 in range(j + 1, ndim):
                rest = tuple(k for k in range(ndim) if k not in (j, j2))
                block = w.sum(axis=rest)
                sl_j2 = slice(offsets[j2], offsets[j2 + 1])
                hess[sl_j, sl_j2] = block
                hess[sl_j2, sl_j] = block.T
        eps = 1e-12 * max(1.0, float(np.max(hess.diagonal())))
        hess[np.diag_indices(dim)] += eps
        delta = np.linalg.solve(hess, gvec)

        l2 = float(np.linalg.norm(gvec))
        step = 1.0
        accepted = False
        for _ in range(60):
            trial = [mults[j] + step * delta[offsets[j] : offsets[j + 1]]
                     for j in range(ndim)]
            t_total = pdot.copy()
            for j, mu in enumerate(trial):
                t_total = t_total + _broadcast(mu, j, ndim)
            if np.all(t_total[act] > 0.0):
                t_gaps = _marginal_gaps(tau, t_total, targets)
                if float(np.linalg.norm(np.concatenate(t_gaps))) <= (1.0 - 1e-4 * step) * l2:
                    mults, total = trial, t_total
                    accepted = True
                    break
            step *= 0.5
        if not accepted:
            # one globalizing sweep of bracketed 1-D solves, then resume Newton
            total = one_sweep(total)
    raise MultiplierSolveError(
        f"multiplier solve did not converge within {cfg.max_inner_iters} iterations"
    )


def _update_entries(tau: np.ndarray, total_den: np.ndarray) -> np.ndarray:
    entries = np.divide(tau, total_den, out=np.zeros_like(tau), where=tau > 0.0)
    if entries.min() < 0.0:
        raise MultiplierSolveError("negative denominator in multiplicative update")
    return entries


# a slab whose responsibility mass is below this fraction of its marginal
# target cannot pin its multiplier at float precision (the root sits closer to
# the denominator pole than subtraction can resolve), and its contribution to
# the objective is below solver noise; treat it as flat
_DEGENERATE_REL = 1e-12


def _m_step_core(tau: np.ndarray, targets: list[np.ndarray], pdot: np.ndarray,
                 cfg: FitConfig, warm: list[np.ndarray] | None
                 ) -> tuple[np.ndarray, list[np.ndarray]]:
    """Solve the multipliers and apply the multiplicative update.

    When a slab of responsibilities along one axis is zero (or numerically
    negligible), the likelihood is flat there: those slab entries are fixed to
    their marginal target distributed proportionally to the other axes'
    targets, and the remaining subtensor is solved against correspondingly
    reduced targets, recursively if several axes degenerate.
    """
    ndim = tau.ndim
    for ax in range(ndim):
        other = tuple(k for k in range(ndim) if k != ax)
        slab_mass = tau.sum(axis=other)
        dead = np.flatnonzero(slab_mass <= targets[ax] * _DEGENERATE_REL)
        if dead.size:
            return _reduced_m_step(tau, targets, pdot, cfg, warm, ax, dead)
    mults = _solve_system(tau, targets, pdot, cfg, warm)
    total = pdot.copy()
    for j, mu in enumerate(mults):
        total = total + _broadcast(mu, j, ndim)
    return _update_entries(tau, total), mults


def _reduced_m_step(tau: np.ndarray, targets: list[np.ndarray], pdot: np.ndarray,
                    cfg: FitConfig, warm: list[np.ndarray] | None,
                    ax: int, dead: np.ndarray) -> tuple[np.ndarray, list[np.ndarray]]:
    ndim = tau.ndim
    keep = np.setdiff1d(np.arange(tau.shape[ax]), dead)
    if keep.size == 0:
        raise MultiplierSolveError("all responsibilities are zero")

    # fixed slab entries: target mass spread along the other axes' targets
    norm = targets[ax][dead].sum()
    fixed = np.ones([t.size if j != ax else dead.size for j, t in enumerate(targets)])
    for j, t in enumerate(targets):
        fixed = fixed * _broadcast(t / t.sum() if j != ax else targets[ax][dead],
                                   j, ndim)
    red_targets = [
        t - (t / t.sum()) * norm if j != ax else t[keep]
        for j, t in enumerate(targets)
    ]
    sub = np.take(tau, keep, axis=ax)
    sub_pdot = np.take(pdot, keep, axis=ax)
    sub_warm = None
    if warm is not None:
        sub_warm = [w.copy() if j != ax else w[keep] for j, w in enumerate(warm)]
    sub_entries, mults = _m_step_core(sub, red_targets, sub_pdot, cfg, sub_warm)

    entries = np.zeros_like(tau)
    idx = [slice(None)] * ndim
    idx[ax] = keep
    entries[tuple(idx)] = sub_entries
    idx[ax] = dead
    entries[tuple(idx)] = fixed

    full_mults = []
    for j, mu in enumerate(mults):
        if j == ax:
            fm = np.full(tau.shape[j], np.nan)
            fm[keep] = mu
            full_mults.append(fm)
        else:
            full_mults.append(mu)
    return entries, full_mults


def solve_multipliers(tau: np.ndarray, targets: list[np.ndarray], pdot: np.ndarray,
                      cfg: FitConfig | None = None,
                      warm: list[np.ndarray] | None = None) -> tuple[np.ndarray, ...]:
    """Multiplier vectors for the constrained update, one per tensor axis."""
    cfg = cfg or FitConfig()
    pdot = np.broadcast_to(np.asarray(pdot, dtype=float), tau.shape).copy()
    _, mults = _m_step_core(np.asarray(tau, dtype=float), list(targets), pdot, cfg, warm)
    return tuple(mults)


def m_step(tau: np.ndarray, mu: np.ndarray, lam: np.ndarray, pdot: np.ndarray) -> np.ndarray:
    """Multiplicative update from given multipliers (two-axis form)."""
    tau = np.asarray(tau, dtype=float)
    total = np.broadcast_to(np.asarray(pdot, dtype=float), tau.shape) \
        + np.asarray(mu)[:, None] + np.asarray(lam)[None, :]
    return _update_entries(tau, total)


def mean_loglik(params: ParamTensor, sample, bases: list[BasisSystem]) -> float:
    """Mean log copula density over the sample."""
    pts = _as_sample(sample, len(bases))
    dens = contract(params.entries, _phi_mats(bases, pts))
    if dens.min() <= 0.0:
        raise ZeroDensityError("zero density at a sample point")
    return float(np.mean(np.log(dens)))


def penalized_loglik(params: ParamTensor, sample, bases: list[BasisSystem],
                     p: ScadParams) -> float:
    """Mean log-likelihood minus the total penalty (feasible-iterate form).

    The Lagrange terms vanish on feasible parameters and are omitted.
    """
    return mean_loglik(params, sample, bases) - float(np.sum(scad(params.entries, p)))


def fit(sample, bases: list[BasisSystem], p: ScadParams,
        cfg: FitConfig | None = None) -> FitReport:
    """Penalized pseudo-likelihood EM fit for the two-axis copula."""
    if len(bases) != 2:
        raise ValueError("fit expects exactly two basis systems; use fit_nd otherwise")
    return fit_nd(sample, bases, p, cfg)


def fit_nd(sample, bases: list[BasisSystem], p: ScadParams,
           cfg: FitConfig | None = None) -> FitReport:
    """EM fit for any number of axes; the two-axis path is identical to `fit`."""
    cfg = cfg or FitConfig()
    if len(bases) < 2:
        raise ValueError("need at least two basis systems")
    pts = _as_sample(sample, len(bases))
    phis = _phi_mats(bases, pts)
    targets = [b.weights.copy() for b in bases]

    entries = init_param(bases, pts).entries
    lp: list[float] = []
    lpstar: list[float] = []
    mults: list[np.ndarray] | None = None
    converged = False
    iterations = 0
    for it in range(1, cfg.max_outer_iters + 1):
        iterations = it
        tau, dens = _e_step_cached(entries, phis)
        if it > 1:
            star = float(np.mean(np.log(dens)))
            lpstar.append(star)
            lp.append(star - float(np.sum(scad(entries, p))))
        pdot = scad_deriv(entries, p)
        new_entries, mults = _m_step_core(tau, targets, pdot, cfg, mults)
        delta = float(np.max(np.abs(new_entries - entries)))
        entries = new_entries
        if delta < cfg.outer_tol:
            converged = True
            break

    tau, dens = _e_step_cached(entries, phis)
    star = float(np.mean(np.log(dens)))
    lpstar.append(star)
    lp.append(star - float(np.sum(scad(entries, p))))

    # stationarity defect of the penalized objective at the final parameters
    grad = _weighted_outer_mean(phis, 1.0 / dens)
    total = scad_deriv(entries, p)
    for j, mu in enumerate(mults):
        total = total + _broadcast(mu, j, entries.ndim)
    mask = (entries > 1e-6) & np.isfinite(total)
    kkt = float(np.max(np.abs(grad - total)[mask])) if mask.any() else 0.0

    params = ParamTensor(entries, targets)
    return FitReport(
        params=params,
        multipliers=list(mults),
        lp_trajectory=np.asarray(lp),
        lpstar_trajectory=np.asarray(lpstar),
        iterations=iterations,
        converged=converged,
        kkt_residual=kkt,
        config=cfg,
        penalty=p,
    )
