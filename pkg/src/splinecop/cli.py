"""Command-line front end: fit, select, sample, density-grid, reproduce.

Inputs and outputs are plain CSV/JSON so runs diff cleanly.  Every command is
deterministic given its input bytes, resolved configuration, and seed, and
each run echoes its fully resolved configuration into the output directory.

Exit codes: 0 success, 2 usage or parse error, 3 non-convergence,
4 sampler proposal budget exhausted.
"""

from __future__ import annotations

import argparse
import csv
import json
import sys
from pathlib import Path

import numpy as np

from .basis import build_uniform_basis
from .copula import CopulaModel, density, load_model, model_to_dict, save_model
from .em import FitConfig, ScadParams, fit_nd
from .margins import fit_margin, joint_density, pseudo_observations
from .sample import SamplerBudgetError, SamplerConfig, rejection_sample
from .select import SelectionGrid, cross_validate, select_size
from . import studies

EXIT_OK = 0
EXIT_USAGE = 2
EXIT_NO_CONVERGENCE = 3
EXIT_SAMPLER_BUDGET = 4


class UsageError(Exception):
    pass


def _fmt(x: float) -> str:
    return format(float(x), ".17g")


def read_config_file(path: str) -> dict:
    """Flat ``key = value`` lines; blank lines and '#' comments ignored."""
    out = {}
    for lineno, raw in enumerate(Path(path).read_text().splitlines(), start=1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise UsageError(f"{path}:{lineno}: expected 'key = value', got {raw!r}")
        key, value = line.split("=", 1)
        out[key.strip()] = value.strip()
    return out


def read_csv_columns(path: str, cols: list[str] | None) -> np.ndarray:
    """Numeric columns from a headed CSV; parse errors name their line."""
    with open(path, newline="") as fh:
        reader = csv.reader(fh)
        try:
            header = next(reader)
        except StopIteration:
            raise UsageError(f"{path}: empty file, header row required")
        header = [h.strip() for h in header]
        if cols is None:
            cols = header
        try:
            idx = [header.index(c) for c in cols]
        except ValueError as exc:
            raise UsageError(f"{path}: column not found: {exc}")
        rows = []
        for lineno, row in enumerate(reader, start=2):
            if not row or all(not c.strip() for c in row):
                continue
            vals = []
            for j in idx:
                if j >= len(row) or not row[j].strip():
                    raise UsageError(f"{path}:{lineno}: missing value in column {header[j]!r}")
                try:
                    vals.append(float(row[j]))
                except ValueError:
                    raise UsageError(
                        f"{path}:{lineno}: non-numeric value {row[j]!r} in column {header[j]!r}"
                    )
            rows.append(vals)
    if not rows:
        raise UsageError(f"{path}: no data rows")
    return np.asarray(rows)


def write_csv(path, header: list[str], rows) -> None:
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(header)
        for row in rows:
            w.writerow([_fmt(v) if isinstance(v, (int, float, np.floating)) else v
                        for v in row])


def _parse_int_list(text: str) -> list[int]:
    return [int(t) for t in text.replace("x", ",").split(",") if t.strip()]


def _parse_sizes(text: str) -> list[tuple[int, ...]]:
    # "4x5;5x5" or "4,5;5,5"
    return [tuple(_parse_int_list(part)) for part in text.split(";") if part.strip()]


def _parse_grid(text: str) -> dict:
    # "alphas=0,0.05,0.1;betas=3;sizes=4x5+5x5"
    out = {}
    for part in text.split(";"):
        if not part.strip():
            continue
        if "=" not in part:
            raise UsageError(f"bad --grid fragment {part!r}")
        key, val = part.split("=", 1)
        key = key.strip()
        if key in ("alphas", "betas"):
            out[key] = tuple(float(v) for v in val.split(",") if v.strip())
        elif key == "sizes":
            out[key] = tuple(tuple(_parse_int_list(s)) for s in val.split("+") if s.strip())
        else:
            raise UsageError(f"unknown --grid key {key!r}")
    return out


def _resolved(args: argparse.Namespace, keys: list[str]) -> dict:
    return {k: getattr(args, k) for k in keys if getattr(args, k, None) is not None}


def _echo_config(outdir: Path, resolved: dict) -> None:
    outdir.mkdir(parents=True, exist_ok=True)
    with open(outdir / "resolved_config.json", "w") as fh:
        json.dump(resolved, fh, indent=2, default=str)


def _fit_config(args) -> FitConfig:
    kw = {}
    if args.tol is not None:
        kw["outer_tol"] = args.tol
    kw["max_outer_iters"] = args.max_iters if args.max_iters else 30000
    return FitConfig(**kw)


def _apply_config_file(args: argparse.Namespace, cli_tokens: list[str]) -> None:
    if not getattr(args, "config", None):
        return
    file_vals = read_config_file(args.config)
    for key, value in file_vals.items():
        dest = key.replace("-", "_")
        if not hasattr(args, dest):
            raise UsageError(f"unknown config key {key!r}")
        # command-line flags win over file values
        if f"--{key}" in cli_tokens or f"--{key.replace('_', '-')}" in cli_tokens:
            continue
        current = getattr(args, dest)
        if isinstance(current, bool):
            setattr(args, dest, value.lower() in ("1", "true", "yes"))
        elif isinstance(current, int) and current is not None:
            setattr(args, dest, int(value))
        elif isinstance(current, float) and current is not None:
            setattr(args, dest, float(value))
        else:
            setattr(args, dest, value)


def cmd_fit(args) -> int:
    data = read_csv_columns(args.input, args.cols.split(",") if args.cols else None)
    if data.shape[0] < 10:
        raise UsageError("need at least 10 rows to fit")
    if data.shape[1] < 2:
        raise UsageError("need at least 2 numeric columns")
    size = _parse_int_list(args.size)
    if len(size) != data.shape[1]:
        raise UsageError(f"--size has {len(size)} entries for {data.shape[1]} columns")
    degrees = _parse_int_list(args.degree)
    if len(degrees) == 1:
        degrees = degrees * len(size)
    bases = [build_uniform_basis(d, m) for d, m in zip(degrees, size)]
    if args.pseudo == "rank":
        sample = pseudo_observations(data)
    else:
        if data.min() < 0.0 or data.max() > 1.0:
            raise UsageError("identity mode requires data already inside [0, 1]")
        sample = data
    cfg = _fit_config(args)
    report = fit_nd(sample, bases, ScadParams(args.alpha, args.beta), cfg)

    outdir = Path(args.out)
    _echo_config(outdir, _resolved(args, ["input", "cols", "size", "degree", "alpha",
                                          "beta", "pseudo", "tol", "max_iters", "seed", "out"]))
    with open(outdir / "fit_report.json", "w") as fh:
        json.dump(report.to_dict(extra={"seed": args.seed}), fh, indent=2)
    save_model(CopulaModel(bases, report.params), outdir / "model.json")
    if not report.converged:
        print("fit did not converge", file=sys.stderr)
        return EXIT_NO_CONVERGENCE
    return EXIT_OK


def cmd_select(args) -> int:
    data = read_csv_columns(args.input, args.cols.split(",") if args.cols else None)
    degrees = tuple(_parse_int_list(args.degree))
    if len(degrees) == 1:
        degrees = degrees * data.shape[1]
    grid_spec = _parse_grid(args.grid) if args.grid else {}
    sizes = grid_spec.get("sizes") or tuple(_parse_sizes(args.sizes or args.size))
    alphas = grid_spec.get("alphas", (args.alpha,))
    betas = grid_spec.get("betas", (args.beta,))
    cfg = _fit_config(args)
    outdir = Path(args.out)
    _echo_config(outdir, _resolved(args, ["input", "cols", "size", "sizes", "degree",
                                          "alpha", "beta", "grid", "folds", "method",
                                          "pseudo", "seed", "threads", "out"]))
    summary = {}
    if args.method in ("cv", "both") and (len(alphas) > 1 or len(betas) > 1):
        grid = SelectionGrid(alphas=alphas, betas=betas, sizes=sizes,
                             folds=args.folds, seed=args.seed)
        rep = cross_validate(data, grid, degrees=degrees, cfg=cfg,
                             pseudo_mode=args.pseudo, threads=args.threads)
        rep.write_cv_csv(outdir / "cv_tuning.csv")
        summary["tuning"] = rep.summary()
    rep = select_size(data, sizes, alpha=float(alphas[0]), beta=float(betas[0]),
                      cfg=cfg, method=args.method, degrees=degrees,
                      folds=args.folds, seed=args.seed,
                      pseudo_mode=args.pseudo, threads=args.threads)
    if rep.rows:
        rep.write_cv_csv(outdir / "cv_sizes.csv")
    if rep.aic_table:
        rep.write_aic_csv(outdir / "aic_sizes.csv")
    summary["sizes"] = rep.summary()
    with open(outdir / "selection_summary.json", "w") as fh:
        json.dump(summary, fh, indent=2)
    return EXIT_OK


def cmd_sample(args) -> int:
    model = load_model(args.model)
    cfg = SamplerConfig(seed=args.seed, grid_resolution=args.resolution or
                        (201 if model.ndim == 2 else 61))
    draws, stats = rejection_sample(model, args.n, cfg)
    outdir = Path(args.out)
    _echo_config(outdir, _resolved(args, ["model", "n", "seed", "resolution", "out"]))
    header = [f"u{j + 1}" for j in range(model.ndim)]
    write_csv(outdir / "draws.csv", header, draws)
    with open(outdir / "sampler_stats.json", "w") as fh:
        json.dump({
            "proposals": stats.proposals,
            "accepted": stats.accepted,
            "acceptance_rate": stats.acceptance_rate,
            "envelope": stats.envelope,
            "grid_max": stats.grid_max,
            "restarts": stats.restarts,
        }, fh, indent=2)
    return EXIT_OK


def cmd_density_grid(args) -> int:
    model = load_model(args.model)
    if model.ndim != 2:
        raise UsageError("density-grid supports two-axis models")
    res = args.resolution or 101
    grid = np.linspace(0.0, 1.0, res)
    uu, vv = np.meshgrid(grid, grid, indexing="ij")
    pts = np.column_stack([uu.ravel(), vv.ravel()])
    vals = np.asarray(density(model, pts))
    outdir = Path(args.out)
    _echo_config(outdir, _resolved(args, ["model", "resolution", "margins_data",
                                          "cols", "out"]))
    write_csv(outdir / "copula_density_grid.csv", ["u", "v", "density"],
              np.column_stack([pts, vals]))
    if args.margins_data:
        raw = read_csv_columns(args.margins_data,
                               args.cols.split(",") if args.cols else None)
        if raw.shape[1] != 2:
            raise UsageError("margins data must provide two columns")
        margins = [fit_margin(raw[:, j]) for j in range(2)]
        xg = np.linspace(raw[:, 0].min(), raw[:, 0].max(), res)
        yg = np.linspace(raw[:, 1].min(), raw[:, 1].max(), res)
        xx, yy = np.meshgrid(xg, yg, indexing="ij")
        xy = np.column_stack([xx.ravel(), yy.ravel()])
        h = joint_density(model, margins, xy)
        write_csv(outdir / "joint_density_grid.csv", ["x", "y", "h"],
                  np.column_stack([xy, h]))
    return EXIT_OK


def _reproduce_study_i(args, outdir: Path) -> dict:
    res = studies.penalty_mse_study(n=args.n or 1000, replicates=args.replicates or 20,
                                    seed=args.seed, threads=args.threads)
    for name, table in res.tables.items():
        rows = [(a, b, table[ia, ib]) for ia, a in enumerate(res.alphas)
                for ib, b in enumerate(res.betas)]
        write_csv(outdir / f"mse_{name}.csv", ["alpha", "beta", "mse"], rows)
    summary = res.summary()
    ia = {name: res.alphas.index(s["best_alpha"]) for name, s in summary.items()}
    checks = {
        "sparse_interior_alpha_best": 0 < ia["sparse"] < len(res.alphas) - 1,
        "block_interior_alpha_best": 0 < ia["block"] < len(res.alphas) - 1,
        "dense_boundary_alpha_best": ia["dense"] in (0, len(res.alphas) - 1),
    }
    return {"tables": summary, "checks": checks}


def _reproduce_study_ii(args, outdir: Path) -> dict:
    res = studies.tuning_cv_study(n=args.n or 1000, replicates=args.replicates or 20,
                                  seed=args.seed, threads=args.threads)
    for name, table in res.tables.items():
        rows = [(a, b, table[ia, ib]) for ia, a in enumerate(res.alphas)
                for ib, b in enumerate(res.betas)]
        write_csv(outdir / f"cv_{name}.csv", ["alpha", "beta", "mean_cv"], rows)
    summary = res.summary()
    ia = {name: res.alphas.index(s["best_alpha"]) for name, s in summary.items()}
    checks = {
        "sparse_interior_alpha_peak": 0 < ia["sparse"] < len(res.alphas) - 1,
        "block_interior_alpha_peak": 0 < ia["block"] < len(res.alphas) - 1,
        "dense_boundary_alpha_peak": ia["dense"] in (0, len(res.alphas) - 1),
    }
    return {"tables": summary, "checks": checks}


def _reproduce_study_iii(args, outdir: Path) -> dict:
    res = studies.size_selection_study(n=args.n or 1000,
                                       replicates=args.replicates or 20,
                                       seed=args.seed, threads=args.threads)
    for name in res.cv_tables:
        rows = [(m, n, res.cv_tables[name][(m, n)], res.aic_tables[name][(m, n)])
                for (m, n) in res.sizes]
        write_csv(outdir / f"sizes_{name}.csv", ["m", "n", "mean_cv", "mean_aic"], rows)
    summary = res.summary()
    checks = {
        "sparse_cv_picks_4x5": summary["sparse"]["best_cv"] == (4, 5),
        "sparse_aic_picks_4x5": summary["sparse"]["best_aic"] == (4, 5),
        "block_cv_picks_5x5": summary["block"]["best_cv"] == (5, 5),
        "block_aic_picks_5x5": summary["block"]["best_aic"] == (5, 5),
    }
    summary = {k: {kk: (str(vv) if isinstance(vv, tuple) else vv) for kk, vv in v.items()}
               for k, v in summary.items()}
    return {"tables": summary, "checks": checks}


def _reproduce_study_iv(args, outdir: Path) -> dict:
    res = studies.trivariate_study(n=args.n or 2000, seed=args.seed,
                                   threads=args.threads)
    write_csv(outdir / "trivariate_mse.csv", ["model", "mse", "max_residual"],
              [(k, res.mse[k], res.max_constraint_residual[k]) for k in res.mse])
    checks = {
        "all_mse_small": all(v < 5e-4 for v in res.mse.values()),
        "all_constraints_hold": all(v < 1e-6 for v in res.max_constraint_residual.values()),
    }
    return {"tables": res.summary(), "checks": checks}


def _reproduce_study_c(args, outdir: Path) -> dict:
    res = studies.small_sample_study(replicates=args.replicates or 10,
                                     seed=args.seed, threads=args.threads)
    for name, per_n in res.tables.items():
        for n, table in per_n.items():
            rows = [(a, b, table[ia, ib]) for ia, a in enumerate(res.alphas)
                    for ib, b in enumerate(res.betas)]
            write_csv(outdir / f"mse_{name}_n{n}.csv", ["alpha", "beta", "mse"], rows)
    summary = res.summary()
    checks = {f"{name}_mse_decreases_with_n": summary[name]["mean_mse_decreases"]
              for name in res.tables}
    return {"tables": summary, "checks": checks}


def cmd_reproduce(args) -> int:
    outdir = Path(args.out)
    _echo_config(outdir, _resolved(args, ["study", "n", "replicates", "seed",
                                          "threads", "out"]))
    runner = {
        "I": _reproduce_study_i,
        "II": _reproduce_study_ii,
        "III": _reproduce_study_iii,
        "IV": _reproduce_study_iv,
        "C": _reproduce_study_c,
    }[args.study]
    result = runner(args, outdir)
    with open(outdir / "summary.json", "w") as fh:
        json.dump(result, fh, indent=2, default=str)
    return EXIT_OK


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="splinecop",
                                     description="B-spline copula estimation toolkit")
    sub = parser.add_subparsers(dest="command", required=True)

    def common(p):
        p.add_argument("--config", help="flat key=value config file; flags win")
        p.add_argument("--seed", type=int, default=0)
        p.add_argument("--threads", type=int, default=1)
        p.add_argument("--out", default="out", help="output directory")

    p = sub.add_parser("fit", help="fit a copula to CSV data")
    p.add_argument("input")
    p.add_argument("--cols", help="comma-separated column names")
    p.add_argument("--size", required=True, help="basis counts, e.g. 4,5")
    p.add_argument("--degree", default="3", help="spline degree(s), e.g. 3 or 3,3")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=3.0)
    p.add_argument("--pseudo", choices=("rank", "identity"), default="rank")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    common(p)
    p.set_defaults(func=cmd_fit)

    p = sub.add_parser("select", help="sweep sizes and tuning parameters")
    p.add_argument("input")
    p.add_argument("--cols")
    p.add_argument("--size", default="4,5")
    p.add_argument("--sizes", help="candidate sizes, e.g. '4x4;4x5;5x5'")
    p.add_argument("--degree", default="3")
    p.add_argument("--alpha", type=float, default=0.0)
    p.add_argument("--beta", type=float, default=3.0)
    p.add_argument("--grid", help="e.g. 'alphas=0,0.05,0.1;betas=3;sizes=4x5+5x5'")
    p.add_argument("--folds", type=int, default=5)
    p.add_argument("--method", choices=("cv", "aic", "both"), default="both")
    p.add_argument("--pseudo", choices=("rank", "identity"), default="rank")
    p.add_argument("--tol", type=float)
    p.add_argument("--max-iters", dest="max_iters", type=int)
    common(p)
    p.set_defaults(func=cmd_select)

    p = sub.add_parser("sample", help="draw from a saved copula model")
    p.add_argument("model")
    p.add_argument("--n", type=int, required=True)
    p.add_argument("--resolution", type=int, help="envelope grid resolution")
    common(p)
    p.set_defaults(func=cmd_sample)

    p = sub.add_parser("density-grid", help="export density grids for plotting")
    p.add_argument("model")
    p.add_argument("--resolution", type=int)
    p.add_argument("--margins-data", dest="margins_data",
                   help="CSV of raw data for kernel margins")
    p.add_argument("--cols")
    common(p)
    p.set_defaults(func=cmd_density_grid)

    p = sub.add_parser("reproduce", help="run a simulation study end to end")
    p.add_argument("study", choices=("I", "II", "III", "IV", "C"))
    p.add_argument("--n", type=int)
    p.add_argument("--replicates", type=int)
    common(p)
    p.set_defaults(func=cmd_reproduce)

    return parser


def main(argv: list[str] | None = None) -> int:
    parser = build_parser()
    tokens = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(tokens)
    try:
        _apply_config_file(args, tokens)
        return args.func(args)
    except UsageError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except SamplerBudgetError as exc:
        print(f"error: {exc}", file=sys.stderr)
        return EXIT_SAMPLER_BUDGET


if __name__ == "__main__":
    sys.exit(main())
