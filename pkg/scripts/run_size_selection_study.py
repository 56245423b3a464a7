#!/usr/bin/env python3
"""Size-selection study: mean CV and pseudo-AIC tables per fixture."""

import argparse
import json
from pathlib import Path

from splinecop.cli import write_csv
from splinecop.studies import size_selection_study


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--replicates", type=int, default=20)
    ap.add_argument("--min-size", type=int, default=4)
    ap.add_argument("--max-size", type=int, default=6)
    ap.add_argument("--seed", type=int, default=1300)
    ap.add_argument("--threads", type=int, default=2)
    ap.add_argument("--out", default="size_selection_out")
    args = ap.parse_args()

    sizes = tuple((m, n)
                  for m in range(args.min_size, args.max_size + 1)
                  for n in range(args.min_size, args.max_size + 1))
    res = size_selection_study(sizes=sizes, n=args.n, replicates=args.replicates,
                               seed=args.seed, threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name in res.cv_tables:
        rows = [(m, n, res.cv_tables[name][(m, n)], res.aic_tables[name][(m, n)])
                for (m, n) in res.sizes]
        write_csv(out / f"sizes_{name}.csv", ["m", "n", "mean_cv", "mean_aic"], rows)
    with open(out / "summary.json", "w") as fh:
        json.dump(res.summary(), fh, indent=2, default=str)
    print(json.dumps({k: {"cv": str(v["best_cv"]), "aic": str(v["best_aic"])}
                      for k, v in res.summary().items()}, indent=2))


if __name__ == "__main__":
    main()
