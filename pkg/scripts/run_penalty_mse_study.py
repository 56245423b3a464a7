#!/usr/bin/env python3
"""Penalty MSE sweep over (alpha, beta) for the three study fixtures.

Writes one CSV per fixture plus a summary JSON under --out.
"""

import argparse
import json
from pathlib import Path

from splinecop.cli import write_csv
from splinecop.studies import penalty_mse_study


def main() -> None:
    ap = argparse.ArgumentParser(description=__doc__)
    ap.add_argument("--n", type=int, default=1000)
    ap.add_argument("--replicates", type=int, default=20)
    ap.add_argument("--alphas", default="0,0.05,0.1,0.15,0.2,0.25")
    ap.add_argument("--betas", default="2.5,3,3.7")
    ap.add_argument("--seed", type=int, default=500)
    ap.add_argument("--threads", type=int, default=2)
    ap.add_argument("--out", default="penalty_mse_out")
    args = ap.parse_args()

    alphas = tuple(float(a) for a in args.alphas.split(","))
    betas = tuple(float(b) for b in args.betas.split(","))
    res = penalty_mse_study(alphas=alphas, betas=betas, n=args.n,
                            replicates=args.replicates, seed=args.seed,
                            threads=args.threads)
    out = Path(args.out)
    out.mkdir(parents=True, exist_ok=True)
    for name, table in res.tables.items():
        rows = [(a, b, table[ia, ib]) for ia, a in enumerate(res.alphas)
                for ib, b in enumerate(res.betas)]
        write_csv(out / f"mse_{name}.csv", ["alpha", "beta", "mse"], rows)
    with open(out / "summary.json", "w") as fh:
        json.dump(res.summary(), fh, indent=2)
    print(json.dumps({k: v["best_alpha"] for k, v in res.summary().items()}, indent=2))


if __name__ == "__main__":
    main()
