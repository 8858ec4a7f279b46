"""Monte-Carlo coverage table for models (a)-(d).

Runs every (model, pipeline) row and prints coverage with its binomial
standard error. The defaults are the desk-scale setting (200 runs, B = 500);
``--runs 1000 --B 1000`` gives the full-scale table at much higher cost.

    python3 scripts/coverage_table.py --models a c --runs 200
"""
from __future__ import annotations

import argparse
import csv
import os
import sys
import time

from ftsband.simgen import ModelSpec, PipelineConfig, coverage_experiment

ROWS = {
    "surface-constant": dict(kind="surface", mode="constant"),
    "surface-varying": dict(kind="surface", mode="varying"),
    "band-t-0.5": dict(kind="band_t", mode="constant", fixed=0.5),
    "band-u-0.5": dict(kind="band_u", mode="constant", fixed=0.5),
}


def main(argv=None) -> int:
    ap = argparse.ArgumentParser(description=__doc__, formatter_class=argparse.RawDescriptionHelpFormatter)
    ap.add_argument("--models", nargs="+", default=["a", "b", "c", "d"], choices=["a", "b", "c", "d"])
    ap.add_argument("--rows", nargs="+", default=list(ROWS), choices=list(ROWS))
    ap.add_argument("--n", type=int, nargs="+", default=[500])
    ap.add_argument("--runs", type=int, default=200)
    ap.add_argument("--B", type=int, default=500)
    ap.add_argument("--alpha", type=float, default=0.05)
    ap.add_argument("--seed", type=int, default=2024)
    ap.add_argument("--workers", type=int, default=os.cpu_count() or 1)
    ap.add_argument("--csv", help="also write the table here")
    args = ap.parse_args(argv)

    table = []
    print(f"{'model':>5} {'n':>5} {'pipeline':>17} {'coverage':>9} {'se':>6} {'secs':>6}")
    for model in args.models:
        for n in args.n:
            for row in args.rows:
                cfg = PipelineConfig(alpha=args.alpha, B=args.B, **ROWS[row])
                t0 = time.perf_counter()
                rep = coverage_experiment(ModelSpec(model, n), cfg, args.runs, args.seed, workers=args.workers)
                secs = time.perf_counter() - t0
                table.append((model, n, row, rep.coverage, rep.se, round(secs, 1)))
                print(f"{model:>5} {n:>5} {row:>17} {rep.coverage:>9.3f} {rep.se:>6.3f} {secs:>6.0f}", flush=True)
    if args.csv:
        with open(args.csv, "w", newline="") as fh:
            w = csv.writer(fh, lineterminator="\n")
            w.writerow(["model", "n", "pipeline", "coverage", "se", "seconds"])
            w.writerows(table)
    return 0


if __name__ == "__main__":
    sys.exit(main())
