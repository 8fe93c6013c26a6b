"""Runs one experiment kind over several methods and seeds and prints a summary.

Examples:
    python scripts/sweep.py blr --seeds 0 1 2
    python scripts/sweep.py density --methods gpvi amortized-svgd --seeds 0-9 --set data.d=5
    python scripts/sweep.py solver-compare --set train.steps=20000

Extra config keys are passed with ``--set section.key=value`` (repeatable).
The per-run summary rows are written to ``--out`` as CSV.
"""

import argparse
import time

import numpy as np

from gpvi.cli import write_csv
from gpvi.config import KIND_METHODS, KINDS, build_config
from gpvi.experiments import run_experiment

SUMMARY_KEYS = ("mean_error", "cov_error", "cov_error_rel", "helper_cov_error",
                "bicgstab_cov_error", "std_8_8", "std_2_2", "std_grid_p25",
                "test_accuracy", "test_ece", "train_rmse", "std_gap", "std_data_region")


def parse_seeds(tokens):
    seeds = []
    for tok in tokens:
        lo, _, hi = tok.partition("-")
        seeds.extend(range(int(lo), int(hi) + 1) if hi else [int(lo)])
    return seeds


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("kind", choices=KINDS)
    ap.add_argument("--methods", nargs="+")
    ap.add_argument("--seeds", nargs="+", default=["0"])
    ap.add_argument("--set", dest="overrides", action="append", default=[], metavar="KEY=VALUE")
    ap.add_argument("--out", default=None)
    args = ap.parse_args()
    methods = args.methods or list(KIND_METHODS[args.kind])
    extra = dict(kv.split("=", 1) for kv in args.overrides)
    rows = []
    for method in methods:
        for seed in parse_seeds(args.seeds):
            raw = {"experiment.kind": args.kind, "experiment.method": method,
                   "experiment.seed": str(seed), **extra}
            t0 = time.time()
            final = run_experiment(build_config(raw)).final
            final["seconds"] = time.time() - t0
            rows.append(final)
            shown = "  ".join(f"{k} {final[k]:.4g}" for k in SUMMARY_KEYS if k in final)
            print(f"{method:15s} seed {seed}: {shown}  ({final['seconds']:.0f}s)", flush=True)
    print("medians:")
    for method in methods:
        sel = [r for r in rows if r.get("method", method) == method]
        shown = "  ".join(f"{k} {np.median([r[k] for r in sel]):.4g}"
                          for k in SUMMARY_KEYS if k in sel[0])
        print(f"  {method:15s} {shown}")
    write_csv(args.out or f"sweep_{args.kind}.csv", rows)


if __name__ == "__main__":
    main()
