"""Five-variant ablation table on the analytic suite, with per-seed pairwise orderings.

    python3 scripts/run_ablation.py --seeds 1 2 3 4 5 --generations 300
"""
import argparse

import numpy as np

from cycleqd.ablation import VARIANTS, run_variant
from cycleqd.engine import RunConfig
from cycleqd.tasks import make_analytic_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    ap.add_argument("--generations", type=int, default=300)
    args = ap.parse_args()

    scores = {}
    for seed in args.seeds:
        suite = make_analytic_suite(seed=seed)
        cfg = RunConfig(seed=seed, generations=args.generations)
        for v in VARIANTS:
            _, fit = run_variant(cfg, v, suite)
            scores[v.trial, seed] = float(np.mean(fit))

    header = "  ".join(f"s{s:<6}" for s in args.seeds)
    print(f"{'trial':<5} {'variant':<48} {'mean':>7}  {header}")
    for v in VARIANTS:
        row = [scores[v.trial, s] for s in args.seeds]
        print(f"{v.trial:<5} {v.label:<48} {np.mean(row):7.4f}  " + "  ".join(f"{x:.4f}" for x in row))

    def count(a, b):
        return sum(scores[a, s] >= scores[b, s] for s in args.seeds)

    n = len(args.seeds)
    print(f"elite >= random sampling: {count(4, 3)}/{n} seeds")
    print(f"svd >= no mutation:       {count(3, 1)}/{n} seeds")
    print(f"cyclic >= fixed quality:  {count(1, 0)}/{n} seeds")


if __name__ == "__main__":
    main()
