"""Aggregated model versus the best single expert and the equal-weight merge, per seed.

    python3 scripts/run_merge_comparison.py --seeds 1 2 3 4 5 --generations 300
"""
import argparse

import numpy as np

from cycleqd.engine import RunConfig, train
from cycleqd.tasks import evaluate_all, make_analytic_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=[1, 2, 3, 4, 5])
    ap.add_argument("--generations", type=int, default=300)
    args = ap.parse_args()

    print(f"{'seed':>4}  {'aggregate':>9}  {'best expert':>11}  {'avg merge':>9}  wins")
    wins = 0
    for seed in args.seeds:
        suite = make_analytic_suite(seed=seed)
        res = train(RunConfig(seed=seed, generations=args.generations), suite.experts, suite.base, suite.tasks)
        agg = np.mean(evaluate_all(res.aggregated, suite.tasks))
        expert = max(np.mean(g.fitness) for g in res.expert_genomes)
        avg = np.mean(evaluate_all(suite.average_merge(), suite.tasks))
        ok = agg >= expert and agg >= avg
        wins += ok
        print(f"{seed:>4}  {agg:9.4f}  {expert:11.4f}  {avg:9.4f}  {'yes' if ok else 'no'}")
    print(f"aggregate beats both baselines in {wins}/{len(args.seeds)} seeds")


if __name__ == "__main__":
    main()
