"""How quickly do the per-archive elites stop improving, for elite versus random sampling.

Prints, per seed and sampling mode, the last generation at which any elite
changed and the final aggregated mean fitness.

    python3 scripts/elite_sampling_probe.py --seeds 1 2 3 4 5 6 7 8 9 10
"""
import argparse

import numpy as np

from cycleqd.archive import SamplingParams, elite_of
from cycleqd.engine import RunConfig, train
from cycleqd.tasks import evaluate_all, make_analytic_suite


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--seeds", type=int, nargs="+", default=list(range(1, 11)))
    ap.add_argument("--generations", type=int, default=300)
    args = ap.parse_args()

    print(f"{'seed':>4}  {'mode':<6}  {'last elite change':>17}  {'mean fitness':>12}")
    for seed in args.seeds:
        suite = make_analytic_suite(seed=seed)
        for mode in ("random", "elite"):
            cfg = RunConfig(seed=seed, generations=args.generations, snapshot_every=1, sampling=SamplingParams(mode=mode))
            res = train(cfg, suite.experts, suite.base, suite.tasks, keep_snapshots=True)
            last, prev = 0, None
            for t, arcs in res.snapshots:
                ids = [elite_of(a).id for a in arcs]
                if ids != prev:
                    last = t
                prev = ids
            fit = np.mean(evaluate_all(res.aggregated, suite.tasks))
            print(f"{seed:>4}  {mode:<6}  {last:>17}  {fit:12.4f}")


if __name__ == "__main__":
    main()
