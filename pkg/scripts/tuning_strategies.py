"""Grid, random, TPE and annealing searches on a seeded subsample, sharing one fit cache."""
import time

import numpy as np
from _common import base_parser, task

from propml.evaluation import FitCache, repeated_kfold_cv, tune, write_tuning_report
from propml.gbdt import GbdtConfig


def main():
    p = base_parser(__doc__)
    p.add_argument("--rows", type=int, default=500)
    p.add_argument("--out", default="tuning.csv")
    args = p.parse_args()
    _, m = task(args)
    sub = m.take(np.sort(np.random.default_rng(args.seed).choice(len(m), min(args.rows, len(m)), replace=False)))
    cache = FitCache()
    default = repeated_kfold_cv(sub, GbdtConfig(), seed=args.seed, cache=cache)
    print(f"default config: {default.mean_rmse:.3f} dB")
    results = []
    for strategy, budget in (("grid", 27), ("random", 8), ("tpe", 6), ("anneal", 8)):
        t0 = time.perf_counter()
        r = tune(sub, strategy=strategy, budget=budget, seed=args.seed, cache=cache)
        c = r.best_config
        print(f"{strategy:7s} best {r.best_rmse:.3f} dB after {r.evaluations} evaluations "
              f"(n={c.n_estimators}, depth={c.max_depth}, lr={c.learning_rate:.4g}) {time.perf_counter() - t0:.1f} s")
        print("        best so far: " + " ".join(f"{v:.3f}" for v in r.best_so_far()))
        results.append(r)
    write_tuning_report(results, args.out)


if __name__ == "__main__":
    main()
