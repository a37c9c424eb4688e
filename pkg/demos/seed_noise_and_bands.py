"""Seed noise, DKW bands, and how many seeds a ranking needs.

Uses the stochastic linreg objective (cheap enough to run hundreds of
seeds) to walk through the two-stage protocol: a small search, a full
evaluation with DKW median bands, and a subset-size noise study.
"""

import numpy as np

from lrslab.harness import (
    EmpiricalObjective,
    SearchConfig,
    noise_characterization,
    pick_best_lrs,
    sample_search_shapes,
    search_step,
    evaluation_step,
)
from lrslab.linreg import LinRegProblem
from lrslab.schedules import base_lr_grid

PROB = LinRegProblem(dim=16, batch=2, horizon=60)
MASTER = 11


def main() -> None:
    obj = EmpiricalObjective(PROB)

    cfg = SearchConfig(family="cos-std", n_shapes=60, k_search=3, top_k=8,
                       n_init=5, n_order=5, grid_lo=0.01, grid_hi=1.0, grid_n=8)
    print("search: 60 cos-std shapes, 8 LRs x 3 seeds each...")
    report = search_step(obj, cfg, MASTER)

    print("evaluation: top 8 on the full 5x5 seed grid...\n")
    evald, _ = evaluation_step(report, obj, collect_records=False)
    print(f"{'rank':>4}  {'search med':>11}  {'eval med':>11}  "
          f"{'DKW 95% band':>23}  {'lr':>7}")
    for rank, e in enumerate(evald.entries[: cfg.top_k], 1):
        band = e.band
        print(f"{rank:>4}  {e.search_median:>11.5f}  {e.eval_median:>11.5f}  "
              f"[{band.lower:>9.5f}, {band.upper:>9.5f}]  {e.best_lr:>7.4f}")
    n_moved_up = sum(
        e.eval_median > e.search_median for e in evald.entries[: cfg.top_k]
    )
    print(f"\n{n_moved_up}/{cfg.top_k} medians moved up on re-evaluation. "
          "Search scores rest on 3 shared seeds, so the whole table shifts "
          "with their luck; the full grid replaces them with a tighter "
          "estimate either way.")

    print("\nnoise study: how often does a small-seed ranking miss a "
          "true top-25% shape?")
    shapes = sample_search_shapes("cos-std", 80, MASTER)
    grid = base_lr_grid(0.01, 1.0, 8)
    lrs, _ = pick_best_lrs(obj, shapes, grid, MASTER, k_seeds=3)
    res = noise_characterization(obj, shapes, lrs, MASTER,
                                 n_seeds=40, subset_sizes=(1, 5, 40), top_k=20)
    for size in (1, 5, 40):
        rate = res.false_negative_rates[size]
        print(f"  median of {size:>2} seed(s): false-negative rate "
              f"{rate:.2f}")
    print("\nThe full subset converges to the floor between two independent "
          "seed sets. Watch the small sizes, though: every shape is scored "
          "on the same shared seeds, so a single-seed ranking cancels the "
          "common per-seed luck and can look deceptively good, while "
          "mid-size medians land on different seeds for different shapes "
          "and mix that luck back in. Rankings are only trustworthy once "
          "the subset is large enough to beat both effects.")


if __name__ == "__main__":
    main()
