"""Reformulation vs grid oracle on random toy instances.

Example:
    python scripts/oracle_study.py --case game2 --n 10 --hours 2 --ceiling 1 --out g2.csv
"""
import argparse
import csv
import time

import numpy as np

from gridpact.core import (BudgetPolicy, NetworkSeries, PriceSet, validate_scenario)
from gridpact.data_io import load_scenario, packaged
from gridpact.games import solve_case
from gridpact.oracle import GridSpec, compare, enumerate_bilevel


def random_toy(rng, hours, ceiling, step):
    base = load_scenario(packaged("toy.json"))
    S = rng.integers(1, int(ceiling / step) + 1, size=hours) * step
    theta = float(rng.choice([0.0, 0.2]))
    prices = PriceSet(tuple([0.0] * hours), float(rng.choice([5.0, 10.0, 15.0])), 40.0,
                      float(rng.choice([0.0, 10.0, 20.0, 40.0])))
    sc = base.with_overrides(hours=hours, prices=prices, big_m=float(ceiling),
                             network=NetworkSeries(tuple(S), tuple([1e4] * hours)),
                             budgets=BudgetPolicy(theta=theta, cm_budget=10.0 if theta else 0.0))
    return validate_scenario(sc)


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--case", choices=("game1", "game2"), default="game1")
    p.add_argument("--n", type=int, default=20)
    p.add_argument("--hours", default="2,3", help="comma-separated horizon choices")
    p.add_argument("--ceiling", type=float, default=2.0)
    p.add_argument("--step", type=float, default=0.25)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--out", default="oracle_study.csv")
    args = p.parse_args(argv)

    rng = np.random.default_rng(args.seed)
    hours = [int(h) for h in args.hours.split(",")]
    rows = []
    t_all = time.perf_counter()
    for k in range(args.n):
        sc = random_toy(rng, int(rng.choice(hours)), args.ceiling, args.step)
        t0 = time.perf_counter()
        ref = solve_case(sc, args.case)
        t1 = time.perf_counter()
        res = enumerate_bilevel(sc, args.case, GridSpec(args.step, args.ceiling),
                                keep_report=False)
        t2 = time.perf_counter()
        diff, tol, ok = compare(ref.objective, res.objective, res.slack)
        rows.append({"instance": k, "hours": sc.hours,
                     "residual": " ".join(f"{x:g}" for x in sc.network.residual_capacity),
                     "reformulation": ref.objective, "oracle": res.objective, "abs_diff": diff,
                     "tolerance": tol, "agree": ok, "points": res.n_points,
                     "reform_s": round(t1 - t0, 3), "oracle_s": round(t2 - t1, 3)})
        print(f"{k:3d} T={sc.hours} reform {ref.objective:12.4f} oracle {res.objective:12.4f} "
              f"diff {diff:.2e} {'ok' if ok else 'MISMATCH'}")
    with open(args.out, "w", newline="") as fh:
        w = csv.DictWriter(fh, fieldnames=list(rows[0]))
        w.writeheader()
        w.writerows(rows)
    n_ok = sum(r["agree"] for r in rows)
    print(f"{n_ok}/{len(rows)} agree; {time.perf_counter() - t_all:.0f} s; wrote {args.out}")


if __name__ == "__main__":
    main()
