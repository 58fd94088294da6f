"""CRC+ price sweep on the synthetic reference scenario, with shape checks.

Example:
    python scripts/reference_sweep.py --hours 168 --cases game1,ely-hpr --out sweep168.csv
"""
import argparse
import logging
import time

from gridpact.data_io import reference_scenario
from gridpact.games import Case, GameOptions
from gridpact.lp import SolverOptions
from gridpact.sweep import SweepPlan, axis_values, check_monotone, find_switch, run_sweep


def main(argv=None):
    p = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    p.add_argument("--hours", type=int, default=168, help="horizon; costs scale to it")
    p.add_argument("--cases", default=",".join(c.value for c in Case))
    p.add_argument("--from", dest="start", type=float, default=0.0)
    p.add_argument("--to", dest="stop", type=float, default=40.0)
    p.add_argument("--step", type=float, default=5.0)
    p.add_argument("--theta", type=float, default=0.0)
    p.add_argument("--gap", type=float, default=1e-3)
    p.add_argument("--time-limit", type=float, default=600.0, help="seconds per point")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--jobs", type=int, default=1)
    p.add_argument("--out", default="reference_sweep.csv")
    p.add_argument("-v", "--verbose", action="store_true")
    args = p.parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING)

    base = reference_scenario(hours=args.hours, seed=args.seed, theta=args.theta)
    opts = GameOptions(solver=SolverOptions(rel_gap=args.gap, time_limit_s=args.time_limit,
                                            seed=args.seed))
    plan = SweepPlan("crcplus", axis_values(args.start, args.stop, args.step),
                     tuple(args.cases.split(",")), base, opts, args.seed)
    t0 = time.perf_counter()
    res = run_sweep(plan, jobs=args.jobs)
    res.write(args.out)
    print(f"{len(res.rows)} points in {time.perf_counter() - t0:.0f} s, "
          f"{len(res.failures)} not optimal; wrote {args.out}")
    for r in res.rows:
        print(f"{r['case']:8s} {r['sweep_value']:6g} {r['status']:12s} {r['runtime_s']:7.1f} s  "
              f"p_grid={r['p_grid']:8.3f}  FA={r['p_el_fa']:7.3f}  NFA85={r['p_el_nfa85']:7.3f}  "
              f"NFA={r['p_el_nfa']:7.3f}")

    cases = {Case.parse(c) for c in plan.cases}
    if Case.GAME2 in cases:
        print("game2 p_grid non-increasing:", check_monotone(res, Case.GAME2, "p_grid", tol=1e-6))
    if Case.ELY_HPR in cases:
        sw = find_switch(res, Case.ELY_HPR, "p_el_fa", lambda x: x > 1e-6)
        print("ely-hpr NFA85 -> FA switch:", "none" if sw is None else f"{sw:g} EUR/MW")
    if Case.GAME1 in cases:
        first = res.rows_for(Case.GAME1)[0]
        print(f"game1 at {first['sweep_value']:g}: p_grid={first['p_grid']:.4f} "
              f"(peak {max(base.network.residual_capacity):g}), FA={first['p_el_fa']:.3g}")


if __name__ == "__main__":
    main()
