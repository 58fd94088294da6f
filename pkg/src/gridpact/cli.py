"""Command-line interface.

Exit codes: 0 success, 1 usage or input error, 2 infeasible model, 3 solver
limit reached without an optimal/gap-optimal answer.
"""
from __future__ import annotations

import argparse
import json
import logging
import math
import sys
from dataclasses import replace

from . import __version__
from .core import BudgetMode, ScenarioError, validate_scenario
from .data_io import (SchemaError, SyntheticSpec, generate_synthetic, load_scenario, packaged,
                      save_scenario, write_results)
from .games import Case, GameOptions, solve_case
from .lp import SolverOptions, Status
from .oracle import GridGuardError, GridSpec, compare, enumerate_bilevel
from .sweep import Axis, SweepError, SweepPlan, axis_values, default_jobs, run_sweep

EXIT_OK, EXIT_USAGE, EXIT_INFEASIBLE, EXIT_LIMIT = 0, 1, 2, 3

EPILOG = """exit codes:
  0  solved (optimal or within the gap)
  1  bad flags, unreadable or invalid input, oracle guard exceeded
  2  model infeasible (violated rows are listed)
  3  solver limit reached (an incumbent, if found, is still reported)

The GRIDPACT_SOLVER environment variable selects the backend (scip, highs)
unless --backend is given. Options in --config (JSON, keys = long option
names) are overridden by flags on the command line."""


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        self.print_usage(sys.stderr)
        self.exit(EXIT_USAGE, f"{self.prog}: error: {message}\n")


def _gap(text: str) -> float:
    x = float(text)
    if not 0 < x < 0.5:
        raise argparse.ArgumentTypeError(f"gap must lie in (0, 0.5), got {text}")
    return x


def _positive(text: str) -> float:
    x = float(text)
    if not x > 0:
        raise argparse.ArgumentTypeError(f"must be > 0, got {text}")
    return x


def _common(p: argparse.ArgumentParser):
    p.add_argument("--scenario", help="parameter document (default: bundled toy scenario)")
    p.add_argument("--series", help="series CSV overriding the one named in the document")
    p.add_argument("--out", help="result file")
    p.add_argument("--format", choices=("csv", "json"), default="csv")
    p.add_argument("--gap", type=_gap, default=1e-3, help="relative MIP gap (default 0.001)")
    p.add_argument("--time-limit", type=_positive, default=600.0, metavar="SECONDS")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--budget-mode", choices=[m.value for m in BudgetMode])
    p.add_argument("--backend", choices=("scip", "highs"))
    p.add_argument("--linearization", choices=("sos1", "bigm"), default="sos1")
    p.add_argument("--big-m", type=_positive, help="M for big-M complementarity")
    p.add_argument("--config", help="JSON file with default option values")
    p.add_argument("-v", "--verbose", action="store_true")


def build_parser() -> argparse.ArgumentParser:
    parser = _Parser(prog="gridpact", description="Electrolyzer/network-operator contracting "
                     "games under CTA and CRC contracts.", epilog=EPILOG,
                     formatter_class=argparse.RawDescriptionHelpFormatter)
    parser.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    sub = parser.add_subparsers(dest="command", required=True, parser_class=_Parser)
    cases = [c.value for c in Case]

    p = sub.add_parser("solve", help="solve one case", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _common(p)
    p.add_argument("--case", required=True, choices=cases)

    p = sub.add_parser("sweep", help="sweep a price or budget parameter", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _common(p)
    p.add_argument("--axis", required=True, help="crcplus, h2 or theta")
    p.add_argument("--from", dest="start", type=float)
    p.add_argument("--to", dest="stop", type=float)
    p.add_argument("--step", type=float)
    p.add_argument("--values", help="comma-separated values instead of --from/--to/--step")
    p.add_argument("--cases", default=",".join(cases), help="comma-separated cases")
    p.add_argument("--jobs", type=int, default=None, help="worker processes (default: cores)")
    p.add_argument("--gnuplot", action="store_true", help="write a gnuplot column block")

    p = sub.add_parser("oracle-check", help="compare a reformulation with grid enumeration",
                       epilog=EPILOG, formatter_class=argparse.RawDescriptionHelpFormatter)
    _common(p)
    p.add_argument("--case", choices=("game1", "game2"), default="game1")
    p.add_argument("--grid-step", default="0.25",
                   help="step, or comma-separated refinement sequence such as 1,0.5,0.25")
    p.add_argument("--ceiling", type=float, default=2.0)
    p.add_argument("--max-points", type=int, default=1_000_000)
    p.add_argument("--report", help="CSV of every grid point (finest step)")

    p = sub.add_parser("gen-data", help="write a synthetic scenario", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _common(p)
    d = SyntheticSpec()
    p.add_argument("--hours", type=int, default=d.hours)
    p.add_argument("--peak", type=float, default=d.peak)
    p.add_argument("--depth", type=float, default=d.depth)
    p.add_argument("--congestion-hours", type=int, default=d.congestion_hours)
    p.add_argument("--window-start", type=int, default=d.window_start)
    p.add_argument("--price-level", type=float, default=d.price_level)
    p.add_argument("--price-volatility", type=float, default=d.price_volatility)
    p.add_argument("--demand-cap", type=float, default=d.demand_cap)
    p.add_argument("--series-out", help="series CSV (default: next to --out)")

    p = sub.add_parser("validate", help="check a scenario and print a summary", epilog=EPILOG,
                       formatter_class=argparse.RawDescriptionHelpFormatter)
    _common(p)
    return parser


def parse_args(argv=None):
    parser = build_parser()
    argv = list(sys.argv[1:] if argv is None else argv)
    args = parser.parse_args(argv)
    if args.config:
        try:
            with open(args.config) as fh:
                cfg = json.load(fh)
        except (OSError, json.JSONDecodeError) as exc:
            parser.exit(EXIT_USAGE, f"gridpact: cannot read config {args.config}: {exc}\n")
        sub = parser._subparsers._group_actions[0].choices[args.command]
        known = {a.dest for a in sub._actions}
        unknown = [k for k in cfg if k.replace("-", "_") not in known]
        if unknown:
            parser.exit(EXIT_USAGE, f"gridpact: unknown config keys: {', '.join(unknown)}\n")
        sub.set_defaults(**{k.replace("-", "_"): v for k, v in cfg.items()})
        args = parser.parse_args(argv)
    return args


def _scenario(args):
    sc = load_scenario(args.scenario or packaged("toy.json"), args.series)
    if args.budget_mode:
        sc = validate_scenario(sc.with_overrides(mode=BudgetMode(args.budget_mode)))
    return sc


def _options(args) -> GameOptions:
    solver = SolverOptions(args.backend, args.gap, args.time_limit, args.seed)
    return GameOptions(solver=solver, linearization=args.linearization,
                       complementarity_m=args.big_m)


def cmd_solve(args) -> int:
    sc = _scenario(args)
    bundle = solve_case(sc, args.case, _options(args))
    if bundle.status is Status.INFEASIBLE:
        print(f"{args.case}: infeasible", file=sys.stderr)
        for tag in bundle.violated:
            print(f"  violated: {tag}", file=sys.stderr)
        return EXIT_INFEASIBLE
    if not bundle.has_incumbent:
        print(f"{args.case}: {bundle.status.value} (no usable solution)", file=sys.stderr)
        return EXIT_LIMIT
    row = bundle.summary()
    if args.out:
        write_results([row], args.out, args.format)
    print(f"{args.case}: {bundle.status.value}  p_grid={row['p_grid']:.4f} MW  "
          f"p_el=(FA {row['p_el_fa']:.4f}, NFA85 {row['p_el_nfa85']:.4f}, "
          f"NFA {row['p_el_nfa']:.4f})  ely_profit={row['ely_profit']:.2f}  "
          f"no_profit={row['no_profit']:.2f}  gap={row['gap']:.2e}")
    return EXIT_OK if bundle.ok else EXIT_LIMIT


def cmd_sweep(args) -> int:
    sc = _scenario(args)
    if args.values:
        try:
            values = tuple(float(v) for v in args.values.split(","))
        except ValueError:
            print("gridpact: --values must be comma-separated numbers", file=sys.stderr)
            return EXIT_USAGE
    elif None in (args.start, args.stop, args.step):
        print("gridpact: give --values or all of --from/--to/--step", file=sys.stderr)
        return EXIT_USAGE
    else:
        values = axis_values(args.start, args.stop, args.step)
    cases = tuple(c for c in args.cases.split(",") if c)
    plan = SweepPlan(Axis.parse(args.axis), values, cases, sc, _options(args), args.seed)
    result = run_sweep(plan, jobs=args.jobs or default_jobs())
    if args.out:
        result.write(args.out, args.format, gnuplot=args.gnuplot)
    for r in result.rows:
        print(f"{r['case']:8s} {r['sweep_param']}={r['sweep_value']:<8g} {r['status']:12s} "
              f"p_grid={r['p_grid']:.4f} ely={r['ely_profit']:.2f} no={r['no_profit']:.2f}")
    print(f"{len(result.rows) - len(result.failures)} of {len(result.rows)} points solved; "
          f"scenario hash {result.provenance['scenario_hash']}")
    return EXIT_OK


def cmd_oracle_check(args) -> int:
    try:
        steps = [float(s) for s in str(args.grid_step).split(",")]
    except ValueError:
        print("gridpact: --grid-step must be numbers", file=sys.stderr)
        return EXIT_USAGE
    sc = _scenario(args)
    peak = max(sc.network.residual_capacity)
    if args.ceiling < peak:
        print(f"gridpact: ceiling {args.ceiling} lies below the peak residual capacity {peak}",
              file=sys.stderr)
        return EXIT_USAGE
    sc = validate_scenario(replace(sc, big_m=args.ceiling))
    ref = solve_case(sc, args.case, _options(args))
    if not ref.ok:
        print(f"reformulation: {ref.status.value}", file=sys.stderr)
        return EXIT_INFEASIBLE if ref.status is Status.INFEASIBLE else EXIT_LIMIT
    ok = True
    last = None
    for step in steps:
        grid = GridSpec(step, args.ceiling, max_points=args.max_points)
        res = enumerate_bilevel(sc, args.case, grid, keep_report=bool(args.report))
        if math.isnan(res.objective):
            print(f"step {step:g}: no feasible grid point")
            ok = False
            continue
        diff, tol, agree = compare(ref.objective, res.objective, res.slack)
        rel = diff / max(1.0, abs(ref.objective))
        note = ""
        if last is not None and diff > last + 1e-9:
            note = "  (gap grew under refinement)"
        last = diff
        print(f"step {step:g}: reformulation {ref.objective:.6f}  oracle {res.objective:.6f}  "
              f"abs gap {diff:.3e}  rel gap {rel:.3e}  tolerance {tol:.3e}  "
              f"{'OK' if agree else 'MISMATCH'}{note}")
        ok &= agree
        if args.report:
            res.write_report(args.report)
    return EXIT_OK if ok else EXIT_USAGE


def cmd_gen_data(args) -> int:
    if not args.out:
        print("gridpact: gen-data needs --out", file=sys.stderr)
        return EXIT_USAGE
    spec = SyntheticSpec(args.hours, args.peak, args.depth, args.congestion_hours,
                         args.window_start, args.price_level, args.price_volatility,
                         args.demand_cap, args.seed)
    sc = generate_synthetic(spec, args.scenario)
    if args.budget_mode:
        sc = validate_scenario(sc.with_overrides(mode=BudgetMode(args.budget_mode)))
    series = args.series_out or (args.out.rsplit(".", 1)[0] + "_series.csv")
    save_scenario(sc, args.out, series)
    print(f"wrote {args.out} and {series} ({sc.hours} h, peak "
          f"{max(sc.network.residual_capacity):g} MW)")
    return EXIT_OK


def cmd_validate(args) -> int:
    sc = _scenario(args)
    s = sc.network.residual_capacity
    print(f"{sc.name}: {sc.hours} h, residual capacity {min(s):g}..{max(s):g} MW, "
          f"C_el {sc.tech.capital_cost_annual:.2f} EUR/MW/yr, eta {sc.tech.eta_sys:g} kg/MWh, "
          f"big-M {sc.big_m:g}, cost scale {sc.scale:.6g}, budget mode {sc.budgets.mode.value}")
    return EXIT_OK


COMMANDS = {"solve": cmd_solve, "sweep": cmd_sweep, "oracle-check": cmd_oracle_check,
            "gen-data": cmd_gen_data, "validate": cmd_validate}


def main(argv=None) -> int:
    args = parse_args(argv)
    logging.basicConfig(level=logging.INFO if args.verbose else logging.WARNING,
                        format="%(levelname)s %(name)s: %(message)s")
    try:
        return COMMANDS[args.command](args)
    except ScenarioError as exc:
        print("gridpact: invalid scenario:", file=sys.stderr)
        for e in exc.errors:
            print(f"  - {e}", file=sys.stderr)
        return EXIT_USAGE
    except (SchemaError, GridGuardError, SweepError, ValueError, OSError) as exc:
        print(f"gridpact: {exc}", file=sys.stderr)
        return EXIT_USAGE


if __name__ == "__main__":
    sys.exit(main())
