"""Brute-force bilevel oracle for tiny instances.

Leader decisions are enumerated on a grid. At every grid point the follower
is solved to optimality (value ``phi``), then a second, optimistic solve
minimizes the leader objective over all follower optima
(``follower objective <= phi + tol``) together with the remaining leader
variables. The best grid point is the oracle answer.

Game I enumerates the three requested capacities ``p_el[c]``. Game II
enumerates aggregates that fully determine the owner's problem: the grid
capacity ``P``, the CRC-eligible capacity ``F = p_no[fa] + p_no[nfa85]``, the
free CRC curtailment per hour (the pinned one is fixed by the budget row) and
the total non-firm curtailment ``R_t = r2[t] + r3[t]``. How the operator splits
``F`` and ``P - F`` over contracts and ``R_t`` over NFA85/NFA is decided in the
optimistic solve. The owner's contracts equal the accommodated capacities at
every feasible point, so the tariff part of the owner's objective is a
leader-fixed constant and is left out of the follower-value comparison.
"""
from __future__ import annotations

import csv
import itertools
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

import numpy as np
from scipy.optimize import Bounds, LinearConstraint, milp

from .bilevel import BilevelProblem
from .core import CONTRACTS, BudgetMode, ScenarioData, validate_scenario
from .games import (C_KEYS, Case, SolutionBundle, _collect, build_game1, build_game2,
                    extract_profits)
from .lp import LinExpr, ModelIR, RawSolution, Status, VarKind, compile_model, quicksum

log = logging.getLogger(__name__)

GAME1_COORDS = tuple(f"p_el[{C_KEYS[c]}]" for c in CONTRACTS)
GAME2_COORDS = ("p_grid", "firm", "crc_free", "nonfirm")


class GridGuardError(ValueError):
    pass


@dataclass(frozen=True)
class GridSpec:
    step: float = 0.25
    ceiling: float = 2.0
    # coordinates to enumerate; the rest are held at zero
    variables: Optional[Tuple[str, ...]] = None
    max_points: int = 1_000_000

    def __post_init__(self):
        if not self.step > 0:
            raise ValueError("grid step must be > 0")
        if not self.ceiling >= 0:
            raise ValueError("grid ceiling must be >= 0")

    def levels(self, top: Optional[float] = None) -> np.ndarray:
        top = self.ceiling if top is None else top
        n = int(math.floor(top / self.step + 1e-9))
        return np.round(np.arange(n + 1) * self.step, 12)


@dataclass
class FollowerResult:
    status: Status
    objective: float
    values: Dict[str, float] = field(default_factory=dict)


@dataclass
class OracleResult:
    case: Case
    objective: float
    point: Optional[Tuple[float, ...]]
    bundle: Optional[SolutionBundle]
    slack: float
    n_points: int
    n_feasible: int
    runtime_s: float
    report: List[dict] = field(default_factory=list)

    def write_report(self, path: str):
        keys = ["point", "follower_status", "leader_objective"]
        with open(path, "w", newline="") as fh:
            w = csv.DictWriter(fh, fieldnames=keys)
            w.writeheader()
            for row in self.report:
                w.writerow({"point": " ".join(f"{x:g}" for x in row["point"]),
                            "follower_status": row["follower_status"],
                            "leader_objective": repr(row["leader_objective"])})


class _Compiled:
    """A ModelIR frozen into scipy arrays whose bounds can be overwritten per solve."""

    def __init__(self, model: ModelIR):
        self.model = model
        self.sf = compile_model(model)
        self.idx = {v.name: v.index for v in model.variables}
        self.row = {c.tag: i for i, c in enumerate(model.constraints)}
        self.cons = [LinearConstraint(self.sf.A, self.sf.row_lo, self.sf.row_hi)]

    def run(self, fix: Dict[str, float], rows: Dict[str, float]) -> Tuple[Status, float, np.ndarray]:
        sf = self.sf
        lo, hi = sf.lo.copy(), sf.hi.copy()
        for name, val in fix.items():
            j = self.idx[name]
            lo[j] = hi[j] = val
        row_lo, row_hi = sf.row_lo, sf.row_hi
        if rows:
            row_lo, row_hi = row_lo.copy(), row_hi.copy()
            for tag, val in rows.items():
                row_lo[self.row[tag]] = row_hi[self.row[tag]] = val
        cons = [LinearConstraint(sf.A, row_lo, row_hi)] if sf.A.shape[0] else []
        opts = {"disp": False, "time_limit": 60.0}
        if sf.integrality.any():
            opts["mip_rel_gap"] = 1e-9
        res = milp(sf.c, integrality=sf.integrality, bounds=Bounds(lo, hi), constraints=cons,
                   options=opts)
        if res.status != 0 or res.x is None:
            return (Status.INFEASIBLE if res.status == 2 else Status.LIMIT), math.nan, None
        return Status.OPTIMAL, float(res.fun) + sf.c0, np.asarray(res.x)


def _relaxed(model: ModelIR, names) -> None:
    for n in names:
        v = model.var(n)
        model.variables[v.index] = type(v)(v.index, v.name, VarKind.CONTINUOUS, 0.0, 1.0)
        model._by_name[n] = model.variables[v.index]


def _follower_model(bp: BilevelProblem, hours: int, aggregate: bool) -> ModelIR:
    m = bp.model.copy(name=bp.name + ":follower")
    m.constraints, m._tags = [], {}
    _relaxed(m, [f"b[{t}]" for t in range(hours)])
    for con in bp.lower.constraints:
        m.add_constraint(con.expr, con.sense, con.rhs, con.tag)
    if aggregate:
        _aggregate_rows(m, hours)
    m.set_objective(_follower_objective(bp, aggregate))
    return m


def _follower_objective(bp: BilevelProblem, reduced: bool) -> LinExpr:
    """Game II drops the owner's tariff terms (fixed by the leader, see module notes)."""
    if not reduced:
        return bp.lower.objective
    obj = bp.lower.objective
    return LinExpr({v: a for v, a in obj.terms.items() if not v.name.startswith("p_el[")},
                   obj.const)


def _aggregate_rows(m: ModelIR, hours: int):
    m.add_constraint(quicksum(m.var(f"p_no[{C_KEYS[c]}]") for c in CONTRACTS) - m.var("p_grid"),
                     "==", 0.0, "agg:grid")
    m.add_constraint(m.var("p_no[fa]") + m.var("p_no[nfa85]"), "==", 0.0, "agg:firm")
    for t in range(hours):
        m.add_constraint(m.var(f"r2[{t}]") + m.var(f"r3[{t}]"), "==", 0.0, f"agg:nonfirm[{t}]")


def _optimistic_model(bp: BilevelProblem, hours: int, game: Case) -> ModelIR:
    m = bp.model.copy(name=bp.name + ":optimistic")
    if game is Case.GAME1:
        _relaxed(m, [f"b[{t}]" for t in range(hours)])
    for con in bp.lower.constraints:
        m.add_constraint(con.expr, con.sense, con.rhs, con.tag)
    if game is Case.GAME2:
        _aggregate_rows(m, hours)
    m.add_constraint(_follower_objective(bp, game is Case.GAME2), "<=", 0.0, "follower_value")
    m.set_objective(bp.model.objective)
    return m


def _problem(sc: ScenarioData, game: Case) -> BilevelProblem:
    if game is Case.GAME1:
        return build_game1(sc)
    if game is Case.GAME2:
        return build_game2(sc)
    raise ValueError(f"the oracle handles game1/game2 only, not {game.value}")


def solve_follower(leader_fix: Dict[str, float], sc: ScenarioData, game) -> FollowerResult:
    """Follower optimum for fixed leader decisions (every leader variable must be given).

    Game I: the operator's problem with ``b`` relaxed to [0, 1]; leader vars
    are ``p_el[c]`` (hourly dispatch ``p_e``/``f`` does not enter the
    follower). Game II: the owner's LP; leader vars are ``p_grid``,
    ``p_no[c]`` and the hourly ``r2, r3, s, s_plus``.
    """
    game = Case.parse(game)
    sc = validate_scenario(sc)
    bp = _problem(sc, game)
    if game is Case.GAME1:
        needed = list(GAME1_COORDS)
    else:
        needed = ["p_grid"] + [f"p_no[{C_KEYS[c]}]" for c in CONTRACTS]
        needed += [f"{b}[{t}]" for b in ("r2", "r3", "s", "s_plus") for t in sc.T]
    missing = [n for n in needed if n not in leader_fix]
    if missing:
        raise ValueError(f"leader assignment lacks {', '.join(missing[:5])}"
                         + (" ..." if len(missing) > 5 else ""))
    comp = _Compiled(_follower_model(bp, sc.hours, aggregate=False))
    status, obj, x = comp.run({n: float(v) for n, v in leader_fix.items()}, {})
    if not status.ok:
        return FollowerResult(status, math.nan)
    names = [v.name for v in bp.lower.variables]
    return FollowerResult(status, obj, {n: float(x[comp.idx[n]]) for n in names})


def grid_slack(sc: ScenarioData, game, step: float) -> float:
    """Leader-objective change attributable to moving one enumerated coordinate by one step.

    A heuristic Lipschitz-type bound used as the tolerance between grid and
    continuous optima; tight agreement is reported separately.
    """
    game = Case.parse(game)
    sc = validate_scenario(sc)
    tmax = max(sc.tariff(c) for c in CONTRACTS)
    crc = max(sc.prices.crc_at(t) for t in sc.T)
    if game is Case.GAME1:
        per_hour = (sc.prices.h2 * sc.tech.eta_sys + max(abs(x) for x in sc.prices.electricity)
                    + crc + sc.prices.crc_plus)
        return step * (sc.c_el + tmax + sc.hours * per_hour)
    return step * (tmax + crc + sc.prices.crc_plus + sc.budgets.penalty)


def _game1_points(sc, grid: GridSpec):
    coords = grid.variables or GAME1_COORDS
    bad = set(coords) - set(GAME1_COORDS)
    if bad:
        raise ValueError(f"unknown game1 grid coordinates {sorted(bad)}")
    lv = grid.levels()
    n = len(lv) ** len(coords)
    if n > grid.max_points:
        raise GridGuardError(f"{n} grid points exceed the guard of {grid.max_points}")
    for combo in itertools.product(lv, repeat=len(coords)):
        fix = {name: 0.0 for name in GAME1_COORDS}
        fix.update(zip(coords, combo))
        yield tuple(fix[nm] for nm in GAME1_COORDS), fix, {}


def _game2_points(sc: ScenarioData, grid: GridSpec):
    coords = grid.variables or GAME2_COORDS
    bad = set(coords) - set(GAME2_COORDS)
    if bad:
        raise ValueError(f"unknown game2 grid coordinates {sorted(bad)}")
    pin_plus = sc.budgets.mode is BudgetMode.PIN_CRC_PLUS
    pinned = sc.budgets.theta * sc.budgets.cm_budget
    fixed_name, free_name = ("s_plus", "s") if pin_plus else ("s", "s_plus")
    fixed_val = [pinned / (sc.prices.crc_plus if pin_plus else sc.prices.crc_at(t))
                 if pinned > 0 else 0.0 for t in sc.T]
    lv = grid.levels()
    p_levels = lv if "p_grid" in coords else np.zeros(1)
    use_firm = "firm" in coords
    free_levels = lv if "crc_free" in coords else np.zeros(1)
    nf_levels = grid.levels(2 * grid.ceiling) if "nonfirm" in coords else np.zeros(1)
    eps = 1e-9
    alpha = sc.tech.alpha_min

    def hour_options(P, F, t):
        opts = []
        for sf in free_levels:
            if fixed_val[t] + sf > F + eps:  # CRC only on FA/NFA85 capacity
                continue
            for R in nf_levels:
                curt = fixed_val[t] + sf + R
                # total curtailment never exceeds P (no double curtailment + NFA cap),
                # must clear the residual limit and leave room for minimum load
                if curt > P + eps or P - curt > sc.residual(t) + eps:
                    continue
                if P - curt < alpha * P - eps:
                    continue
                opts.append((sf, R))
        return opts

    plan = []
    total = 0
    for P in p_levels:
        for F in (lv[lv <= P + eps] if use_firm else np.zeros(1)):
            per_hour = [hour_options(P, F, t) for t in sc.T]
            total += math.prod(len(o) for o in per_hour)
            if total > grid.max_points:
                raise GridGuardError(f"more than {grid.max_points} grid points; coarsen the "
                                     "step, lower the ceiling or shorten the horizon")
            plan.append((P, F, per_hour))
    for P, F, per_hour in plan:
        for combo in itertools.product(*per_hour):
            fix = {"p_grid": float(P)}
            rows = {"agg:firm": float(F)}
            point = [float(P), float(F)]
            for t, (sf, R) in enumerate(combo):
                fix[f"{free_name}[{t}]"] = float(sf)
                fix[f"{fixed_name}[{t}]"] = fixed_val[t]
                rows[f"agg:nonfirm[{t}]"] = float(R)
                point += [float(sf), float(R)]
            yield tuple(point), fix, rows


def enumerate_bilevel(sc: ScenarioData, game, grid: GridSpec = GridSpec(),
                      keep_report: bool = True) -> OracleResult:
    """Exhaustive grid scan; returns the best leader point and its bundle.

    Points are visited in lexicographic order and a later point replaces the
    incumbent only if strictly better, so ties resolve to the smallest tuple.
    """
    game = Case.parse(game)
    sc = validate_scenario(sc)
    t0 = time.perf_counter()
    bp = _problem(sc, game)
    follower = _Compiled(_follower_model(bp, sc.hours, aggregate=game is Case.GAME2))
    opt_model = _optimistic_model(bp, sc.hours, game)
    optimistic = _Compiled(opt_model)
    fv_row = optimistic.row["follower_value"]
    # the row holds the follower objective minus its constant part
    fv_base = opt_model.constraint("follower_value").rhs
    points = _game1_points(sc, grid) if game is Case.GAME1 else _game2_points(sc, grid)

    best_obj, best_point, best_x = math.inf, None, None
    n = n_ok = 0
    report = []
    for point, fix, rows in points:
        n += 1
        fst, phi, _ = follower.run(fix, rows)
        obj = math.nan
        label = "infeasible" if fst is Status.INFEASIBLE else fst.value
        if fst.ok:
            # follower objective (incl. constant leader terms) <= phi + tol
            fv = dict(rows)
            optimistic.sf.row_hi[fv_row] = fv_base + phi + 1e-7 * (1.0 + abs(phi))
            ost, obj, x = optimistic.run(fix, fv)
            if ost.ok:
                n_ok += 1
                label = "optimal"
                if best_x is None or obj < best_obj - 1e-9 * (1.0 + abs(best_obj)):
                    best_obj, best_point, best_x = obj, point, x
            else:
                label = "leader-infeasible"
                obj = math.nan
        if keep_report:
            report.append({"point": point, "follower_status": label, "leader_objective": obj})
    runtime = time.perf_counter() - t0
    bundle = None
    if best_x is not None:
        sol = RawSolution(best_x[:opt_model.n_vars], best_obj, Status.OPTIMAL, 0.0, runtime,
                          {v.name: v.index for v in opt_model.variables})
        values = _collect(opt_model, sol, sc.hours)
        ely, no = extract_profits(values, sc, game)
        bundle = SolutionBundle(game, Status.OPTIMAL, 0.0, runtime, best_obj, values, ely, no)
    log.info("oracle %s: %d points, %d feasible, best %.6g", game.value, n, n_ok, best_obj)
    return OracleResult(game, best_obj if best_x is not None else math.nan, best_point, bundle,
                        grid_slack(sc, game, grid.step), n, n_ok, runtime, report)


def compare(reform_obj: float, oracle_obj: float, slack: float, rel: float = 1e-3):
    """(absolute difference, tolerance, agrees) between reformulation and oracle."""
    diff = abs(reform_obj - oracle_obj)
    tol = max(rel * max(abs(reform_obj), abs(oracle_obj)), slack)
    return diff, tol, diff <= tol
