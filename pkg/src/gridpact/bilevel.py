"""Single-level reformulations of optimistic bilevel programs with an LP follower.

Dual sign convention: every follower row is normalized to ``g(y, x) <= 0``
(``>=`` rows are negated) or ``h(y, x) == 0``. Inequality duals are ``>= 0``
and enter the Lagrangian with a plus sign; equality duals are free. Finite
bounds on follower variables are turned into explicit rows so that each one
carries its own dual.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass, field, replace
from typing import Callable, Dict, Iterable, List, Optional, Sequence, Tuple

from .lp import (INF, Constraint, LinExpr, ModelError, ModelIR, Sense, Var, VarKind, evaluate,
                 quicksum)

log = logging.getLogger(__name__)


class ReformulationError(ValueError):
    pass


@dataclass
class LowerLevelLP:
    variables: List[Var]
    constraints: List[Constraint]
    objective: LinExpr
    couplings: List[Var]

    def var_set(self) -> set:
        return {v.index for v in self.variables}


@dataclass
class BilevelProblem:
    """Upper objective/constraints live in ``model``; the follower in ``lower``.

    ``model`` is the shared variable registry for both levels.
    """

    model: ModelIR
    lower: LowerLevelLP
    name: str = "bilevel"

    def lower_var(self, v: Var) -> bool:
        return v.index in self.lower.var_set()


def _check_lower(bp: BilevelProblem):
    lower_ids = bp.lower.var_set()
    allowed = lower_ids | {v.index for v in bp.lower.couplings}
    for con in bp.lower.constraints:
        for v in con.expr.terms:
            if v.index not in allowed:
                raise ReformulationError(f"follower row {con.tag!r} references {v.name!r}, "
                                         "which is neither a follower nor a coupling variable")
    for v in bp.lower.objective.terms:
        if v.index not in allowed:
            raise ReformulationError(f"follower objective references undeclared {v.name!r}")


def relax_binaries(bp: BilevelProblem, variables: Iterable[Var]) -> BilevelProblem:
    """Return a copy where the listed follower binaries are continuous on [0, 1]."""
    model = bp.model.copy()
    lower_ids = bp.lower.var_set()
    for v in variables:
        if v.index not in lower_ids:
            raise ReformulationError(f"{v.name!r} is not a follower variable")
        cur = model.variables[v.index]
        if cur.kind is not VarKind.BINARY:
            raise ReformulationError(f"{v.name!r} is not binary")
        nv = Var(cur.index, cur.name, VarKind.CONTINUOUS, max(cur.lo, 0.0), min(cur.hi, 1.0))
        model.variables[cur.index] = nv
        model._by_name[cur.name] = nv
    lower = replace(bp.lower, variables=[model.variables[v.index] for v in bp.lower.variables])
    return BilevelProblem(model, lower, bp.name)


@dataclass
class Row:
    """A follower row in normalized form ``sign * (expr - rhs) <= 0`` (or ``== 0``)."""

    tag: str
    expr: LinExpr
    rhs: float
    sign: float
    equality: bool
    source: str  # "row" or "bound"


@dataclass
class Pair:
    tag: str
    slack: LinExpr
    dual: Var


@dataclass
class ReformulationArtifacts:
    rows: List[Row] = field(default_factory=list)
    duals: Dict[str, Var] = field(default_factory=dict)
    pairs: List[Pair] = field(default_factory=list)
    stationarity: Dict[str, str] = field(default_factory=dict)  # var name -> row tag
    linearization: Dict[str, str] = field(default_factory=dict)  # pair tag -> description
    strong_duality: Optional[str] = None
    method: Optional[str] = None
    # follower blocks kept as plain primal rows (see ``separable_blocks``)
    dropped_vars: List[Var] = field(default_factory=list)
    dropped_rows: List[str] = field(default_factory=list)

    def kept_ids(self, lower_ids: set) -> set:
        return lower_ids - {v.index for v in self.dropped_vars}


@dataclass
class Reformulation:
    model: ModelIR
    artifacts: ReformulationArtifacts
    problem: BilevelProblem


def _rows_of(bp: BilevelProblem) -> List[Row]:
    rows = []
    for con in bp.lower.constraints:
        sign = -1.0 if con.sense is Sense.GE else 1.0
        rows.append(Row(con.tag, con.expr, con.rhs, sign, con.sense is Sense.EQ, "row"))
    for v in bp.lower.variables:
        v = bp.model.variables[v.index]
        if v.lo == v.hi:
            rows.append(Row(f"fix:{v.name}", LinExpr({v: 1.0}), v.lo, 1.0, True, "bound"))
            continue
        if v.lo != -INF:
            rows.append(Row(f"lb:{v.name}", LinExpr({v: 1.0}), v.lo, -1.0, False, "bound"))
        if v.hi != INF:
            rows.append(Row(f"ub:{v.name}", LinExpr({v: 1.0}), v.hi, 1.0, False, "bound"))
    return rows


def separable_blocks(bp: BilevelProblem) -> Tuple[List[Var], List[str]]:
    """Follower variables (and their rows) that cannot influence the leader.

    Follower variables are grouped into blocks linked by shared follower rows.
    A block whose variables appear neither in the leader objective nor in
    any leader row only has to be feasible: its optimal value enters no
    leader quantity, and it shares no row with the rest of the follower.
    Returns the block variables and the tags of their rows.
    """
    lower_ids = bp.lower.var_set()
    parent = {i: i for i in lower_ids}

    def find(i):
        while parent[i] != i:
            parent[i] = parent[parent[i]]
            i = parent[i]
        return i

    for con in bp.lower.constraints:
        ids = [v.index for v in con.expr.terms if v.index in lower_ids]
        for j in ids[1:]:
            parent[find(j)] = find(ids[0])
    touched = {v.index for v in bp.model.objective.terms}
    for con in bp.model.constraints:
        touched.update(v.index for v in con.expr.terms)
    bad_roots = {find(i) for i in lower_ids if i in touched}
    drop = [v for v in bp.lower.variables if find(v.index) not in bad_roots]
    drop_ids = {v.index for v in drop}
    tags = [con.tag for con in bp.lower.constraints
            if any(v.index in drop_ids for v in con.expr.terms)]
    return drop, tags


def derive_kkt(bp: BilevelProblem, separate: bool = False) -> Reformulation:
    """Replace the follower LP by primal feasibility, stationarity and dual feasibility.

    Complementarity pairs are collected in the artifacts but not yet enforced;
    see ``linearize_complementarity``. With ``separate`` the follower blocks
    found by ``separable_blocks`` keep their primal rows only; their values
    are made follower-optimal afterwards by ``complete_dropped``.
    """
    _check_lower(bp)
    for v in bp.lower.variables:
        if bp.model.variables[v.index].kind is not VarKind.CONTINUOUS:
            raise ReformulationError(f"follower variable {v.name!r} is not continuous; "
                                     "relax it first")
    lower_ids = bp.lower.var_set()
    for grp in bp.model.sos1:
        if any(v.index in lower_ids for v in grp):
            raise ReformulationError("follower variables may not appear in SOS1 groups")

    model = bp.model.copy(name=f"{bp.name}:kkt")
    art = ReformulationArtifacts()
    if separate:
        art.dropped_vars, art.dropped_rows = separable_blocks(bp)
    dropped_ids = {v.index for v in art.dropped_vars}
    dropped_tags = set(art.dropped_rows)
    art.rows = [r for r in _rows_of(bp) if r.tag not in dropped_tags
                and not (r.source == "bound" and next(iter(r.expr.terms)).index in dropped_ids)]
    for con in bp.lower.constraints:
        model.add_constraint(con.expr, con.sense, con.rhs, con.tag)

    for row in art.rows:
        lo = -INF if row.equality else 0.0
        dual = model.add_variable(f"dual[{row.tag}]", lo=lo, hi=INF)
        art.duals[row.tag] = dual
        if not row.equality:
            slack = (LinExpr.of(row.rhs) - row.expr) * row.sign
            art.pairs.append(Pair(row.tag, slack, dual))

    kept = [v for v in bp.lower.variables if v.index not in dropped_ids]
    grad: Dict[int, LinExpr] = {v.index: LinExpr(const=bp.lower.objective.terms.get(v, 0.0))
                                for v in kept}
    for row in art.rows:
        dual = art.duals[row.tag]
        for v, a in row.expr.terms.items():
            if v.index in grad:
                grad[v.index] = grad[v.index] + LinExpr({dual: row.sign * a})
    for v in kept:
        tag = f"stationarity[{v.name}]"
        model.add_constraint(grad[v.index], "==", 0.0, tag)
        art.stationarity[v.name] = tag
    return Reformulation(model, art, bp)


def _interval(expr: LinExpr, model: ModelIR) -> Tuple[float, float]:
    lo = hi = expr.const
    for v, a in expr.terms.items():
        v = model.variables[v.index]
        if a > 0:
            lo += a * v.lo if v.lo != -INF else -INF
            hi += a * v.hi if v.hi != INF else INF
        else:
            lo += a * v.hi if v.hi != INF else -INF
            hi += a * v.lo if v.lo != -INF else INF
    return lo, hi


def linearize_complementarity(reform: Reformulation, method: str = "sos1",
                              big_m: Optional[float] = None) -> Reformulation:
    """Enforce ``slack * dual == 0`` for every pair, via SOS1 groups or big-M binaries."""
    method = method.lower()
    if method not in ("sos1", "bigm"):
        raise ReformulationError(f"unknown linearization {method!r}")
    if method == "bigm" and (big_m is None or not math.isfinite(big_m) or big_m <= 0):
        raise ReformulationError("big-M linearization needs a finite positive M")
    model, art = reform.model, reform.artifacts
    art.method = method
    for pair in art.pairs:
        if method == "sos1":
            single = (len(pair.slack.terms) == 1 and pair.slack.const == 0.0
                      and next(iter(pair.slack.terms.values())) == 1.0)
            if single:
                member = next(iter(pair.slack.terms))
                art.linearization[pair.tag] = f"sos1({member.name}, {pair.dual.name})"
            else:
                _, hi = _interval(pair.slack, model)
                member = model.add_variable(f"slack[{pair.tag}]", lo=0.0, hi=hi)
                model.add_constraint(LinExpr({member: 1.0}) - pair.slack, "==", 0.0,
                                     f"link[{pair.tag}]")
                art.linearization[pair.tag] = f"sos1({member.name}, {pair.dual.name}) + link"
            model.add_sos1([member, pair.dual])
        else:
            z = model.add_variable(f"z[{pair.tag}]", VarKind.BINARY)
            model.add_constraint(pair.slack - LinExpr({z: big_m}), "<=", 0.0,
                                 f"bigm_slack[{pair.tag}]")
            model.add_constraint(LinExpr({pair.dual: 1.0, z: big_m}), "<=", big_m,
                                 f"bigm_dual[{pair.tag}]")
            art.linearization[pair.tag] = f"bigm({z.name}, M={big_m:g})"
    return reform


def _split(row: Row, lower_ids: set) -> Tuple[LinExpr, LinExpr]:
    """Split a row expression into follower part and coupling part."""
    ly, lx = LinExpr(), LinExpr()
    for v, a in row.expr.terms.items():
        (ly if v.index in lower_ids else lx).terms[v] = a
    return ly, lx


def dual_objective_terms(reform: Reformulation):
    """Yield ``(row, dual, coupling_expr)`` with the dual objective equal to
    ``sum(dual * sign * (coupling_expr - rhs))`` plus follower-objective terms
    on non-follower variables."""
    lower_ids = reform.artifacts.kept_ids(reform.problem.lower.var_set())
    for row in reform.artifacts.rows:
        _, lx = _split(row, lower_ids)
        yield row, reform.artifacts.duals[row.tag], lx


def add_strong_duality_cut(reform: Reformulation, dual_bound: Optional[float] = None) -> int:
    """Add ``follower primal objective <= follower dual objective``.

    The dual objective contains products ``dual * coupling``. Where every
    coupling in a row is fixed the product is linear. Otherwise it is replaced
    by an auxiliary ``w`` restricted by the McCormick over-estimators that are
    available from the coupling bounds (and from ``dual_bound`` if given), so
    the row stays valid for every bilevel-feasible point.
    """
    model, art = reform.model, reform.artifacts
    lower_ids = art.kept_ids(reform.problem.lower.var_set())
    primal = LinExpr({v: c for v, c in reform.problem.lower.objective.terms.items()
                      if v.index in lower_ids})
    dual_obj = LinExpr()
    for row, dual, lx in dual_objective_terms(reform):
        dual_obj = dual_obj + LinExpr({dual: -row.sign * row.rhs})
        if not lx.terms:
            continue
        z = lx * row.sign
        zlo, zhi = _interval(z, model)
        if zlo == zhi:
            dual_obj = dual_obj + LinExpr({dual: zlo})
            continue
        if not (math.isfinite(zlo) and math.isfinite(zhi)):
            raise ReformulationError(f"coupling in follower row {row.tag!r} is unbounded; "
                                     "bound the leader variables to build the cut")
        w = model.add_variable(f"sdw[{row.tag}]", lo=-INF, hi=INF)
        if row.equality:
            if dual_bound is None:
                raise ReformulationError(f"equality row {row.tag!r} has a free dual times a "
                                         "variable coupling; pass dual_bound")
            u = dual_bound
            # McCormick over-estimators of dual * z with dual in [-u, u]
            model.add_constraint(LinExpr({w: 1.0, dual: -zlo}) - z * u, "<=", -u * zlo,
                                 f"sdw_a[{row.tag}]")
            model.add_constraint(LinExpr({w: 1.0, dual: -zhi}) + z * u, "<=", u * zhi,
                                 f"sdw_b[{row.tag}]")
        else:
            model.add_constraint(LinExpr({w: 1.0, dual: -zhi}), "<=", 0.0, f"sdw_a[{row.tag}]")
            if dual_bound is not None:
                u = dual_bound
                model.add_constraint(LinExpr({w: 1.0, dual: -zlo}) - z * u, "<=", -u * zlo,
                                     f"sdw_b[{row.tag}]")
        dual_obj = dual_obj + LinExpr({w: 1.0})
    art.strong_duality = "strong-duality"
    return model.add_constraint(primal - dual_obj, "<=", 0.0, art.strong_duality)


def build_hpr(bp: BilevelProblem,
              extra: Optional[Callable[[ModelIR], None]] = None) -> ModelIR:
    """Drop the follower objective, keep its constraints; ``extra`` may add rows."""
    _check_lower(bp)
    model = bp.model.copy(name=f"{bp.name}:hpr")
    for con in bp.lower.constraints:
        model.add_constraint(con.expr, con.sense, con.rhs, con.tag)
    if extra is not None:
        extra(model)
    return model


def kkt_certificate(reform: Reformulation, values) -> Dict[str, float]:
    """Exact complementarity and duality-gap residuals at a solution."""
    art = reform.artifacts
    lower_ids = art.kept_ids(reform.problem.lower.var_set())
    comp = 0.0
    for pair in art.pairs:
        comp = max(comp, abs(evaluate(pair.slack, values) * float(values[pair.dual.index])))
    primal = sum(c * float(values[v.index]) for v, c in reform.problem.lower.objective.terms.items()
                 if v.index in lower_ids)
    dual = 0.0
    for row, dv, lx in dual_objective_terms(reform):
        dual += float(values[dv.index]) * row.sign * (evaluate(lx, values) - row.rhs)
    return {"complementarity": comp, "primal": primal, "dual": dual,
            "duality_gap": abs(primal - dual)}


def complete_dropped(reform: Reformulation, values, solve_lp) -> "np.ndarray":
    """Re-optimize the dropped follower blocks at fixed values of everything else.

    ``solve_lp(model) -> RawSolution`` solves an LP. Returns a new value
    array; unchanged if nothing was dropped.
    """
    import numpy as np

    art = reform.artifacts
    values = np.array(values, dtype=float)
    if not art.dropped_vars:
        return values
    bp = reform.problem
    drop_ids = {v.index for v in art.dropped_vars}
    lp = ModelIR(name=f"{bp.name}:dropped")
    local = {}
    for v in art.dropped_vars:
        cur = bp.model.variables[v.index]
        local[v.index] = lp.add_variable(cur.name, VarKind.CONTINUOUS, cur.lo, cur.hi)

    def localize(expr: LinExpr) -> LinExpr:
        out = LinExpr(const=expr.const)
        for v, a in expr.terms.items():
            out = out + (LinExpr({local[v.index]: a}) if v.index in drop_ids
                         else LinExpr(const=a * values[v.index]))
        return out

    tags = set(art.dropped_rows)
    for con in bp.lower.constraints:
        if con.tag in tags:
            lp.add_constraint(localize(con.expr), con.sense, con.rhs, con.tag)
    lp.set_objective(localize(LinExpr({v: c for v, c in bp.lower.objective.terms.items()
                                       if v.index in drop_ids})))
    sol = solve_lp(lp)
    if not sol.status.ok:
        raise ReformulationError(f"dropped follower block is {sol.status.value} at the solution")
    for v in art.dropped_vars:
        values[v.index] = sol[local[v.index]]
    return values


def _fixed_copy(model: ModelIR, fixed: Dict[int, float], name: str) -> ModelIR:
    m = model.copy(name=name)
    for idx, val in fixed.items():
        m.set_bounds(m.variables[idx], val, val)
    return m


def feasible_completion(reform: Reformulation, fixed: Dict[int, float], solve_lp, solve_mip,
                        tol: float = 1e-7):
    """A point of the single-level model with the coupling variables held at ``fixed``.

    The follower is solved at the fixed couplings, the leader-best follower
    optimum is selected, and duals are recovered from the active rows. The
    result satisfies every row of ``reform.model`` up to solver tolerance and
    serves as a starting incumbent. Returns None if any step fails.
    """
    import numpy as np

    bp, art = reform.problem, reform.artifacts
    lower_ids = bp.lower.var_set()
    # follower LP (leader binaries never enter follower rows)
    fol = _fixed_copy(bp.model, fixed, f"{bp.name}:follower")
    for v in list(fol.variables):
        if v.kind is VarKind.BINARY:
            fol.variables[v.index] = Var(v.index, v.name, VarKind.CONTINUOUS, v.lo, v.hi)
            fol._by_name[v.name] = fol.variables[v.index]
    fol.constraints, fol._tags = [], {}
    for con in bp.lower.constraints:
        fol.add_constraint(con.expr, con.sense, con.rhs, con.tag)
    fol.set_objective(bp.lower.objective)
    fs = solve_lp(fol)
    if not fs.status.ok:
        return None
    phi = fs.objective
    # leader-best point among follower optima
    opt = _fixed_copy(bp.model, fixed, f"{bp.name}:optimistic")
    for con in bp.lower.constraints:
        opt.add_constraint(con.expr, con.sense, con.rhs, con.tag)
    opt.add_constraint(bp.lower.objective, "<=", phi + 1e-9 * (1 + abs(phi)), "follower_value")
    os_ = solve_mip(opt)
    if not os_.status.ok:
        return None
    x0 = os_.values
    # duals: stationarity with inactive rows forced to zero
    kept = art.kept_ids(lower_ids)
    dm = ModelIR(name=f"{bp.name}:duals")
    dv = {}
    for row in art.rows:
        slack = row.sign * (row.rhs - evaluate(row.expr, x0))
        inactive = not row.equality and slack > tol
        lo = 0.0 if not row.equality else -INF
        hi = 0.0 if inactive else INF
        dv[row.tag] = dm.add_variable(f"dual[{row.tag}]", lo=lo, hi=hi)
    grad: Dict[int, LinExpr] = {v.index: LinExpr(const=bp.lower.objective.terms.get(v, 0.0))
                                for v in bp.lower.variables if v.index in kept}
    for row in art.rows:
        for v, a in row.expr.terms.items():
            if v.index in grad:
                grad[v.index] = grad[v.index] + LinExpr({dv[row.tag]: row.sign * a})
    for i, g in grad.items():
        dm.add_constraint(g, "==", 0.0, f"st[{i}]")
    dm.set_objective(quicksum(d for t, d in dv.items() if d.lo == 0.0))
    ds = solve_lp(dm)
    if not ds.status.ok:
        return None
    # assemble
    x = np.zeros(reform.model.n_vars)
    orig = {v.name: v.index for v in bp.model.variables}
    for v in reform.model.variables:
        if v.name in orig:
            x[v.index] = x0[orig[v.name]]
    for tag, d in dv.items():
        mv = art.duals[tag]
        x[mv.index] = ds[d]
    for pair in art.pairs:
        sl = evaluate(pair.slack, x)
        if reform.model.has_var(f"slack[{pair.tag}]"):
            x[reform.model.var(f"slack[{pair.tag}]").index] = sl
        if reform.model.has_var(f"z[{pair.tag}]"):
            x[reform.model.var(f"z[{pair.tag}]").index] = 1.0 if sl > tol else 0.0
    for row, dual, lx in dual_objective_terms(reform):
        if reform.model.has_var(f"sdw[{row.tag}]"):
            x[reform.model.var(f"sdw[{row.tag}]").index] = (x[dual.index] * row.sign
                                                            * evaluate(lx, x))
    return x


def trace_report(reform: Reformulation) -> str:
    """Per-row provenance of the reformulation: source tag -> generated rows."""
    art = reform.artifacts
    lines = [f"# reformulation trace for {reform.problem.name}",
             f"# linearization: {art.method or 'none'}"]
    for row in art.rows:
        kind = "eq" if row.equality else "ineq"
        lin = art.linearization.get(row.tag, "-")
        lines.append(f"{row.tag}\t{row.source}/{kind}\t{art.duals[row.tag].name}\t{lin}")
    for var, tag in art.stationarity.items():
        lines.append(f"{var}\tstationarity\t{tag}")
    for v in art.dropped_vars:
        lines.append(f"{v.name}\tseparable\tprimal rows only")
    if art.strong_duality:
        lines.append(f"*\tcut\t{art.strong_duality}")
    return "\n".join(lines) + "\n"
