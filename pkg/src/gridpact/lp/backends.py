"""Solver backends for ``ModelIR``.

Two backends are provided:

* ``scip``  -- PySCIPOpt, native SOS1 constraints (default).
* ``highs`` -- HiGHS through ``scipy.optimize.milp``; SOS1 groups are emulated
  with indicator binaries and member bounds (or ``ModelIR.sos_big_m``).

Both build a fresh solver object per call, so distinct models may be solved
concurrently.
"""
from __future__ import annotations

import logging
import math
import os
import time
from dataclasses import dataclass
from typing import Callable, Dict, Optional

import numpy as np
from scipy import sparse

from .ir import INF, ModelError, ModelIR, RawSolution, Sense, Status, VarKind

log = logging.getLogger(__name__)

DEFAULT_BACKEND = "scip"
ENV_BACKEND = "GRIDPACT_SOLVER"


class BackendUnavailable(RuntimeError):
    pass


@dataclass(frozen=True)
class SolverOptions:
    backend: Optional[str] = None
    rel_gap: float = 1e-3
    time_limit_s: float = 600.0
    seed: int = 0
    threads: int = 1
    verbose: bool = False  # solver log on stdout

    def resolved_backend(self) -> str:
        return self.backend or os.environ.get(ENV_BACKEND) or DEFAULT_BACKEND


@dataclass
class StandardForm:
    """Row-wise arrays: ``row_lo <= A x <= row_hi``, ``lo <= x <= hi``."""

    c: np.ndarray
    c0: float
    A: sparse.csr_matrix
    row_lo: np.ndarray
    row_hi: np.ndarray
    lo: np.ndarray
    hi: np.ndarray
    integrality: np.ndarray


def compile_model(model: ModelIR) -> StandardForm:
    n = model.n_vars
    sign = -1.0 if model.maximize else 1.0
    c = np.zeros(n)
    for v, k in model.objective.terms.items():
        c[v.index] += sign * k
    rows, cols, data = [], [], []
    m = len(model.constraints)
    row_lo = np.full(m, -np.inf)
    row_hi = np.full(m, np.inf)
    for i, con in enumerate(model.constraints):
        for v, k in con.expr.terms.items():
            rows.append(i)
            cols.append(v.index)
            data.append(k)
        if con.sense is not Sense.GE:
            row_hi[i] = con.rhs
        if con.sense is not Sense.LE:
            row_lo[i] = con.rhs
    A = sparse.csr_matrix((data, (rows, cols)), shape=(m, n))
    lo = np.array([v.lo for v in model.variables], dtype=float)
    hi = np.array([v.hi for v in model.variables], dtype=float)
    integ = np.array([1 if v.kind is VarKind.BINARY else 0 for v in model.variables])
    return StandardForm(c, sign * model.objective.const, A, row_lo, row_hi, lo, hi, integ)


def _names(model: ModelIR) -> Dict[str, int]:
    return {v.name: v.index for v in model.variables}


def _infeasible(model: ModelIR, t0: float, status=Status.INFEASIBLE) -> RawSolution:
    return RawSolution(np.full(model.n_vars, np.nan), math.nan, status, math.inf,
                       time.perf_counter() - t0, _names(model))


def solve_highs(model: ModelIR, opts: SolverOptions, start=None) -> RawSolution:
    from scipy.optimize import Bounds, LinearConstraint, milp

    t0 = time.perf_counter()
    sf = compile_model(model)
    n = model.n_vars
    A, row_lo, row_hi = sf.A, sf.row_lo, sf.row_hi
    lo, hi, integ, c = sf.lo, sf.hi, sf.integrality, sf.c

    if model.sos1:
        n_ind = sum(len(g) for g in model.sos1)
        er, ec, ed, e_lo, e_hi = [], [], [], [], []

        def add_row(entries, rlo, rhi):
            r = len(e_lo)
            for j, a in entries:
                er.append(r); ec.append(j); ed.append(a)
            e_lo.append(rlo); e_hi.append(rhi)

        k = n
        for grp in model.sos1:
            inds = []
            for v in grp:
                ub, lb = v.hi, v.lo
                if not math.isfinite(ub):
                    ub = model.sos_big_m
                if not math.isfinite(lb):
                    lb = -model.sos_big_m if model.sos_big_m is not None else None
                if ub is None or lb is None:
                    raise ModelError(f"SOS1 member {v.name!r} is unbounded and the model sets "
                                     "no sos_big_m; the highs backend cannot emulate it")
                add_row([(v.index, 1.0), (k, -ub)], -np.inf, 0.0)
                if lb < 0:
                    add_row([(v.index, 1.0), (k, -lb)], 0.0, np.inf)
                inds.append(k)
                k += 1
            add_row([(j, 1.0) for j in inds], -np.inf, 1.0)
        extra = sparse.csr_matrix((ed, (er, ec)), shape=(len(e_lo), n + n_ind))
        A = sparse.vstack([sparse.hstack([A, sparse.csr_matrix((A.shape[0], n_ind))]),
                           extra]).tocsr()
        row_lo = np.concatenate([row_lo, e_lo])
        row_hi = np.concatenate([row_hi, e_hi])
        lo = np.concatenate([lo, np.zeros(n_ind)])
        hi = np.concatenate([hi, np.ones(n_ind)])
        integ = np.concatenate([integ, np.ones(n_ind, dtype=int)])
        c = np.concatenate([c, np.zeros(n_ind)])

    constraints = [LinearConstraint(A, row_lo, row_hi)] if A.shape[0] else []
    options = {"time_limit": opts.time_limit_s, "disp": opts.verbose}
    if integ.any():
        options["mip_rel_gap"] = opts.rel_gap
    res = milp(c, integrality=integ, bounds=Bounds(lo, hi), constraints=constraints,
               options=options)
    wall = time.perf_counter() - t0
    sign = -1.0 if model.maximize else 1.0
    if res.status == 2:
        return _infeasible(model, t0)
    if res.status == 3:
        return _infeasible(model, t0, Status.UNBOUNDED)
    if res.x is None:
        if res.status == 4 and "unbounded" in str(res.message).lower():
            return _infeasible(model, t0, Status.UNBOUNDED)
        if res.status == 4 and "infeasible" in str(res.message).lower():
            return _infeasible(model, t0)
        return _infeasible(model, t0, Status.LIMIT)
    x = np.asarray(res.x[:n], dtype=float)
    gap = float(getattr(res, "mip_gap", 0.0) or 0.0) if integ.any() else 0.0
    if res.status == 0:
        status = Status.OPTIMAL if gap <= 1e-9 else Status.GAP_OPTIMAL
    else:
        status = Status.LIMIT
    obj = sign * (float(res.fun) + sf.c0)
    bound = getattr(res, "mip_dual_bound", None)
    bound = sign * (float(bound) + sf.c0) if bound is not None else obj
    return RawSolution(x, obj, status, gap, wall, _names(model), bound)


def solve_scip(model: ModelIR, opts: SolverOptions, start=None) -> RawSolution:
    try:
        import pyscipopt
    except ImportError as exc:  # pragma: no cover - depends on environment
        raise BackendUnavailable("pyscipopt is not installed") from exc

    t0 = time.perf_counter()
    m = pyscipopt.Model(model.name)
    m.hideOutput(not opts.verbose)
    m.setParam("limits/gap", opts.rel_gap)
    m.setParam("limits/time", opts.time_limit_s)
    m.setParam("randomization/randomseedshift", int(opts.seed))
    m.setParam("lp/threads", int(opts.threads))
    xs = []
    for v in model.variables:
        lb = None if v.lo == -INF else v.lo
        ub = None if v.hi == INF else v.hi
        vt = "B" if v.kind is VarKind.BINARY else "C"
        xs.append(m.addVar(name=f"x{v.index}", vtype=vt, lb=lb, ub=ub))
    for con in model.constraints:
        if not con.expr.terms:
            # constant rows are checked here rather than handed to SCIP
            if con.slack(np.zeros(0)) < -1e-9 or (con.sense is Sense.EQ and con.rhs != 0):
                return _infeasible(model, t0)
            continue
        expr = pyscipopt.quicksum(k * xs[v.index] for v, k in con.expr.terms.items())
        if con.sense is Sense.LE:
            m.addCons(expr <= con.rhs)
        elif con.sense is Sense.GE:
            m.addCons(expr >= con.rhs)
        else:
            m.addCons(expr == con.rhs)
    for grp in model.sos1:
        m.addConsSOS1([xs[v.index] for v in grp])
    obj = pyscipopt.quicksum(k * xs[v.index] for v, k in model.objective.terms.items())
    m.setObjective(obj + model.objective.const if model.objective.terms else
                   pyscipopt.Expr() + model.objective.const,
                   "maximize" if model.maximize else "minimize")
    if start is not None:
        sol0 = m.createSol()
        for xv, val in zip(xs, start):
            m.setSolVal(sol0, xv, float(val))
        if not m.addSol(sol0, free=True):
            log.debug("starting point rejected by scip")
    m.optimize()
    status = m.getStatus()
    wall = time.perf_counter() - t0
    if status == "infeasible":
        return _infeasible(model, t0)
    if status in ("unbounded", "inforunbd"):
        return _infeasible(model, t0, Status.UNBOUNDED)
    if m.getNSols() == 0:
        return _infeasible(model, t0, Status.LIMIT)
    sol = m.getBestSol()
    x = np.array([m.getSolVal(sol, xv) for xv in xs], dtype=float)
    gap = float(m.getGap())
    if not math.isfinite(gap):
        gap = math.inf
    if status == "optimal":
        st = Status.OPTIMAL if gap <= 1e-9 else Status.GAP_OPTIMAL
    elif status == "gaplimit":
        st = Status.GAP_OPTIMAL
    else:
        st = Status.LIMIT
    if model.is_lp() and st is Status.GAP_OPTIMAL:
        st = Status.OPTIMAL
    return RawSolution(x, float(m.getSolObjVal(sol)), st, gap, wall, _names(model),
                       float(m.getDualbound()))


BACKENDS: Dict[str, Callable[..., RawSolution]] = {
    "scip": solve_scip,
    "highs": solve_highs,
}


def available_backends():
    out = ["highs"]
    try:
        import pyscipopt  # noqa: F401
        out.insert(0, "scip")
    except ImportError:  # pragma: no cover
        pass
    return out


def solve(model: ModelIR, backend: Optional[str] = None, rel_gap: float = 1e-3,
          time_limit: float = 600.0, seed: int = 0,
          options: Optional[SolverOptions] = None, start=None) -> RawSolution:
    """Solve ``model``; returns a RawSolution whose status says what happened.

    ``start`` is an optional full value vector offered as an initial
    incumbent (used by scip, ignored by highs).
    """
    opts = options or SolverOptions(backend, rel_gap, time_limit, seed)
    name = opts.resolved_backend()
    if name not in BACKENDS:
        raise BackendUnavailable(f"unknown backend {name!r}; choose from {sorted(BACKENDS)}")
    log.debug("solving %s (%d vars, %d rows, %d sos1) with %s", model.name, model.n_vars,
              len(model.constraints), len(model.sos1), name)
    return BACKENDS[name](model, opts, start)


def polish(model: ModelIR, sol: RawSolution, tol: float = 1e-6) -> RawSolution:
    """Fix the combinatorial part of ``sol`` and re-solve the remaining LP.

    Binaries are rounded and fixed; in every SOS1 group, members that are
    numerically zero are fixed at exactly zero. The LP re-solve removes the
    tolerance-level noise a branch-and-bound incumbent carries. Returns ``sol``
    unchanged if the fixed LP is not solved to optimality or is worse.
    """
    if not sol.has_incumbent or (not model.sos1 and model.is_lp()):
        return sol
    fixed = model.copy(name=model.name + ":polish")
    for v in model.variables:
        if v.kind is VarKind.BINARY:
            r = float(round(sol[v]))
            fixed.variables[v.index] = type(v)(v.index, v.name, VarKind.CONTINUOUS, r, r)
    for grp in model.sos1:
        vals = [abs(sol[v]) for v in grp]
        keep = int(np.argmax(vals))
        for j, v in enumerate(grp):
            if j != keep or vals[j] <= tol:
                if v.lo <= 0.0 <= v.hi:
                    fixed.set_bounds(fixed.variables[v.index], 0.0, 0.0)
    fixed.sos1 = []
    fixed._by_name = {v.name: v for v in fixed.variables}
    lp = solve_highs(fixed, SolverOptions("highs", 0.0, 60.0))
    if not lp.status.ok:
        return sol
    worse = (lp.objective > sol.objective) if not model.maximize else (lp.objective < sol.objective)
    if worse and abs(lp.objective - sol.objective) > 1e-6 * (1 + abs(sol.objective)):
        return sol
    return RawSolution(lp.values, lp.objective, sol.status, sol.gap,
                       sol.wall_time + lp.wall_time, sol.names, sol.bound)
