"""Infeasibility diagnosis by elastic relaxation."""
from __future__ import annotations

from typing import Iterable, List, Optional

from .backends import SolverOptions, solve
from .ir import LinExpr, ModelIR, Sense


def elastic_diagnosis(model: ModelIR, tol: float = 1e-6,
                      options: Optional[SolverOptions] = None,
                      elastic: Optional[Iterable[str]] = None) -> List[str]:
    """Tags of rows that must be violated, found by minimizing total violation.

    Every row gets non-negative elastic slacks; binaries and SOS1 groups are
    kept. The returned rows form one (not necessarily minimal) set whose
    relaxation restores feasibility. ``elastic`` restricts relaxation to the
    given tags; if that leaves the model infeasible, every row is relaxed.
    """
    if elastic is not None:
        out = _elastic(model, tol, options, set(elastic))
        if out is not None:
            return out
    return _elastic(model, tol, options, None) or []


def _elastic(model, tol, options, allowed):
    el = model.copy(name=model.name + ":elastic")
    el._tags = {}
    rows = el.constraints
    el.constraints = []
    penalty = LinExpr()
    for k, con in enumerate(rows):
        expr = con.expr.copy()
        soft = allowed is None or con.tag in allowed
        if soft and con.sense is not Sense.GE:
            up = el.add_variable(f"elastic_dn[{k}]")
            expr = expr - up
            penalty = penalty + up
        if soft and con.sense is not Sense.LE:
            dn = el.add_variable(f"elastic_up[{k}]")
            expr = expr + dn
            penalty = penalty + dn
        el.add_constraint(expr, con.sense, con.rhs, con.tag)
    el.set_objective(penalty)
    sol = solve(el, options=options or SolverOptions(rel_gap=1e-6))
    if not sol.status.ok:
        return None
    out = []
    for k, con in enumerate(rows):
        viol = sol.get(f"elastic_dn[{k}]", 0.0) + sol.get(f"elastic_up[{k}]", 0.0)
        if viol > tol:
            out.append(con.tag)
    return out
