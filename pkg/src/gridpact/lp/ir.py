"""Solver-agnostic MILP intermediate representation."""
from __future__ import annotations

import copy
import enum
import math
from dataclasses import dataclass, field
from typing import Dict, Iterable, List, Optional, Tuple, Union

import numpy as np

FEAS_TOL = 1e-6
INF = math.inf


class ModelError(ValueError):
    pass


class VarKind(enum.Enum):
    CONTINUOUS = "continuous"
    BINARY = "binary"


class Sense(enum.Enum):
    LE = "<="
    EQ = "=="
    GE = ">="

    @classmethod
    def parse(cls, s: Union[str, "Sense"]) -> "Sense":
        if isinstance(s, Sense):
            return s
        return {"<=": cls.LE, "==": cls.EQ, "=": cls.EQ, ">=": cls.GE}[s]


class Status(enum.Enum):
    OPTIMAL = "optimal"
    GAP_OPTIMAL = "gap-optimal"
    INFEASIBLE = "infeasible"
    UNBOUNDED = "unbounded"
    LIMIT = "limit"

    @property
    def ok(self) -> bool:
        return self in (Status.OPTIMAL, Status.GAP_OPTIMAL)


@dataclass(frozen=True, eq=False)
class Var:
    """Handle to a model variable. Arithmetic yields ``LinExpr``."""

    index: int
    name: str
    kind: VarKind
    lo: float
    hi: float

    def __hash__(self):
        return hash((self.index, self.name))

    def __eq__(self, other):
        return isinstance(other, Var) and other.index == self.index and other.name == self.name

    def __repr__(self):
        return f"Var({self.name})"

    def _e(self) -> "LinExpr":
        return LinExpr({self: 1.0})

    def __add__(self, o): return self._e() + o
    def __radd__(self, o): return self._e() + o
    def __sub__(self, o): return self._e() - o
    def __rsub__(self, o): return (-self._e()) + o
    def __mul__(self, k): return self._e() * k
    def __rmul__(self, k): return self._e() * k
    def __neg__(self): return -self._e()


class LinExpr:
    """Sparse linear expression ``sum(coef * var) + const``."""

    __slots__ = ("terms", "const")

    def __init__(self, terms: Optional[Dict[Var, float]] = None, const: float = 0.0):
        self.terms: Dict[Var, float] = {}
        self.const = float(const)
        for v, c in (terms or {}).items():
            self._add_term(v, c)

    @staticmethod
    def of(x: "ExprLike") -> "LinExpr":
        if isinstance(x, LinExpr):
            return x
        if isinstance(x, Var):
            return LinExpr({x: 1.0})
        return LinExpr(const=float(x))

    def _add_term(self, v: Var, c: float):
        c = float(c)
        if not math.isfinite(c):
            raise ModelError(f"non-finite coefficient {c} on {v.name}")
        new = self.terms.get(v, 0.0) + c
        if new == 0.0:
            self.terms.pop(v, None)
        else:
            self.terms[v] = new

    def copy(self) -> "LinExpr":
        out = LinExpr(const=self.const)
        out.terms = dict(self.terms)
        return out

    def __add__(self, o):
        out = self.copy()
        o = LinExpr.of(o)
        for v, c in o.terms.items():
            out._add_term(v, c)
        out.const += o.const
        return out

    __radd__ = __add__

    def __neg__(self):
        return self * -1.0

    def __sub__(self, o):
        return self + (-LinExpr.of(o))

    def __rsub__(self, o):
        return LinExpr.of(o) - self

    def __mul__(self, k):
        k = float(k)
        out = LinExpr(const=self.const * k)
        if k != 0.0:
            out.terms = {v: c * k for v, c in self.terms.items()}
        return out

    __rmul__ = __mul__

    def vars(self) -> List[Var]:
        return list(self.terms)

    def __repr__(self):
        parts = [f"{c:+g} {v.name}" for v, c in self.terms.items()]
        if self.const or not parts:
            parts.append(f"{self.const:+g}")
        return " ".join(parts)


ExprLike = Union[LinExpr, Var, float, int]


def quicksum(items: Iterable[ExprLike]) -> LinExpr:
    out = LinExpr()
    for it in items:
        it = LinExpr.of(it)
        for v, c in it.terms.items():
            out._add_term(v, c)
        out.const += it.const
    return out


@dataclass
class Constraint:
    expr: LinExpr
    sense: Sense
    rhs: float
    tag: str

    def slack(self, values) -> float:
        """Non-negative when satisfied (for equalities: signed residual)."""
        lhs = evaluate(self.expr, values)
        if self.sense is Sense.LE:
            return self.rhs - lhs
        if self.sense is Sense.GE:
            return lhs - self.rhs
        return self.rhs - lhs


@dataclass
class ModelIR:
    name: str = "model"
    variables: List[Var] = field(default_factory=list)
    constraints: List[Constraint] = field(default_factory=list)
    sos1: List[Tuple[Var, ...]] = field(default_factory=list)
    objective: LinExpr = field(default_factory=LinExpr)
    maximize: bool = False
    # bound used by backends that emulate SOS1 with indicator binaries when a
    # group member has no finite bound of its own
    sos_big_m: Optional[float] = None
    _by_name: Dict[str, Var] = field(default_factory=dict, repr=False)
    _tags: Dict[str, int] = field(default_factory=dict, repr=False)

    def add_variable(self, name: str, kind: Union[VarKind, str] = VarKind.CONTINUOUS,
                     lo: float = 0.0, hi: float = INF) -> Var:
        kind = VarKind(kind) if isinstance(kind, str) else kind
        if name in self._by_name:
            raise ModelError(f"duplicate variable name {name!r}")
        if kind is VarKind.BINARY:
            lo, hi = max(0.0, lo), min(1.0, hi)
        if lo > hi:
            raise ModelError(f"empty bounds [{lo}, {hi}] for {name!r}")
        v = Var(len(self.variables), name, kind, float(lo), float(hi))
        self.variables.append(v)
        self._by_name[name] = v
        return v

    def var(self, name: str) -> Var:
        try:
            return self._by_name[name]
        except KeyError:
            raise ModelError(f"unknown variable {name!r}") from None

    def has_var(self, name: str) -> bool:
        return name in self._by_name

    def _check_registered(self, vs: Iterable[Var]):
        for v in vs:
            if v.index >= len(self.variables) or self.variables[v.index] != v:
                raise ModelError(f"variable {v.name!r} is not registered in model {self.name!r}")

    def add_constraint(self, expr: ExprLike, sense: Union[str, Sense], rhs: ExprLike = 0.0,
                       tag: Optional[str] = None) -> int:
        """Append ``expr sense rhs``; constants on either side are folded into rhs."""
        expr = LinExpr.of(expr) - LinExpr.of(rhs)
        self._check_registered(expr.terms)
        tag = tag if tag is not None else f"c{len(self.constraints)}"
        if tag in self._tags:
            raise ModelError(f"duplicate constraint tag {tag!r}")
        body = LinExpr(expr.terms)
        self.constraints.append(Constraint(body, Sense.parse(sense), -expr.const, tag))
        self._tags[tag] = len(self.constraints) - 1
        return len(self.constraints) - 1

    def constraint(self, tag: str) -> Constraint:
        return self.constraints[self._tags[tag]]

    def add_sos1(self, members: Iterable[Var]) -> int:
        members = tuple(members)
        self._check_registered(members)
        self.sos1.append(members)
        return len(self.sos1) - 1

    def set_objective(self, expr: ExprLike, maximize: bool = False):
        expr = LinExpr.of(expr)
        self._check_registered(expr.terms)
        self.objective = expr
        self.maximize = maximize

    def set_bounds(self, v: Var, lo: float, hi: float) -> Var:
        """Replace the bounds of ``v`` (returns the new handle)."""
        if lo > hi:
            raise ModelError(f"empty bounds [{lo}, {hi}] for {v.name!r}")
        nv = Var(v.index, v.name, v.kind, float(lo), float(hi))
        self.variables[v.index] = nv
        self._by_name[v.name] = nv
        return nv

    def copy(self, name: Optional[str] = None) -> "ModelIR":
        out = copy.copy(self)
        out.variables = list(self.variables)
        out.constraints = [Constraint(c.expr.copy(), c.sense, c.rhs, c.tag) for c in self.constraints]
        out.sos1 = list(self.sos1)
        out.objective = self.objective.copy()
        out._by_name = dict(self._by_name)
        out._tags = dict(self._tags)
        if name is not None:
            out.name = name
        return out

    @property
    def n_vars(self) -> int:
        return len(self.variables)

    def is_lp(self) -> bool:
        return not self.sos1 and all(v.kind is VarKind.CONTINUOUS for v in self.variables)

    def to_lp_text(self) -> str:
        """CPLEX-LP style dump for debugging; constraint tags become row names."""
        def fmt(expr: LinExpr) -> str:
            if not expr.terms:
                return "0 " + _lp_name(self.variables[0].name) if self.variables else "0"
            return " ".join(f"{c:+.12g} {_lp_name(v.name)}" for v, c in expr.terms.items())

        lines = [f"\\ model {self.name}", "Maximize" if self.maximize else "Minimize",
                 f" obj: {fmt(self.objective)}"]
        if self.objective.const:
            lines[-1] += f" {self.objective.const:+.12g}"
        lines.append("Subject To")
        for c in self.constraints:
            op = {Sense.LE: "<=", Sense.GE: ">=", Sense.EQ: "="}[c.sense]
            lines.append(f" {_lp_name(c.tag)}: {fmt(c.expr)} {op} {c.rhs:.12g}")
        lines.append("Bounds")
        for v in self.variables:
            lo = "-inf" if v.lo == -INF else f"{v.lo:.12g}"
            hi = "+inf" if v.hi == INF else f"{v.hi:.12g}"
            lines.append(f" {lo} <= {_lp_name(v.name)} <= {hi}")
        bins = [v for v in self.variables if v.kind is VarKind.BINARY]
        if bins:
            lines.append("Binaries")
            lines.append(" " + " ".join(_lp_name(v.name) for v in bins))
        if self.sos1:
            lines.append("SOS")
            for k, grp in enumerate(self.sos1):
                members = " ".join(f"{_lp_name(v.name)}:{i + 1}" for i, v in enumerate(grp))
                lines.append(f" sos{k}: S1:: {members}")
        lines.append("End")
        return "\n".join(lines) + "\n"


def _lp_name(s: str) -> str:
    return s.replace("[", "(").replace("]", ")").replace(" ", "").replace(",", "_").replace("=", "")


@dataclass
class RawSolution:
    values: np.ndarray
    objective: float
    status: Status
    gap: float
    wall_time: float
    names: Dict[str, int] = field(default_factory=dict, repr=False)
    bound: float = math.nan

    @property
    def has_incumbent(self) -> bool:
        """A feasible point exists (always after OPTIMAL, sometimes after LIMIT)."""
        return (self.status in (Status.OPTIMAL, Status.GAP_OPTIMAL, Status.LIMIT)
                and len(self.values) > 0 and bool(np.all(np.isfinite(self.values))))

    def __getitem__(self, v: Union[Var, str]) -> float:
        if isinstance(v, Var):
            return float(self.values[v.index])
        return float(self.values[self.names[v]])

    def get(self, name: str, default=None):
        return float(self.values[self.names[name]]) if name in self.names else default


def evaluate(expr: ExprLike, sol) -> float:
    """Evaluate ``expr`` at a RawSolution, an index array, or a {Var: value} map."""
    expr = LinExpr.of(expr)
    total = expr.const
    for v, c in expr.terms.items():
        if isinstance(sol, RawSolution):
            vals = sol.values
        else:
            vals = sol
        if isinstance(vals, dict):
            if v not in vals:
                raise ModelError(f"solution lacks a value for {v.name!r}")
            x = vals[v]
        else:
            if v.index >= len(vals):
                raise ModelError(f"solution lacks a value for {v.name!r}")
            x = vals[v.index]
        total += c * float(x)
    return total


def max_violation(model: ModelIR, values) -> Tuple[float, str]:
    """Largest absolute constraint/bound violation and the offending tag."""
    worst, where = 0.0, ""
    for c in model.constraints:
        s = c.slack(values)
        viol = abs(s) if c.sense is Sense.EQ else max(0.0, -s)
        if viol > worst:
            worst, where = viol, c.tag
    for v in model.variables:
        x = float(values[v.index])
        viol = max(v.lo - x, x - v.hi, 0.0)
        if viol > worst:
            worst, where = viol, f"bound:{v.name}"
    return worst, where
