"""The four contracting cases as bilevel programs / MILPs over a ScenarioData.

Variable naming (MW unless noted):

==================  ====================================================
``p_grid``          grid connection capacity (= electrolyzer size)
``p_el[c]``         CTA capacity requested by the electrolyzer owner
``p_no[c]``         CTA capacity accommodated by the network operator
``p_e[t]``          electrolyzer consumption
``f[t]``            hydrogen output, kg/h
``r2[t], r3[t]``    NFA85 / NFA curtailment
``s[t], s_plus[t]`` CRC / CRC+ curtailment
``b[t]``            NFA85 activation indicator
``b_s``             NFA85 switch (electrolyzer HPR only)
``s_el[t]`` ...     owner-side mirrors of the curtailments (Game II)
==================  ====================================================
"""
from __future__ import annotations

import enum
import logging
import math
import time
from dataclasses import dataclass, field
from typing import Dict, List, Optional

import numpy as np

from .bilevel import (BilevelProblem, LowerLevelLP, Reformulation, add_strong_duality_cut,
                      build_hpr, complete_dropped, derive_kkt, feasible_completion,
                      kkt_certificate,
                      linearize_complementarity, relax_binaries)
from .core import CONTRACTS, BudgetMode, ContractKind, ScenarioData, validate_scenario
from .lp import (Constraint, LinExpr, ModelIR, RawSolution, Sense, SolverOptions, Status, Var,
                 VarKind, evaluate, max_violation, polish, quicksum, solve)
from .lp.diagnose import elastic_diagnosis

log = logging.getLogger(__name__)

C_KEYS = {ContractKind.FA: "fa", ContractKind.NFA85: "nfa85", ContractKind.NFA: "nfa"}


class Case(enum.Enum):
    GAME1 = "game1"
    GAME2 = "game2"
    ELY_HPR = "ely-hpr"
    NO_HPR = "no-hpr"

    @classmethod
    def parse(cls, s) -> "Case":
        if isinstance(s, Case):
            return s
        key = str(s).strip().lower().replace("_", "-")
        for c in cls:
            if c.value == key or c.name.lower().replace("_", "-") == key:
                return c
        raise ValueError(f"unknown case {s!r}; choose from {[c.value for c in cls]}")


class CaseInfeasible(RuntimeError):
    def __init__(self, case: Case, tags: List[str]):
        self.case, self.tags = case, tags
        super().__init__(f"{case.value} is infeasible; violated rows: {', '.join(tags) or '?'}")


@dataclass(frozen=True)
class GameOptions:
    solver: SolverOptions = field(default_factory=SolverOptions)
    linearization: str = "sos1"
    # M for big-M complementarity and for SOS1 emulation on the highs backend
    complementarity_m: Optional[float] = None
    # None: on for Game I, off for Game II (there it slows the search and the
    # KKT rows already imply it)
    strong_duality: Optional[bool] = None
    dual_bound: Optional[float] = None
    # electrolyzer HPR, opt-in: NFA85 capacity earns no CRC in hours where NFA85 is
    # activated (hard to solve beyond a few dozen hours)
    nfa85_priority: bool = False
    polish: bool = True
    # follower blocks that cannot affect the leader keep primal rows only
    separate_blocks: bool = True
    # seed scip with a bilevel-feasible point built around the HPR leader decision
    warm_start: bool = True


class _Vars:
    """Name-indexed access to a model's game variables."""

    def __init__(self, model: ModelIR, hours: int):
        self.m, self.n = model, hours

    def __getattr__(self, name):
        return self.m.var(name)

    def c(self, base: str, k: ContractKind) -> Var:
        return self.m.var(f"{base}[{C_KEYS[k]}]")

    def t(self, base: str, t: int) -> Var:
        return self.m.var(f"{base}[{t}]")

    def has(self, name: str) -> bool:
        return self.m.has_var(name)


def _mk(expr, sense, rhs, tag) -> Constraint:
    expr = LinExpr.of(expr) - LinExpr.of(rhs)
    return Constraint(LinExpr(expr.terms), Sense.parse(sense), -expr.const, tag)


def _add_operator_vars(m: ModelIR, sc: ScenarioData, binary_b=True, bound=True):
    ub = sc.big_m if bound else math.inf
    m.add_variable("p_grid", hi=ub)
    for c in CONTRACTS:
        m.add_variable(f"p_no[{C_KEYS[c]}]", hi=ub)
    for base in ("r2", "r3", "s", "s_plus"):
        for t in sc.T:
            m.add_variable(f"{base}[{t}]", hi=ub)
    for t in sc.T:
        m.add_variable(f"b[{t}]", VarKind.BINARY if binary_b else VarKind.CONTINUOUS, 0.0, 1.0)


def _add_owner_vars(m: ModelIR, sc: ScenarioData, bound_contracts=True, mirrors=False):
    ub = sc.big_m if bound_contracts else math.inf
    for c in CONTRACTS:
        m.add_variable(f"p_el[{C_KEYS[c]}]", hi=ub)
    for t in sc.T:
        m.add_variable(f"p_e[{t}]")
    for t in sc.T:
        m.add_variable(f"f[{t}]")
    if mirrors:
        for base in ("s_el", "s_el_plus", "r_el2", "r_el3"):
            for t in sc.T:
                m.add_variable(f"{base}[{t}]")


def _curtail(V: _Vars, t: int) -> LinExpr:
    return V.t("s", t) + V.t("s_plus", t) + V.t("r2", t) + V.t("r3", t)


def operator_rows(sc: ScenarioData, V: _Vars) -> List[Constraint]:
    """Network-operator feasibility: contracts, transport limits, CTA and CRC budgets."""
    rows = []
    fa, n85, nfa = ContractKind.FA, ContractKind.NFA85, ContractKind.NFA
    for c in CONTRACTS:
        rows.append(_mk(V.c("p_no", c) - V.c("p_el", c), "<=", 0, f"contract_accept[{C_KEYS[c]}]"))
    rows.append(_mk(quicksum(V.c("p_no", c) for c in CONTRACTS) - V.p_grid, "==", 0, "grid_total"))
    for t in sc.T:
        rows.append(_mk(V.p_grid - _curtail(V, t), "<=", sc.residual(t), f"residual[{t}]"))
    for t in sc.T:
        rows.append(_mk(V.t("r2", t) - V.c("p_no", n85), "<=", 0, f"nfa85_cap[{t}]"))
    for t in sc.T:
        cap = sc.demand(t) / sc.tech.eta_sys
        rows.append(_mk(V.t("r2", t) - cap * V.t("b", t), "<=", 0, f"nfa85_demand[{t}]"))
    rows.append(_mk(quicksum(V.t("b", t) for t in sc.T), "<=", sc.nfa85_hours, "nfa85_time_budget"))
    for t in sc.T:
        rows.append(_mk(V.t("r3", t) - V.c("p_no", nfa), "<=", 0, f"nfa_cap[{t}]"))
    rows.append(_mk(quicksum(V.t("r3", t) for t in sc.T) - sc.budgets.nfa_budget * V.c("p_no", nfa),
                    "<=", 0, "nfa_energy_budget"))
    pinned = sc.budgets.theta * sc.budgets.cm_budget
    for t in sc.T:
        if sc.budgets.mode is BudgetMode.PIN_CRC_PLUS:
            lhs = sc.prices.crc_plus * V.t("s_plus", t)
        else:
            lhs = sc.prices.crc_at(t) * V.t("s", t)
        rows.append(_mk(lhs, "==", pinned, f"cm_budget[{t}]"))
    for t in sc.T:
        rows.append(_mk(V.t("s", t) + V.t("s_plus", t) + V.t("r2", t) - V.c("p_no", fa)
                        - V.c("p_no", n85), "<=", 0, f"no_double_curtail[{t}]"))
    return rows


def owner_rows(sc: ScenarioData, V: _Vars, follower: bool) -> List[Constraint]:
    """Electrolyzer feasibility. ``follower`` selects the Game II variant, where
    available power is set by the operator's accommodated capacities and the
    owner's own curtailment mirrors are bounded by the operator's decisions."""
    rows = [_mk(quicksum(V.c("p_el", c) for c in CONTRACTS) - V.p_grid, "<=", 0,
                "owner_total_contract")]
    fa, n85 = ContractKind.FA, ContractKind.NFA85
    if not follower:
        for t in sc.T:
            rows.append(_mk(V.t("p_e", t) + _curtail(V, t)
                            - quicksum(V.c("p_el", c) for c in CONTRACTS), "<=", 0,
                            f"owner_power[{t}]"))
    for t in sc.T:
        rows.append(_mk(V.t("p_e", t) - sc.tech.alpha_min * V.p_grid, ">=", 0, f"min_load[{t}]"))
    for t in sc.T:
        rows.append(_mk(V.t("f", t) - sc.tech.eta_sys * V.t("p_e", t), "<=", 0, f"h2_yield[{t}]"))
    for t in sc.T:
        rows.append(_mk(V.t("f", t), "<=", sc.demand(t), f"h2_demand[{t}]"))
    if follower:
        # the owner contracts what the operator accommodates; together with the
        # capacity identities this pins p_el = p_no, as in the joint model
        for c in CONTRACTS:
            rows.append(_mk(V.c("p_el", c) - V.c("p_no", c), ">=", 0, f"el_accept[{C_KEYS[c]}]"))
        for t in sc.T:
            rows.append(_mk(V.t("s_el", t) - V.t("s", t), "<=", 0, f"el_crc[{t}]"))
        for t in sc.T:
            rows.append(_mk(V.t("s_el_plus", t) - V.t("s_plus", t), "<=", 0, f"el_crc_plus[{t}]"))
        for t in sc.T:
            rows.append(_mk(V.t("s_el", t) + V.t("s_el_plus", t) - V.c("p_el", fa)
                            - V.c("p_el", n85), "<=", 0, f"el_crc_eligible[{t}]"))
        for t in sc.T:
            rows.append(_mk(V.t("p_e", t) + _curtail(V, t)
                            - quicksum(V.c("p_no", c) for c in CONTRACTS), "<=", 0,
                            f"el_power[{t}]"))
        for t in sc.T:
            rows.append(_mk(quicksum(V.c("p_el", c) for c in CONTRACTS) - V.t("s_el", t)
                            - V.t("s_el_plus", t) - V.t("r_el2", t) - V.t("r_el3", t), "<=",
                            sc.residual(t), f"el_residual[{t}]"))
        for t in sc.T:
            rows.append(_mk(V.t("r_el3", t) - V.t("r3", t), "<=", 0, f"el_nfa[{t}]"))
        for t in sc.T:
            rows.append(_mk(V.t("r_el2", t) - V.t("r2", t), "<=", 0, f"el_nfa85[{t}]"))
    return rows


def owner_cost(sc: ScenarioData, V: _Vars, crc: str = "s", crc_plus: str = "s_plus") -> LinExpr:
    """Capital + tariffs + energy - hydrogen sales - CRC income, over the horizon."""
    e = sc.c_el * V.p_grid + quicksum(sc.tariff(c) * V.c("p_el", c) for c in CONTRACTS)
    for t in sc.T:
        e = e + sc.prices.electricity[t] * V.t("p_e", t) - sc.prices.h2 * V.t("f", t)
        e = e - sc.prices.crc_at(t) * V.t(crc, t) - sc.prices.crc_plus * V.t(crc_plus, t)
    return e


def operator_cost(sc: ScenarioData, V: _Vars) -> LinExpr:
    e = -quicksum(sc.tariff(c) * V.c("p_no", c) for c in CONTRACTS)
    pen = sc.budgets.penalty
    for t in sc.T:
        e = e + sc.prices.crc_at(t) * V.t("s", t) + sc.prices.crc_plus * V.t("s_plus", t)
        e = e + pen * V.t("r2", t) + pen * V.t("r3", t)
    return e


def _add_rows(model: ModelIR, rows: List[Constraint]):
    for r in rows:
        model.add_constraint(r.expr, r.sense, r.rhs, r.tag)


def build_game1(sc: ScenarioData) -> BilevelProblem:
    """Electrolyzer owner leads; the network operator's LP/MILP follows."""
    sc = validate_scenario(sc)
    m = ModelIR(name="game1")
    _add_owner_vars(m, sc)
    _add_operator_vars(m, sc, binary_b=True, bound=False)
    V = _Vars(m, sc.hours)
    m.set_objective(owner_cost(sc, V))
    _add_rows(m, owner_rows(sc, V, follower=False))
    lower_names = ["p_grid"] + [f"p_no[{C_KEYS[c]}]" for c in CONTRACTS]
    lower_names += [f"{b}[{t}]" for b in ("r2", "r3", "s", "s_plus", "b") for t in sc.T]
    lower = LowerLevelLP(
        variables=[m.var(n) for n in lower_names],
        constraints=operator_rows(sc, V),
        objective=operator_cost(sc, V),
        couplings=[V.c("p_el", c) for c in CONTRACTS],
    )
    return BilevelProblem(m, lower, name="game1")


def build_game2(sc: ScenarioData) -> BilevelProblem:
    """Network operator leads; the electrolyzer owner's LP follows."""
    sc = validate_scenario(sc)
    m = ModelIR(name="game2")
    _add_operator_vars(m, sc, binary_b=True, bound=True)
    _add_owner_vars(m, sc, bound_contracts=False, mirrors=True)
    V = _Vars(m, sc.hours)
    m.set_objective(operator_cost(sc, V))
    _add_rows(m, operator_rows(sc, V))
    lower_names = [f"p_el[{C_KEYS[c]}]" for c in CONTRACTS]
    lower_names += [f"{b}[{t}]" for b in ("p_e", "f", "s_el", "s_el_plus", "r_el2", "r_el3")
                    for t in sc.T]
    couplings = ["p_grid"] + [f"p_no[{C_KEYS[c]}]" for c in CONTRACTS]
    couplings += [f"{b}[{t}]" for b in ("r2", "r3", "s", "s_plus") for t in sc.T]
    lower = LowerLevelLP(
        variables=[m.var(n) for n in lower_names],
        constraints=owner_rows(sc, V, follower=True),
        objective=owner_cost(sc, V, crc="s_el", crc_plus="s_el_plus"),
        couplings=[m.var(n) for n in couplings],
    )
    return BilevelProblem(m, lower, name="game2")


def build_ely_hpr(sc: ScenarioData, nfa85_priority: bool = False) -> ModelIR:
    """Owner's problem over the operator's feasible set, with the NFA85 switch rows."""
    sc = validate_scenario(sc)
    bp = build_game1(sc)
    big_m = sc.big_m
    # p_grid is a follower variable in Game I and unbounded there
    bp.model.set_bounds(bp.model.var("p_grid"), 0.0, 3 * big_m)
    n_act = math.floor(sc.nfa85_hours + 1e-9)

    def extra(m: ModelIR):
        V = _Vars(m, sc.hours)
        b_s = m.add_variable("b_s", VarKind.BINARY)
        m.add_constraint(quicksum(V.t("b", t) for t in sc.T) - n_act * b_s, ">=", 0,
                         "nfa85_activation")
        m.add_constraint(big_m * b_s - V.c("p_el", ContractKind.NFA85), ">=", 0, "nfa85_switch")
        if nfa85_priority:
            for t in sc.T:
                m.add_constraint(V.t("s", t) + V.t("s_plus", t) - V.c("p_no", ContractKind.FA)
                                 + big_m * V.t("b", t), "<=", big_m, f"nfa85_priority[{t}]")
            # aggregate of the rows above: at least n_act hours pay CRC on FA only.
            # Implied by the integer solutions, much tighter in the LP relaxation.
            n = len(sc.T)
            m.add_constraint(quicksum(V.t("s", t) + V.t("s_plus", t) for t in sc.T)
                             - n * V.c("p_no", ContractKind.FA)
                             - (n - n_act) * V.c("p_no", ContractKind.NFA85), "<=", 0,
                             "nfa85_priority_total")

    model = build_hpr(bp, extra)
    model.name = "ely-hpr"
    return model


def build_no_hpr(sc: ScenarioData) -> ModelIR:
    """Operator's problem over the electrolyzer's feasible set."""
    sc = validate_scenario(sc)
    model = build_hpr(build_game2(sc))
    model.name = "no-hpr"
    return model


@dataclass(frozen=True)
class SolutionBundle:
    case: Case
    status: Status
    gap: float
    runtime_s: float
    objective: float
    values: Dict[str, np.ndarray]
    ely_profit: float = math.nan
    no_profit: float = math.nan
    follower_objective: float = math.nan
    certificate: Optional[Dict[str, float]] = None
    violated: tuple = ()

    def __getitem__(self, key: str) -> np.ndarray:
        return self.values[key]

    @property
    def ok(self) -> bool:
        return self.status.ok

    @property
    def has_incumbent(self) -> bool:
        """Values are present; true for optimal solves and for limits with an incumbent."""
        return bool(self.values)

    @property
    def p_grid(self) -> float:
        return float(self.values["p_grid"][0])

    def p_el(self, c: ContractKind) -> float:
        return float(self.values["p_el"][int(c) - 1])

    def summary(self, sweep_param: str = "", sweep_value: float = math.nan) -> Dict[str, object]:
        def val(x):
            return float(x) + 0.0 if self.has_incumbent else math.nan  # no -0.0

        pel = self.values.get("p_el", np.full(3, np.nan))
        return {
            "case": self.case.value,
            "sweep_param": sweep_param,
            "sweep_value": float(sweep_value),
            "p_grid": val(self.values.get("p_grid", [np.nan])[0]),
            "p_el_fa": val(pel[0]),
            "p_el_nfa85": val(pel[1]),
            "p_el_nfa": val(pel[2]),
            "ely_profit": val(self.ely_profit),
            "no_profit": val(self.no_profit),
            "gap": float(self.gap),
            "runtime_s": float(self.runtime_s),
            "status": self.status.value,
        }


_SERIES = ("p_e", "f", "r2", "r3", "s", "s_plus", "b", "s_el", "s_el_plus", "r_el2", "r_el3")


def _collect(model: ModelIR, sol: RawSolution, hours: int) -> Dict[str, np.ndarray]:
    out = {"p_grid": np.array([sol["p_grid"]])}
    out["p_el"] = np.array([sol[f"p_el[{C_KEYS[c]}]"] for c in CONTRACTS])
    out["p_no"] = np.array([sol[f"p_no[{C_KEYS[c]}]"] for c in CONTRACTS])
    for base in _SERIES:
        if model.has_var(f"{base}[0]"):
            out[base] = np.array([sol[f"{base}[{t}]"] for t in range(hours)])
    if model.has_var("b_s"):
        out["b_s"] = np.array([sol["b_s"]])
    return out


def extract_profits(values: Dict[str, np.ndarray], sc: ScenarioData, case: Case):
    """(electrolyzer profit, operator profit) over the modelled horizon, EUR.

    The operator's profit excludes the curtailment penalty. Divide by
    ``sc.scale`` for annual figures.
    """
    crc = np.array([sc.prices.crc_at(t) for t in sc.T])
    price = np.asarray(sc.prices.electricity)
    s_eff = values["s_el"] if case is Case.GAME2 else values["s"]
    sp_eff = values["s_el_plus"] if case is Case.GAME2 else values["s_plus"]
    tariffs = np.array([sc.tariff(c) for c in CONTRACTS])
    ely = (sc.prices.h2 * values["f"].sum() + crc @ s_eff + sc.prices.crc_plus * sp_eff.sum()
           - sc.c_el * values["p_grid"][0] - tariffs @ values["p_el"] - price @ values["p_e"])
    no = tariffs @ values["p_no"] - crc @ values["s"] - sc.prices.crc_plus * values["s_plus"].sum()
    return float(ely), float(no)


def feasibility_residuals(values: Dict[str, np.ndarray], sc: ScenarioData,
                          case) -> Dict[str, float]:
    """Largest violation (>= 0) of each invariant family, recomputed from the values.

    Independent of the model rows, so it also checks what the solver returned.
    Units are MW, kg/h or counts of hours, as the family dictates.
    """
    case = Case.parse(case)
    sc = validate_scenario(sc)
    pos = lambda a: float(np.max(np.maximum(np.asarray(a, dtype=float), 0.0), initial=0.0))
    S = np.asarray(sc.network.residual_capacity)
    D = np.asarray(sc.network.h2_demand)
    p_grid = float(values["p_grid"][0])
    p_el, p_no = values["p_el"], values["p_no"]
    r2, r3, s, sp = values["r2"], values["r3"], values["s"], values["s_plus"]
    b = values["b"]
    curt = s + sp + r2 + r3
    res = {
        "total_contract": pos(p_el.sum() - p_grid),
        "min_load": pos(sc.tech.alpha_min * p_grid - values["p_e"]),
        "h2_yield": pos(values["f"] - sc.tech.eta_sys * values["p_e"]),
        "h2_demand": pos(values["f"] - D),
        "contract_accept": pos(p_no - p_el),
        "grid_total": abs(float(p_no.sum()) - p_grid),
        "residual": pos(p_grid - curt - S),
        "nfa85_cap": pos(r2 - p_no[1]),
        "nfa85_demand": pos(r2 - b * D / sc.tech.eta_sys),
        "nfa_cap": pos(r3 - p_no[2]),
        "nfa_energy_budget": pos(r3.sum() - sc.budgets.nfa_budget * p_no[2]),
        "no_double_curtail": pos(s + sp + r2 - p_no[0] - p_no[1]),
        "bounds": pos(np.concatenate([-p_el, -p_no, -r2, -r3, -s, -sp, -values["p_e"],
                                      -values["f"], [-p_grid]])),
    }
    if case is Case.GAME1:
        # b is relaxed to [0, 1] in the reformulated follower
        res["binary"] = pos(np.concatenate([-b, b - 1.0]))
    else:
        res["binary"] = float(np.max(np.minimum(np.abs(b), np.abs(b - 1.0)), initial=0.0))
    res["nfa85_time_budget"] = pos(b.sum() - sc.nfa85_hours)
    pinned = sc.budgets.theta * sc.budgets.cm_budget
    crc = np.array([sc.prices.crc_at(t) for t in sc.T])
    spend = sc.prices.crc_plus * sp if sc.budgets.mode is BudgetMode.PIN_CRC_PLUS else crc * s
    res["cm_budget"] = float(np.max(np.abs(spend - pinned), initial=0.0))
    if case is Case.GAME2:
        se, sep_ = values["s_el"], values["s_el_plus"]
        res["owner_power"] = pos(values["p_e"] + curt - p_no.sum())
        res["el_crc"] = max(pos(se - s), pos(sep_ - sp))
        res["el_crc_eligible"] = pos(se + sep_ - p_el[0] - p_el[1])
        res["el_residual"] = pos(p_el.sum() - se - sep_ - values["r_el2"] - values["r_el3"] - S)
        res["el_nonfirm"] = max(pos(values["r_el2"] - r2), pos(values["r_el3"] - r3))
    else:
        res["owner_power"] = pos(values["p_e"] + curt - p_el.sum())
    return res


def build_case_model(sc: ScenarioData, case, options: GameOptions = GameOptions()):
    """Single-level model for ``case`` plus the reformulation (bilevel cases only)."""
    case = Case.parse(case)
    sc = validate_scenario(sc)
    if case in (Case.GAME1, Case.GAME2):
        bp = build_game1(sc) if case is Case.GAME1 else build_game2(sc)
        if case is Case.GAME1:
            bp = relax_binaries(bp, [bp.model.var(f"b[{t}]") for t in sc.T])
        reform = derive_kkt(bp, separate=options.separate_blocks)
        linearize_complementarity(reform, options.linearization, options.complementarity_m)
        cut = options.strong_duality
        if cut is None:
            cut = case is Case.GAME1
        if cut:
            add_strong_duality_cut(reform, options.dual_bound)
        reform.model.sos_big_m = options.complementarity_m
        reform.model.name = case.value
        return reform.model, reform
    if case is Case.ELY_HPR:
        return build_ely_hpr(sc, options.nfa85_priority), None
    return build_no_hpr(sc), None


def warm_start(model: ModelIR, reform: Reformulation, solver: SolverOptions):
    """Bilevel-feasible point for ``model`` with the couplings taken from the HPR optimum."""
    bp = reform.problem
    budget = max(5.0, 0.1 * solver.time_limit_s)
    lp = SolverOptions("highs", 0.0, budget)
    mip = SolverOptions("highs", 1e-4, budget, solver.seed)
    hpr = solve(build_hpr(bp), options=SolverOptions("highs", 1e-2, budget, solver.seed))
    if not hpr.status.ok:
        return None
    best, best_obj = None, math.inf
    # the HPR choice itself is often not bilevel-feasible; shrink toward zero
    for k in (1.0, 0.75, 0.5, 0.25, 0.0):
        fixed = {v.index: k * float(hpr.values[v.index]) for v in bp.lower.couplings}
        x = feasible_completion(reform, fixed, lambda m: solve(m, options=lp),
                                lambda m: solve(m, options=mip))
        if x is None:
            continue
        viol, tag = max_violation(model, x)
        if viol > 1e-6:
            log.debug("warm start at %g discarded, row %s violated by %.3g", k, tag, viol)
            continue
        obj = evaluate(model.objective, x)
        if obj < best_obj:
            best, best_obj = x, obj
    return best


def solve_case(sc: ScenarioData, case, options: GameOptions = GameOptions(),
               raise_on_infeasible: bool = False) -> SolutionBundle:
    """Build, reformulate and solve one case; profits and KKT residuals attached."""
    case = Case.parse(case)
    sc = validate_scenario(sc)
    t0 = time.perf_counter()
    model, reform = build_case_model(sc, case, options)
    start = None
    if reform is not None and options.warm_start and options.solver.resolved_backend() == "scip":
        start = warm_start(model, reform, options.solver)
    sol = solve(model, options=options.solver, start=start)
    if sol.has_incumbent and options.polish:
        sol = polish(model, sol)
    runtime = time.perf_counter() - t0
    # a limit with an incumbent is reported with its gap; without one it is a failure
    if not sol.has_incumbent:
        tags = ()
        if sol.status is Status.INFEASIBLE:
            upper = [c.tag for c in reform.problem.model.constraints] if reform else None
            tags = tuple(elastic_diagnosis(model, elastic=upper))
            log.warning("%s infeasible; violated rows: %s", case.value, ", ".join(tags))
            if raise_on_infeasible:
                raise CaseInfeasible(case, list(tags))
        return SolutionBundle(case, sol.status, sol.gap, runtime, math.nan, {}, violated=tags)
    cert = follower = None
    if reform is not None:
        x = complete_dropped(reform, sol.values,
                             lambda lp: solve(lp, options=SolverOptions("highs", 0.0, 60.0)))
        sol = RawSolution(x, sol.objective, sol.status, sol.gap, sol.wall_time, sol.names,
                          sol.bound)
        cert = kkt_certificate(reform, sol.values)
        follower = evaluate(reform.problem.lower.objective, sol.values)
    values = _collect(model, sol, sc.hours)
    ely, no = extract_profits(values, sc, case)
    return SolutionBundle(case, sol.status, sol.gap, runtime, sol.objective, values, ely, no,
                          math.nan if follower is None else follower, cert)
