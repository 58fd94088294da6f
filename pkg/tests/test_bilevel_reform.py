import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from gridpact.bilevel import (BilevelProblem, LowerLevelLP, ReformulationError,
                              add_strong_duality_cut, build_hpr, complete_dropped, derive_kkt,
                              feasible_completion, kkt_certificate, linearize_complementarity,
                              relax_binaries, separable_blocks, trace_report)
from gridpact.lp import (Constraint, LinExpr, ModelIR, Sense, SolverOptions, VarKind,
                         max_violation, quicksum, solve)

HIGHS = SolverOptions("highs", 0.0, 30.0)


def _bilevel(leader_obj, rows, follower_obj, x_hi=3.0, y_hi=10.0, n_y=1):
    """Leader x in [0, x_hi]; follower y_j in [0, y_hi]. Builders get (x, ys)."""
    m = ModelIR(name="tiny")
    x = m.add_variable("x", hi=x_hi)
    ys = [m.add_variable(f"y{j}", hi=y_hi) for j in range(n_y)]
    cons = [Constraint(LinExpr.of(e), Sense.parse(s), float(r), f"f{k}")
            for k, (e, s, r) in enumerate(rows(x, ys))]
    m.set_objective(leader_obj(x, ys))
    return BilevelProblem(m, LowerLevelLP(ys, cons, LinExpr.of(follower_obj(x, ys)), [x]))


def _single_level(bp, method="sos1", cut=True, m=100.0):
    reform = derive_kkt(bp)
    linearize_complementarity(reform, method, m)
    if cut:
        add_strong_duality_cut(reform)
    return reform


def _brute_force(bp, levels):
    """Optimistic bilevel value by enumerating the leader on ``levels``."""
    best = np.inf
    for val in levels:
        fol = bp.model.copy()
        fol.set_bounds(fol.var("x"), val, val)
        for c in bp.lower.constraints:
            fol.add_constraint(c.expr, c.sense, c.rhs, c.tag)
        opt = fol.copy()
        fol.set_objective(bp.lower.objective)
        phi = solve(fol, options=HIGHS)
        if not phi.status.ok:
            continue
        opt.add_constraint(bp.lower.objective, "<=", phi.objective + 1e-9, "fv")
        sol = solve(opt, options=HIGHS)
        if sol.status.ok:
            best = min(best, sol.objective)
    return best


def _follows():
    """Follower picks y = x; the leader gains from a large x."""
    return _bilevel(lambda x, y: x - 2 * y[0], lambda x, y: [(y[0] - x, "<=", 0)],
                    lambda x, y: -1 * y[0])


def test_follower_tracks_leader():
    bp = _follows()
    reform = _single_level(bp)
    sol = solve(reform.model, options=SolverOptions("scip", 0.0, 30.0))
    assert sol.objective == pytest.approx(-3.0)
    assert sol["x"] == pytest.approx(3.0) and sol["y0"] == pytest.approx(3.0)
    cert = kkt_certificate(reform, sol.values)
    assert cert["complementarity"] <= 1e-7 and cert["duality_gap"] <= 1e-7


def test_hpr_is_a_relaxation():
    # follower keeps y at max(0, x - 1); the HPR lets the leader pick y freely
    bp = _bilevel(lambda x, y: 0.5 * x - y[0], lambda x, y: [(y[0] - x, ">=", -1)],
                  lambda x, y: y[0], x_hi=2.0, y_hi=5.0)
    hpr = solve(build_hpr(bp), options=HIGHS)
    reform = _single_level(bp)
    sol = solve(reform.model, options=SolverOptions("scip", 0.0, 30.0))
    assert hpr.objective == pytest.approx(-5.0)
    assert sol.objective == pytest.approx(0.0, abs=1e-7)
    assert _brute_force(bp, np.linspace(0, 2, 9)) == pytest.approx(0.0, abs=1e-7)


def test_artifacts_and_trace():
    bp = _bilevel(lambda x, y: x - y[0], lambda x, y: [(y[0] - x, "<=", 0)],
                  lambda x, y: -1 * y[0])
    reform = _single_level(bp, cut=False)
    art = reform.artifacts
    assert {r.tag for r in art.rows} == {"f0", "lb:y0", "ub:y0"}
    assert len(art.pairs) == 3 and set(art.duals) == {"f0", "lb:y0", "ub:y0"}
    assert "stationarity[y0]" in {c.tag for c in reform.model.constraints}
    text = trace_report(reform)
    assert "f0" in text and "sos1" in text


def test_rejects_binary_follower_and_foreign_rows():
    m = ModelIR()
    x = m.add_variable("x")
    b = m.add_variable("b", VarKind.BINARY)
    z = m.add_variable("z")
    bp = BilevelProblem(m, LowerLevelLP([b], [Constraint(LinExpr.of(b - x), Sense.LE, 0.0, "r")],
                                        LinExpr.of(b), [x]))
    with pytest.raises(ReformulationError):
        derive_kkt(bp)
    relaxed = relax_binaries(bp, [b])
    assert relaxed.model.var("b").kind is VarKind.CONTINUOUS
    assert bp.model.var("b").kind is VarKind.BINARY
    derive_kkt(relaxed)
    bad = BilevelProblem(m, LowerLevelLP([b], [Constraint(LinExpr.of(b - z), Sense.LE, 0.0, "r")],
                                         LinExpr.of(b), [x]))
    with pytest.raises(ReformulationError):
        derive_kkt(relax_binaries(bad, [b]))


def test_bigm_needs_finite_m():
    reform = derive_kkt(_follows())
    with pytest.raises(ReformulationError):
        linearize_complementarity(reform, "bigm", None)
    with pytest.raises(ReformulationError):
        linearize_complementarity(reform, "lasso")


def test_separable_block_detected_and_completed():
    def rows(x, y):
        return [(y[0] - x, "<=", 0), (y[1] + y[2], ">=", 1)]

    bp = _bilevel(lambda x, y: x - 2 * y[0], rows, lambda x, y: -1 * y[0] + y[1] + 2 * y[2],
                  n_y=3)
    drop, tags = separable_blocks(bp)
    assert [v.name for v in drop] == ["y1", "y2"] and tags == ["f1"]
    reform = derive_kkt(bp, separate=True)
    linearize_complementarity(reform, "sos1")
    sol = solve(reform.model, options=SolverOptions("scip", 0.0, 30.0))
    x = complete_dropped(reform, sol.values, lambda lp: solve(lp, options=HIGHS))
    names = {v.name: v.index for v in reform.model.variables}
    assert x[names["y1"]] == pytest.approx(1.0) and x[names["y2"]] == pytest.approx(0.0)


def test_feasible_completion_is_single_level_feasible():
    bp = _bilevel(lambda x, y: 0.5 * x - y[0], lambda x, y: [(y[0] - x, ">=", -1)],
                  lambda x, y: y[0], x_hi=2.0, y_hi=5.0)
    reform = _single_level(bp, "bigm", m=50.0)
    x = feasible_completion(reform, {bp.model.var("x").index: 1.5},
                            lambda m: solve(m, options=HIGHS), lambda m: solve(m, options=HIGHS))
    assert x is not None
    assert max_violation(reform.model, x)[0] <= 1e-7
    assert x[reform.model.var("y0").index] == pytest.approx(0.5)


@st.composite
def random_bilevel(draw):
    n_y = draw(st.integers(1, 3))
    k = draw(st.integers(1, 3))
    small = st.integers(-3, 3)
    A = [[draw(small) for _ in range(n_y)] for _ in range(k)]
    b = [draw(st.integers(-2, 2)) for _ in range(k)]
    # rhs keeps y = 0 feasible for every x in [0, 2]
    c = [max(0, 2 * bi) + draw(st.integers(0, 4)) for bi in b]
    d = [draw(small) for _ in range(n_y)]
    e = draw(small)
    f = [draw(small) for _ in range(n_y)]

    def rows(x, y):
        return [(quicksum(float(A[i][j]) * y[j] for j in range(n_y)) + float(b[i]) * x, "<=",
                 c[i]) for i in range(k)]

    return _bilevel(lambda x, y: float(e) * x + quicksum(float(f[j]) * y[j] for j in range(n_y)),
                    rows, lambda x, y: quicksum(float(d[j]) * y[j] for j in range(n_y)),
                    x_hi=2.0, y_hi=4.0, n_y=n_y)


@settings(max_examples=25, deadline=None)
@given(bp=random_bilevel(), method=st.sampled_from(["sos1", "bigm"]))
def test_random_bilevel_reformulation_is_sound(bp, method):
    reform = _single_level(bp, method, m=1e3)
    sol = solve(reform.model, options=SolverOptions("scip", 0.0, 30.0))
    assert sol.status.ok
    # exact optimum: no grid point beats it, and it is bilevel feasible itself
    grid = _brute_force(bp, np.linspace(0.0, 2.0, 9))
    assert sol.objective <= grid + 1e-6
    at = _brute_force(bp, [sol["x"]])
    assert at == pytest.approx(sol.objective, abs=1e-5)
    cert = kkt_certificate(reform, sol.values)
    assert cert["complementarity"] <= 1e-5
    assert cert["duality_gap"] <= 1e-5 * (1 + abs(cert["primal"]))
