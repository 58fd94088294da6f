import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.optimize import linprog

from gridpact.lp import (LinExpr, ModelError, ModelIR, SolverOptions, Status, VarKind,
                         available_backends, elastic_diagnosis, evaluate, max_violation,
                         polish, quicksum, solve)

BACKENDS = available_backends()


@pytest.fixture(params=BACKENDS)
def backend(request):
    return request.param


def test_single_bound_lp(backend):
    m = ModelIR()
    x = m.add_variable("x", lo=-10)
    m.add_constraint(x, ">=", 3, tag="floor")
    m.set_objective(x)
    sol = solve(m, backend=backend)
    assert sol.status.ok
    assert sol.objective == pytest.approx(3.0)
    assert sol["x"] == pytest.approx(3.0)


def test_maximize(backend):
    m = ModelIR()
    x = m.add_variable("x", hi=3)
    y = m.add_variable("y", hi=3)
    m.add_constraint(x + y, "<=", 4)
    m.set_objective(x + y, maximize=True)
    sol = solve(m, backend=backend)
    assert sol.objective == pytest.approx(4.0)


def test_verbose_only_changes_logging(backend, capfd):
    m = ModelIR()
    x = m.add_variable("x", kind=VarKind.BINARY)
    y = m.add_variable("y", hi=2.5)
    m.add_constraint(y - 2 * x, "<=", 0.5)
    m.set_objective(y, maximize=True)
    quiet = solve(m, options=SolverOptions(backend))
    assert capfd.readouterr().out == ""
    loud = solve(m, options=SolverOptions(backend, verbose=True))
    assert capfd.readouterr().out
    assert loud.objective == pytest.approx(quiet.objective) == pytest.approx(2.5)


def test_infeasible_reported_with_nan(backend):
    m = ModelIR()
    x = m.add_variable("x", hi=1)
    m.add_constraint(x, ">=", 2, tag="too_high")
    m.set_objective(x)
    sol = solve(m, backend=backend)
    assert sol.status is Status.INFEASIBLE
    assert not sol.has_incumbent
    assert elastic_diagnosis(m) == ["too_high"]


def test_binary_and_sos1(backend):
    m = ModelIR()
    a = m.add_variable("a", hi=5)
    b = m.add_variable("b", hi=5)
    z = m.add_variable("z", VarKind.BINARY, lo=-3, hi=7)
    assert (z.lo, z.hi) == (0.0, 1.0)
    m.add_sos1([a, b])
    m.add_constraint(a + b - 2 * z, "<=", 3)
    m.set_objective(a + 2 * b + z, maximize=True)
    m.sos_big_m = 5.0
    sol = solve(m, backend=backend)
    assert sol.status.ok
    assert min(sol["a"], sol["b"]) == pytest.approx(0.0, abs=1e-7)
    assert sol.objective == pytest.approx(11.0)


def test_expression_algebra_and_evaluate():
    m = ModelIR()
    x = m.add_variable("x")
    y = m.add_variable("y")
    e = 2 * x + 1
    assert evaluate(e, {x: 3.0}) == 7.0
    f = quicksum([x, y, x]) - 0.5 * y + 4
    assert evaluate(f, np.array([1.0, 2.0])) == pytest.approx(2 + 1 + 4)
    with pytest.raises(ModelError):
        evaluate(x + y, {x: 1.0})
    assert isinstance(LinExpr.of(3.0), LinExpr)


def test_constants_fold_into_rhs():
    m = ModelIR()
    x = m.add_variable("x")
    m.add_constraint(x + 2, "<=", 5, tag="r")
    assert m.constraint("r").rhs == 3.0


def test_duplicates_rejected():
    m = ModelIR()
    x = m.add_variable("x")
    with pytest.raises(ModelError):
        m.add_variable("x")
    m.add_constraint(x, "<=", 1, tag="t")
    with pytest.raises(ModelError):
        m.add_constraint(x, ">=", 0, tag="t")
    with pytest.raises(ModelError):
        m.add_variable("bad", lo=2, hi=1)


def test_foreign_variable_rejected():
    m, other = ModelIR(), ModelIR()
    m.add_variable("x")
    y = other.add_variable("y")
    y2 = other.add_variable("y2")
    with pytest.raises(ModelError):
        m.add_constraint(y2, "<=", 1)
    assert y.index == 0


def test_copy_is_independent():
    m = ModelIR()
    x = m.add_variable("x", hi=2)
    m.add_constraint(x, "<=", 1, tag="cap")
    c = m.copy()
    c.add_variable("y")
    c.set_bounds(c.var("x"), 0, 5)
    assert m.n_vars == 1 and m.var("x").hi == 2
    assert "cap" in m.to_lp_text()


def test_max_violation():
    m = ModelIR()
    x = m.add_variable("x", hi=1)
    m.add_constraint(x, "==", 0.5, tag="eq")
    assert max_violation(m, np.array([0.5])) == (0.0, "")
    viol, tag = max_violation(m, np.array([1.5]))
    assert tag == "eq" and viol == pytest.approx(1.0)


def test_time_limit_status_is_not_ok():
    assert not Status.LIMIT.ok and Status.GAP_OPTIMAL.ok


def test_polish_removes_sos_noise():
    m = ModelIR()
    a = m.add_variable("a", hi=4)
    b = m.add_variable("b", hi=4)
    m.add_sos1([a, b])
    m.add_constraint(a + b, ">=", 1)
    m.set_objective(a + 3 * b)
    sol = polish(m, solve(m, backend="scip"))
    assert sol["b"] == 0.0
    assert sol.objective == pytest.approx(1.0)


@st.composite
def small_lp(draw):
    n = draw(st.integers(1, 4))
    k = draw(st.integers(1, 4))
    coef = st.integers(-4, 4)
    A = np.array([[draw(coef) for _ in range(n)] for _ in range(k)], dtype=float)
    b = np.array([draw(st.integers(0, 10)) for _ in range(k)], dtype=float)
    c = np.array([draw(coef) for _ in range(n)], dtype=float)
    return A, b, c


@settings(max_examples=30, deadline=None)
@given(lp=small_lp())
def test_random_lp_matches_linprog(lp):
    A, b, c = lp
    n = len(c)
    m = ModelIR()
    xs = [m.add_variable(f"x{j}", hi=5) for j in range(n)]
    for i in range(len(b)):
        m.add_constraint(quicksum(float(A[i, j]) * xs[j] for j in range(n)), "<=", float(b[i]))
    m.set_objective(quicksum(float(c[j]) * xs[j] for j in range(n)))
    ref = linprog(c, A_ub=A, b_ub=b, bounds=[(0, 5)] * n, method="highs")
    for name in BACKENDS:
        sol = solve(m, options=SolverOptions(name, 0.0, 30.0))
        # b >= 0 so x = 0 is feasible and the box keeps the LP bounded
        assert sol.status.ok
        assert sol.objective == pytest.approx(ref.fun, abs=1e-6)
        assert max_violation(m, sol.values)[0] <= 1e-6
