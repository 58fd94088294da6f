import math

import numpy as np
import pytest

from gridpact.games import Case, solve_case
from gridpact.lp import Status
from gridpact.oracle import (GridGuardError, GridSpec, compare, enumerate_bilevel, grid_slack,
                             solve_follower)

from conftest import toy


def _game2_fix(sc, p_grid, p_no):
    fix = {"p_grid": p_grid, "p_no[fa]": p_no[0], "p_no[nfa85]": p_no[1], "p_no[nfa]": p_no[2]}
    for b in ("r2", "r3", "s", "s_plus"):
        for t in sc.T:
            fix[f"{b}[{t}]"] = 0.0
    return fix


def test_owner_takes_offered_capacity():
    sc = toy(S=(5.0, 5.0, 5.0), big_m=10.0)
    res = solve_follower(_game2_fix(sc, 5.0, (0.0, 0.0, 5.0)), sc, "game2")
    assert res.status is Status.OPTIMAL
    got = [res.values[f"p_el[{k}]"] for k in ("fa", "nfa85", "nfa")]
    assert got == pytest.approx([0.0, 0.0, 5.0])


def test_follower_needs_every_leader_value():
    sc = toy()
    with pytest.raises(ValueError, match="lacks"):
        solve_follower({"p_grid": 1.0}, sc, "game2")
    with pytest.raises(ValueError):
        solve_follower({}, sc, "ely-hpr")


def test_operator_follower_game1():
    sc = toy(S=(2.0, 1.0))
    res = solve_follower({"p_el[fa]": 0.0, "p_el[nfa85]": 0.0, "p_el[nfa]": 1.5}, sc, "game1")
    assert res.status.ok
    # the operator grants all requested capacity
    assert res.values["p_no[nfa]"] == pytest.approx(1.5)


def test_grid_levels_and_validation():
    assert list(GridSpec(0.5, 1.0).levels()) == [0.0, 0.5, 1.0]
    assert len(GridSpec(0.3, 1.0).levels()) == 4
    with pytest.raises(ValueError):
        GridSpec(0.0, 1.0)
    with pytest.raises(ValueError):
        GridSpec(0.25, -1.0)


def test_guard_refuses_huge_grids():
    sc = toy(S=(2.0, 2.0, 2.0, 2.0), big_m=4.0)
    with pytest.raises(GridGuardError):
        enumerate_bilevel(sc, "game1", GridSpec(0.01, 4.0, max_points=1000))
    with pytest.raises(GridGuardError):
        enumerate_bilevel(sc, "game2", GridSpec(0.01, 4.0, max_points=1000))


def test_unknown_coordinates_and_cases():
    sc = toy()
    with pytest.raises(ValueError):
        enumerate_bilevel(sc, "game1", GridSpec(0.5, 2.0, variables=("p_grid",)))
    with pytest.raises(ValueError):
        enumerate_bilevel(sc, "no-hpr", GridSpec(0.5, 2.0))


def test_compare_tolerance():
    assert compare(-100.0, -100.05, 0.0)[2]
    assert not compare(-100.0, -101.0, 0.5)[2]
    assert compare(-100.0, -101.0, 1.0)[2]
    assert grid_slack(toy(), "game1", 0.5) == pytest.approx(2 * grid_slack(toy(), "game1", 0.25))


def test_restricted_coordinates_give_upper_bound():
    sc = toy(S=(1.5, 0.5), big_m=1.5)
    full = enumerate_bilevel(sc, "game1", GridSpec(0.5, 1.5))
    nfa_only = enumerate_bilevel(sc, "game1", GridSpec(0.5, 1.5, variables=("p_el[nfa]",)))
    assert nfa_only.n_points == 4
    assert full.objective <= nfa_only.objective + 1e-9


def test_game1_oracle_matches_reformulation(tmp_path):
    sc = toy(S=(1.5, 0.5, 1.0), big_m=1.5)
    ref = solve_case(sc, Case.GAME1)
    res = enumerate_bilevel(sc, Case.GAME1, GridSpec(0.25, 1.5))
    assert res.n_points == 7 ** 3 and 0 < res.n_feasible < res.n_points
    diff, tol, ok = compare(ref.objective, res.objective, res.slack)
    assert ok and diff <= 1e-6 * (1 + abs(ref.objective))
    assert res.bundle.p_grid == pytest.approx(ref.p_grid)
    path = tmp_path / "report.csv"
    res.write_report(str(path))
    assert len(path.read_text().splitlines()) == res.n_points + 1


def test_game2_oracle_matches_reformulation():
    sc = toy(S=(1.0, 0.5), big_m=1.0, theta=0.2, cm_budget=5.0)
    ref = solve_case(sc, Case.GAME2)
    res = enumerate_bilevel(sc, Case.GAME2, GridSpec(0.25, 1.0))
    diff, tol, ok = compare(ref.objective, res.objective, res.slack)
    assert ok, (ref.objective, res.objective)
    assert res.report and {r["follower_status"] for r in res.report} >= {"optimal"}
    assert not math.isnan(res.bundle.no_profit)


def test_refinement_never_worsens():
    sc = toy(S=(1.0, 2.0, 1.5), big_m=2.0)
    ref = solve_case(sc, Case.GAME1)
    gaps = [abs(ref.objective - enumerate_bilevel(sc, Case.GAME1, GridSpec(s, 2.0),
                                                  keep_report=False).objective)
            for s in (1.0, 0.5, 0.25)]
    assert all(b <= a + 1e-9 for a, b in zip(gaps, gaps[1:]))
    assert np.isfinite(gaps).all()
