import math
import warnings

import pytest
from hypothesis import given, settings, strategies as st

from gridpact.core import (BudgetMode, ContractKind, ScenarioError, annualize_capital,
                           capital_recovery_factor, efficiency_to_yield, hydrogen_yield,
                           validate_scenario)

from conftest import toy


def test_annualized_capital_table_values():
    assert annualize_capital(937_500, 0.1, 15) == pytest.approx(123_260, rel=1e-3)
    assert annualize_capital(1000, 0.0, 10) == pytest.approx(100.0)
    assert annualize_capital(500_000, 0.05, 10) == pytest.approx(64_752.29, abs=0.01)
    assert capital_recovery_factor(0.05, 10) == pytest.approx(0.12950457, abs=1e-8)


@pytest.mark.parametrize("args", [(0.1, 0), (-0.01, 10)])
def test_crf_rejects_bad_inputs(args):
    with pytest.raises(ValueError):
        capital_recovery_factor(*args)


def test_hydrogen_yield():
    assert hydrogen_yield(100, 18) == pytest.approx(1800)
    assert hydrogen_yield(55, 17.77) == pytest.approx(977.35)
    assert efficiency_to_yield(0.7) == pytest.approx(18.0)
    with pytest.raises(ValueError):
        hydrogen_yield(-1, 18)
    with pytest.raises(ValueError):
        hydrogen_yield(1, 0)


def test_contract_eligibility():
    assert ContractKind.FA.crc_eligible and ContractKind.NFA85.crc_eligible
    assert not ContractKind.NFA.crc_eligible


def test_length_mismatch_reported():
    sc = toy()
    bad = sc.with_overrides(h2_demand=(1.0, 2.0))
    with pytest.raises(ScenarioError, match="length mismatch"):
        validate_scenario(bad)


def test_zero_crc_plus_in_pin_plus_mode():
    sc = toy(theta=0.2, cm_budget=10.0, crc_plus=0.0)
    with pytest.raises(ScenarioError, match="CRC\\+"):
        validate_scenario(sc.with_overrides(mode=BudgetMode.PIN_CRC_PLUS))


def test_all_errors_collected():
    sc = toy().with_overrides(alpha_min=1.5, theta=2.0, nfa_budget=-1.0)
    with pytest.raises(ScenarioError) as info:
        validate_scenario(sc)
    assert len(info.value.errors) == 3


def test_big_m_default_and_idempotent():
    sc = toy(S=(2.0, 5.0, 1.0), big_m=None)
    assert sc.big_m == 10.0
    assert validate_scenario(sc) == sc


def test_big_m_below_peak_rejected():
    with pytest.raises(ScenarioError, match="big-M"):
        toy(S=(2.0, 5.0), big_m=3.0)


def test_unordered_tariffs_warn():
    sc = toy()
    from dataclasses import replace
    with warnings.catch_warnings(record=True) as w:
        warnings.simplefilter("always")
        validate_scenario(replace(sc, tariffs=replace(sc.tariffs, fa=1.0)))
    assert any("not ordered" in str(x.message) for x in w)


def test_cost_scale_and_overrides():
    sc = toy()
    assert sc.scale == pytest.approx(3 / 8760)
    assert sc.c_el == pytest.approx(sc.tech.capital_cost_annual * 3 / 8760)
    sc2 = sc.with_overrides(crc_plus=7.0, theta=0.3, cost_scale=1.0)
    assert sc2.prices.crc_plus == 7.0 and sc2.budgets.theta == 0.3 and sc2.scale == 1.0
    assert sc.prices.crc_plus == 20.0
    assert sc2.tariff(ContractKind.NFA) == sc.tariffs.nfa


@given(r=st.floats(0.0, 0.3), n=st.integers(1, 60))
def test_crf_bounds(r, n):
    crf = capital_recovery_factor(r, n)
    # never below straight-line repayment, never below the interest rate
    assert crf >= 1.0 / n - 1e-12
    assert crf >= r - 1e-12
    assert math.isfinite(crf)


@given(r1=st.floats(0.0, 0.2), dr=st.floats(1e-4, 0.1), n=st.integers(2, 50))
def test_crf_monotone_in_rate(r1, dr, n):
    assert capital_recovery_factor(r1 + dr, n) > capital_recovery_factor(r1, n)


@given(r=st.floats(1e-3, 0.2), n=st.integers(1, 49))
def test_crf_monotone_in_lifetime(r, n):
    assert capital_recovery_factor(r, n + 1) < capital_recovery_factor(r, n)


@settings(max_examples=40, deadline=None)
@given(S=st.lists(st.floats(0.0, 100.0), min_size=1, max_size=12),
       theta=st.floats(0.0, 1.0), alpha=st.floats(0.0, 0.99))
def test_validation_idempotent(S, theta, alpha):
    sc = toy(S=tuple(S), theta=theta, alpha_min=alpha, big_m=None)
    assert validate_scenario(sc) == sc
    assert sc.big_m >= max(S)
