"""Domain types for the electrolyzer / network-operator contracting games.

Units throughout: money in EUR, power in MW, energy in MWh, hydrogen in kg,
hour length 1 h. Annual quantities (capital cost, tariffs) are EUR/MW/yr and
are scaled to the modelled horizon by ``ScenarioData.cost_scale``.
"""
from __future__ import annotations

import enum
import math
import warnings
from dataclasses import dataclass, field, replace
from typing import Optional, Sequence

import numpy as np

HOURS_PER_YEAR = 8760
# kWh/kg; chosen so that a 70 % system efficiency maps to 18 kg/MWh
DEFAULT_HHV_KWH_PER_KG = 700.0 / 18.0


class ScenarioError(ValueError):
    """Raised when a scenario violates one or more invariants.

    ``errors`` carries every violation found, not only the first.
    """

    def __init__(self, errors: Sequence[str]):
        self.errors = list(errors)
        super().__init__("; ".join(self.errors))


class ContractKind(enum.IntEnum):
    FA = 1
    NFA85 = 2
    NFA = 3

    @property
    def crc_eligible(self) -> bool:
        return self is not ContractKind.NFA


CONTRACTS = tuple(ContractKind)


class BudgetMode(enum.Enum):
    """Which curtailment product the congestion budget equality pins.

    PIN_CRC_PLUS keeps the literal budget row (CRC+ spend equals the residual
    budget every hour); PIN_CRC pins the mandatory CRC spend instead and leaves
    CRC+ voluntary.
    """

    PIN_CRC_PLUS = "pin-crc-plus"
    PIN_CRC = "pin-crc"


def capital_recovery_factor(discount_rate: float, lifetime: int) -> float:
    if lifetime < 1:
        raise ValueError(f"lifetime must be >= 1 year, got {lifetime}")
    if discount_rate < 0:
        raise ValueError(f"discount rate must be >= 0, got {discount_rate}")
    if discount_rate == 0:
        return 1.0 / lifetime
    # expm1/log1p keep tiny rates from cancelling to 0 / 0
    excess = math.expm1(lifetime * math.log1p(discount_rate))
    if excess == 0.0:
        return 1.0 / lifetime
    return discount_rate * (1.0 + excess) / excess


def annualize_capital(capital: float, discount_rate: float, lifetime: int) -> float:
    """Annualized capital cost (EUR/MW/yr) of an overnight investment (EUR/MW)."""
    if capital < 0:
        raise ValueError(f"capital must be >= 0, got {capital}")
    return capital * capital_recovery_factor(discount_rate, lifetime)


def hydrogen_yield(power: float, eta_sys: float) -> float:
    """Maximum hourly hydrogen output (kg/h) at ``power`` MW."""
    if power < 0:
        raise ValueError(f"power must be >= 0, got {power}")
    if eta_sys <= 0:
        raise ValueError(f"eta_sys must be > 0, got {eta_sys}")
    return eta_sys * power


def efficiency_to_yield(efficiency: float, hhv_kwh_per_kg: float = DEFAULT_HHV_KWH_PER_KG) -> float:
    """Convert a fractional system efficiency to kg of H2 per MWh."""
    return efficiency * 1000.0 / hhv_kwh_per_kg


@dataclass(frozen=True)
class ElectrolyzerTech:
    capital_cost_annual: float  # EUR/MW/yr
    alpha_min: float
    eta_sys: float  # kg/MWh
    capital_cost: Optional[float] = None  # EUR/MW, overnight
    discount_rate: Optional[float] = None
    lifetime: Optional[int] = None

    @classmethod
    def from_capital(cls, capital_cost: float, discount_rate: float, lifetime: int,
                     alpha_min: float, eta_sys: float) -> "ElectrolyzerTech":
        return cls(annualize_capital(capital_cost, discount_rate, lifetime), alpha_min,
                   eta_sys, capital_cost, discount_rate, lifetime)


@dataclass(frozen=True)
class TariffSchedule:
    fa: float
    nfa85: float
    nfa: float  # all EUR/MW/yr

    def __getitem__(self, c: ContractKind) -> float:
        return (self.fa, self.nfa85, self.nfa)[int(c) - 1]


@dataclass(frozen=True)
class PriceSet:
    electricity: tuple  # EUR/MWh per hour
    h2: float  # EUR/kg
    crc: float  # EUR/MW per curtailed hour
    crc_plus: float
    crc_series: Optional[tuple] = None  # per-hour override of ``crc``

    def crc_at(self, t: int) -> float:
        return self.crc if self.crc_series is None else self.crc_series[t]


@dataclass(frozen=True)
class NetworkSeries:
    residual_capacity: tuple  # MW
    h2_demand: tuple  # kg/h


@dataclass(frozen=True)
class BudgetPolicy:
    nfa85_fraction: float = 0.15
    nfa_budget: float = 1.0
    cm_budget: float = 0.0  # EUR/h
    theta: float = 0.0
    penalty: float = 1.0  # EUR/MW
    mode: BudgetMode = BudgetMode.PIN_CRC


@dataclass(frozen=True)
class ScenarioData:
    hours: int
    tech: ElectrolyzerTech
    tariffs: TariffSchedule
    prices: PriceSet
    network: NetworkSeries
    budgets: BudgetPolicy = field(default_factory=BudgetPolicy)
    big_m: Optional[float] = None
    # multiplier on annual costs; None means hours / 8760
    cost_scale: Optional[float] = None
    name: str = "scenario"

    @property
    def scale(self) -> float:
        return self.hours / HOURS_PER_YEAR if self.cost_scale is None else self.cost_scale

    @property
    def c_el(self) -> float:
        """Capital cost charged over the horizon, EUR/MW."""
        return self.tech.capital_cost_annual * self.scale

    def tariff(self, c: ContractKind) -> float:
        return self.tariffs[c] * self.scale

    @property
    def T(self) -> range:
        return range(self.hours)

    def residual(self, t: int) -> float:
        return self.network.residual_capacity[t]

    def demand(self, t: int) -> float:
        return self.network.h2_demand[t]

    @property
    def nfa85_hours(self) -> float:
        return self.budgets.nfa85_fraction * self.hours

    def with_overrides(self, **kw) -> "ScenarioData":
        """Shallow override of nested fields, e.g. ``crc_plus=5`` or ``theta=0.2``."""
        sections = {
            "prices": {"h2", "crc", "crc_plus", "electricity", "crc_series"},
            "budgets": {"nfa85_fraction", "nfa_budget", "cm_budget", "theta", "penalty", "mode"},
            "tech": {"capital_cost_annual", "alpha_min", "eta_sys"},
            "network": {"residual_capacity", "h2_demand"},
        }
        top = {}
        nested: dict = {}
        for key, value in kw.items():
            for sec, keys in sections.items():
                if key in keys:
                    nested.setdefault(sec, {})[key] = value
                    break
            else:
                top[key] = value
        for sec, vals in nested.items():
            top[sec] = replace(getattr(self, sec), **vals)
        return replace(self, **top)


def _finite(xs) -> bool:
    return bool(np.all(np.isfinite(np.asarray(xs, dtype=float))))


def validate_scenario(sc: ScenarioData) -> ScenarioData:
    """Check all invariants and return a normalized copy.

    Normalization converts series to float tuples and defaults ``big_m`` to
    twice the peak residual capacity. Raises ``ScenarioError`` listing every
    violation. Idempotent.
    """
    errors = []
    n = sc.hours
    if not isinstance(n, (int, np.integer)) or n < 1:
        errors.append(f"horizon must be a positive integer, got {n!r}")
        raise ScenarioError(errors)

    series = {
        "prices.electricity": sc.prices.electricity,
        "network.residual_capacity": sc.network.residual_capacity,
        "network.h2_demand": sc.network.h2_demand,
    }
    if sc.prices.crc_series is not None:
        series["prices.crc_series"] = sc.prices.crc_series
    for name, s in series.items():
        if len(s) != n:
            errors.append(f"length mismatch: {name} has {len(s)} entries, horizon is {n}")
        elif not _finite(s):
            errors.append(f"non-finite values in {name}")
    if not errors:
        if min(sc.network.residual_capacity) < 0:
            errors.append("residual capacity must be >= 0")
        if min(sc.network.h2_demand) < 0:
            errors.append("hydrogen demand must be >= 0")

    tech, b, p, tf = sc.tech, sc.budgets, sc.prices, sc.tariffs
    scalars = {
        "tech.capital_cost_annual": tech.capital_cost_annual, "tech.alpha_min": tech.alpha_min,
        "tech.eta_sys": tech.eta_sys, "tariffs.fa": tf.fa, "tariffs.nfa85": tf.nfa85,
        "tariffs.nfa": tf.nfa, "prices.h2": p.h2, "prices.crc": p.crc,
        "prices.crc_plus": p.crc_plus, "budgets.nfa85_fraction": b.nfa85_fraction,
        "budgets.nfa_budget": b.nfa_budget, "budgets.cm_budget": b.cm_budget,
        "budgets.theta": b.theta, "budgets.penalty": b.penalty,
    }
    for name, v in scalars.items():
        if v is None or not math.isfinite(v):
            errors.append(f"non-finite value for {name}")
    if errors:
        raise ScenarioError(errors)

    if tech.capital_cost_annual <= 0:
        errors.append("annualized capital cost must be > 0")
    if not 0 <= tech.alpha_min < 1:
        errors.append(f"alpha_min must lie in [0, 1), got {tech.alpha_min}")
    if tech.eta_sys <= 0:
        errors.append("eta_sys must be > 0")
    if None not in (tech.capital_cost, tech.discount_rate, tech.lifetime):
        expected = annualize_capital(tech.capital_cost, tech.discount_rate, tech.lifetime)
        if abs(expected - tech.capital_cost_annual) > 1e-3 * expected:
            errors.append(f"annualized capital cost {tech.capital_cost_annual:.2f} disagrees with "
                          f"capital x CRF = {expected:.2f}")
    if min(tf.fa, tf.nfa85, tf.nfa) < 0:
        errors.append("tariffs must be >= 0")
    elif not tf.fa >= tf.nfa85 >= tf.nfa:
        warnings.warn("tariffs are not ordered FA >= NFA85 >= NFA", stacklevel=2)
    if p.crc < 0:
        errors.append("CRC price must be >= 0")
    if p.crc_plus < 0:
        errors.append("CRC+ price must be >= 0")
    if p.crc_series is not None and min(p.crc_series) < 0:
        errors.append("CRC price series must be >= 0")
    if not 0 <= b.nfa85_fraction <= 1:
        errors.append("NFA85 time budget fraction must lie in [0, 1]")
    if b.nfa_budget < 0:
        errors.append("NFA energy budget must be >= 0")
    if b.cm_budget < 0:
        errors.append("congestion-management budget must be >= 0")
    if not 0 <= b.theta <= 1:
        errors.append("theta must lie in [0, 1]")
    if b.penalty < 0:
        errors.append("curtailment penalty must be >= 0")

    pinned = b.theta * b.cm_budget
    if b.mode is BudgetMode.PIN_CRC_PLUS and p.crc_plus == 0:
        errors.append("CRC+ price is zero in pin-crc-plus mode: the budget equality "
                      "divides by it")
    if b.mode is BudgetMode.PIN_CRC and pinned > 0:
        crcs = p.crc_series if p.crc_series is not None else (p.crc,)
        if min(crcs) == 0:
            errors.append("CRC price is zero while theta * B_CM > 0 in pin-crc mode")

    peak = max(sc.network.residual_capacity) if not errors else 0.0
    big_m = sc.big_m
    if big_m is None:
        big_m = 2.0 * peak if peak > 0 else 1.0
    elif not math.isfinite(big_m) or big_m < peak:
        errors.append(f"big-M {big_m} must be finite and >= peak residual capacity {peak}")
    if sc.cost_scale is not None and not sc.cost_scale > 0:
        errors.append("cost_scale must be > 0")
    if errors:
        raise ScenarioError(errors)

    def tup(xs):
        return tuple(float(x) for x in xs)

    return replace(
        sc,
        hours=int(n),
        big_m=float(big_m),
        prices=replace(p, electricity=tup(p.electricity),
                       crc_series=None if p.crc_series is None else tup(p.crc_series)),
        network=NetworkSeries(tup(sc.network.residual_capacity), tup(sc.network.h2_demand)),
    )
