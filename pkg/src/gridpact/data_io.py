"""Scenario files, synthetic scenarios and result tables.

Parameter document (JSON)::

    {
      "name": "...",
      "money_unit": "EUR" | "kEUR",        # capital cost and tariffs
      "horizon":  {"hours": 24, "cost_scale": null},
      "tech":     {"capital_cost": 937.5, "discount_rate": 0.1, "lifetime": 15,
                   "alpha_min": 0.2, "efficiency": 0.7},
      "tariffs":  {"fa": 87.6, "nfa85": 43.8, "nfa": 26.28},
      "prices":   {"h2": 10, "crc": 40, "crc_plus": 20, "electricity": [...]},
      "network":  {"residual_capacity": [...], "h2_demand": 1800},
      "budgets":  {"nfa85_fraction": 0.15, "nfa_budget": 1, "cm_budget": 0,
                   "theta": 0, "penalty": 1, "mode": "pin-crc"},
      "big_m": null,
      "series": "series.csv"
    }

``tech`` takes either ``capital_cost_annual`` or the raw triple; the yield is
``eta_sys`` (kg/MWh) or a fractional ``efficiency``. Series may be inline or
come from a CSV (``hour,residual_capacity_mw,price_eur_mwh,h2_demand_kg``)
named by ``series`` relative to the document, or passed explicitly.
"""
from __future__ import annotations

import copy
import csv
import json
import math
import os
from dataclasses import dataclass
from importlib import resources
from typing import Dict, List, Optional, Sequence, Union

import numpy as np

from .core import (DEFAULT_HHV_KWH_PER_KG, BudgetMode, BudgetPolicy, ElectrolyzerTech,
                   NetworkSeries, PriceSet, ScenarioData, ScenarioError, TariffSchedule,
                   efficiency_to_yield, validate_scenario)

SERIES_COLUMNS = ("hour", "residual_capacity_mw", "price_eur_mwh", "h2_demand_kg")
RESULT_COLUMNS = ("case", "sweep_param", "sweep_value", "p_grid", "p_el_fa", "p_el_nfa85",
                  "p_el_nfa", "ely_profit", "no_profit", "gap", "runtime_s", "status")
_TEXT_COLUMNS = {"case", "sweep_param", "status"}
_MONEY = {"eur": 1.0, "keur": 1000.0}


class SchemaError(ValueError):
    pass


def packaged(name: str) -> str:
    """Path of a data file shipped with the package (``reference.json``, ``toy.json``, ...)."""
    return str(resources.files("gridpact").joinpath("data", name))


def read_series(path: str) -> Dict[str, list]:
    with open(path, newline="") as fh:
        reader = csv.DictReader(fh)
        header = [h.strip() for h in (reader.fieldnames or [])]
        missing = [c for c in SERIES_COLUMNS if c not in header]
        if missing:
            raise SchemaError(f"{path}: missing column(s) {', '.join(missing)}")
        rows = [{k.strip(): v for k, v in r.items()} for r in reader]
    out = {c: [] for c in SERIES_COLUMNS}
    for lineno, r in enumerate(rows, start=2):
        for c in SERIES_COLUMNS:
            try:
                x = float(r[c])
            except (TypeError, ValueError):
                raise SchemaError(f"{path}:{lineno}: {c}={r[c]!r} is not a number") from None
            if not math.isfinite(x):
                raise SchemaError(f"{path}:{lineno}: {c} is not finite")
            out[c].append(x)
    hours = out["hour"]
    for k, h in enumerate(hours):
        if h != k:
            raise SchemaError(f"{path}: hours must be 0-based and consecutive; row {k + 2} "
                              f"has hour {h:g}, expected {k}")
    if not hours:
        raise SchemaError(f"{path}: no data rows")
    return out


def write_series(sc: ScenarioData, path: str):
    with open(path, "w", newline="") as fh:
        w = csv.writer(fh)
        w.writerow(SERIES_COLUMNS)
        for t in sc.T:
            w.writerow([t, repr(sc.residual(t)), repr(sc.prices.electricity[t]),
                        repr(sc.demand(t))])


def _series(value, hours: Optional[int], what: str):
    if isinstance(value, (int, float)):
        if hours is None:
            raise SchemaError(f"{what} is a scalar but the horizon length is unknown")
        return [float(value)] * hours
    return [float(x) for x in value]


def scenario_from_doc(doc: dict, base_dir: str = ".",
                      series_path: Optional[str] = None) -> ScenarioData:
    """Build and validate a ScenarioData from a parsed parameter document."""
    doc = copy.deepcopy(doc)
    for sec in ("tech", "tariffs", "prices", "network"):
        if sec not in doc:
            raise SchemaError(f"parameter document lacks section {sec!r}")
    unit = str(doc.get("money_unit", "EUR")).lower()
    if unit not in _MONEY:
        raise SchemaError(f"money_unit must be EUR or kEUR, got {doc.get('money_unit')!r}")
    k = _MONEY[unit]
    horizon = doc.get("horizon", {})
    hours = horizon.get("hours")

    series_path = series_path or doc.get("series")
    prices, network = dict(doc["prices"]), dict(doc["network"])
    if series_path:
        if not os.path.isabs(series_path) and not os.path.exists(series_path):
            series_path = os.path.join(base_dir, series_path)
        data = read_series(series_path)
        if hours is not None and hours != len(data["hour"]):
            raise SchemaError(f"horizon.hours={hours} but the series has {len(data['hour'])} rows")
        hours = len(data["hour"])
        prices["electricity"] = data["price_eur_mwh"]
        network["residual_capacity"] = data["residual_capacity_mw"]
        network["h2_demand"] = data["h2_demand_kg"]
    if hours is None:
        for v in (network.get("residual_capacity"), prices.get("electricity")):
            if isinstance(v, list):
                hours = len(v)
                break
    for key, sec in (("electricity", prices), ("residual_capacity", network),
                     ("h2_demand", network)):
        if key not in sec:
            raise SchemaError(f"no {key} series given (inline or via a series CSV)")

    t = doc["tech"]
    if "eta_sys" in t:
        eta = float(t["eta_sys"])
    elif "efficiency" in t:
        eta = efficiency_to_yield(float(t["efficiency"]),
                                  float(t.get("hhv_kwh_per_kg", DEFAULT_HHV_KWH_PER_KG)))
    else:
        raise SchemaError("tech needs eta_sys (kg/MWh) or efficiency (fraction)")
    if "capital_cost_annual" in t:
        tech = ElectrolyzerTech(float(t["capital_cost_annual"]) * k, float(t["alpha_min"]), eta,
                                None if t.get("capital_cost") is None else t["capital_cost"] * k,
                                t.get("discount_rate"), t.get("lifetime"))
    else:
        try:
            tech = ElectrolyzerTech.from_capital(float(t["capital_cost"]) * k,
                                                 float(t["discount_rate"]), int(t["lifetime"]),
                                                 float(t["alpha_min"]), eta)
        except KeyError as exc:
            raise SchemaError(f"tech lacks {exc.args[0]!r}") from None
    tf = doc["tariffs"]
    tariffs = TariffSchedule(float(tf["fa"]) * k, float(tf["nfa85"]) * k, float(tf["nfa"]) * k)
    crc_series = prices.get("crc_series")
    price_set = PriceSet(tuple(_series(prices["electricity"], hours, "electricity")),
                         float(prices["h2"]), float(prices["crc"]), float(prices["crc_plus"]),
                         None if crc_series is None else tuple(crc_series))
    net = NetworkSeries(tuple(_series(network["residual_capacity"], hours, "residual_capacity")),
                        tuple(_series(network["h2_demand"], hours, "h2_demand")))
    b = dict(doc.get("budgets", {}))
    if "mode" in b:
        b["mode"] = BudgetMode(b["mode"])
    budgets = BudgetPolicy(**b)
    sc = ScenarioData(
        hours=int(hours if hours is not None else len(net.residual_capacity)),
        tech=tech, tariffs=tariffs, prices=price_set, network=net, budgets=budgets,
        big_m=doc.get("big_m"), cost_scale=horizon.get("cost_scale"),
        name=doc.get("name", "scenario"),
    )
    return validate_scenario(sc)


def load_scenario(param_doc: Union[str, dict], series_path: Optional[str] = None) -> ScenarioData:
    """Read a parameter document (path or dict) and its series into a validated scenario."""
    if isinstance(param_doc, dict):
        return scenario_from_doc(param_doc, ".", series_path)
    with open(param_doc) as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise SchemaError(f"{param_doc}: not valid JSON ({exc})") from None
    return scenario_from_doc(doc, os.path.dirname(os.path.abspath(param_doc)), series_path)


def scenario_to_doc(sc: ScenarioData, series: Optional[str] = None) -> dict:
    """Parameter document (EUR units) for ``sc``; series inline unless ``series`` names a CSV."""
    doc = {
        "name": sc.name,
        "money_unit": "EUR",
        "horizon": {"hours": sc.hours, "cost_scale": sc.cost_scale},
        "tech": {"capital_cost_annual": sc.tech.capital_cost_annual,
                 "capital_cost": sc.tech.capital_cost, "discount_rate": sc.tech.discount_rate,
                 "lifetime": sc.tech.lifetime, "alpha_min": sc.tech.alpha_min,
                 "eta_sys": sc.tech.eta_sys},
        "tariffs": {"fa": sc.tariffs.fa, "nfa85": sc.tariffs.nfa85, "nfa": sc.tariffs.nfa},
        "prices": {"h2": sc.prices.h2, "crc": sc.prices.crc, "crc_plus": sc.prices.crc_plus},
        "network": {},
        "budgets": {"nfa85_fraction": sc.budgets.nfa85_fraction,
                    "nfa_budget": sc.budgets.nfa_budget, "cm_budget": sc.budgets.cm_budget,
                    "theta": sc.budgets.theta, "penalty": sc.budgets.penalty,
                    "mode": sc.budgets.mode.value},
        "big_m": sc.big_m,
    }
    if sc.prices.crc_series is not None:
        doc["prices"]["crc_series"] = list(sc.prices.crc_series)
    if series:
        doc["series"] = series
    else:
        doc["prices"]["electricity"] = list(sc.prices.electricity)
        doc["network"] = {"residual_capacity": list(sc.network.residual_capacity),
                          "h2_demand": list(sc.network.h2_demand)}
    return doc


def save_scenario(sc: ScenarioData, doc_path: str, series_path: Optional[str] = None):
    """Write the parameter document, and the series CSV if ``series_path`` is given."""
    ref = None
    if series_path:
        write_series(sc, series_path)
        ref = os.path.relpath(os.path.abspath(series_path),
                              os.path.dirname(os.path.abspath(doc_path)))
    with open(doc_path, "w") as fh:
        json.dump(scenario_to_doc(sc, ref), fh, indent=2)
        fh.write("\n")


@dataclass(frozen=True)
class SyntheticSpec:
    hours: int = 8760
    peak: float = 63.0  # MW
    depth: float = 0.3  # fraction of the peak lost in congestion windows
    congestion_hours: int = 4  # per day
    window_start: int = 17  # hour of day at which the window opens
    price_level: float = 60.0  # EUR/MWh
    price_volatility: float = 20.0
    demand_cap: float = 1800.0  # kg/h
    seed: int = 0

    def __post_init__(self):
        errors = []
        if self.hours < 1:
            errors.append("hours must be >= 1")
        if not 0 <= self.depth <= 1:
            errors.append("congestion depth must lie in [0, 1]")
        if not 0 <= self.congestion_hours <= 24:
            errors.append("congestion hours per day must lie in [0, 24]")
        if not 0 <= self.window_start < 24:
            errors.append("window_start must be an hour of day")
        if self.peak < 0 or self.demand_cap < 0 or self.price_volatility < 0:
            errors.append("peak, demand cap and volatility must be >= 0")
        if errors:
            raise ScenarioError(errors)


def synthetic_series(spec: SyntheticSpec):
    """(residual capacity, electricity price, demand) arrays for ``spec``."""
    t = np.arange(spec.hours)
    hod = t % 24
    in_window = ((hod - spec.window_start) % 24) < spec.congestion_hours
    residual = np.where(in_window, spec.peak * (1.0 - spec.depth), spec.peak)
    rng = np.random.default_rng(spec.seed)
    price = spec.price_level + spec.price_volatility * rng.uniform(-1.0, 1.0, spec.hours)
    demand = np.full(spec.hours, float(spec.demand_cap))
    return residual, price, demand


def generate_synthetic(spec: SyntheticSpec = SyntheticSpec(),
                       params: Union[str, dict, None] = None, **overrides) -> ScenarioData:
    """Synthetic scenario: reference parameters (or ``params``) with generated series.

    Residual capacity is the peak outside a daily congestion window and
    ``peak * (1 - depth)`` inside it; prices are uniform noise around the
    level; demand is flat at the cap. Deterministic for a fixed seed.
    ``overrides`` go through ``ScenarioData.with_overrides``.
    """
    if params is None:
        params = packaged("reference.json")
    if isinstance(params, str):
        with open(params) as fh:
            params = json.load(fh)
    doc = copy.deepcopy(params)
    doc.pop("series", None)
    residual, price, demand = synthetic_series(spec)
    doc.setdefault("horizon", {})["hours"] = spec.hours
    doc["prices"]["electricity"] = price.tolist()
    doc["network"] = {"residual_capacity": residual.tolist(), "h2_demand": demand.tolist()}
    doc["name"] = f"synthetic-seed{spec.seed}-{spec.hours}h"
    sc = scenario_from_doc(doc)
    if overrides:
        sc = validate_scenario(sc.with_overrides(**overrides))
    return sc


def reference_scenario(hours: int = 8760, seed: int = 0, **overrides) -> ScenarioData:
    """Reference synthetic year: 63 MW peak, 1800 kg/h demand, reference parameters."""
    return generate_synthetic(SyntheticSpec(hours=hours, seed=seed), **overrides)


def _fmt(key: str, value) -> str:
    if key in _TEXT_COLUMNS:
        return str(value)
    return repr(float(value))


def _json_num(x) -> Optional[float]:
    x = float(x)
    return None if math.isnan(x) else x


def write_results(rows: Sequence[dict], path: str, fmt: str = "csv"):
    """Write summary rows with a fixed column order (CSV or JSON)."""
    rows = list(rows)
    if not rows:
        raise ValueError("no result rows to write")
    fmt = fmt.lower()
    if fmt not in ("csv", "json"):
        raise ValueError(f"format must be csv or json, got {fmt!r}")
    clean = [{k: row.get(k, "" if k in _TEXT_COLUMNS else math.nan) for k in RESULT_COLUMNS}
             for row in rows]
    if fmt == "csv":
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(RESULT_COLUMNS)
            for row in clean:
                w.writerow([_fmt(k, row[k]) for k in RESULT_COLUMNS])
    else:
        # NaN is not valid JSON; missing numbers are written as null
        out = [{k: (str(r[k]) if k in _TEXT_COLUMNS else _json_num(r[k])) for k in RESULT_COLUMNS}
               for r in clean]
        with open(path, "w") as fh:
            json.dump(out, fh, indent=1)
            fh.write("\n")


def read_results(path: str) -> List[dict]:
    """Inverse of ``write_results``; the format is taken from the file extension/content."""
    with open(path) as fh:
        text = fh.read()
    if text.lstrip().startswith("["):
        data = json.loads(text)
        return [{k: (str(r[k]) if k in _TEXT_COLUMNS
                     else math.nan if r[k] is None else float(r[k])) for k in RESULT_COLUMNS}
                for r in data]
    reader = csv.DictReader(text.splitlines())
    if tuple(reader.fieldnames or ()) != RESULT_COLUMNS:
        raise SchemaError(f"{path}: unexpected header {reader.fieldnames}")
    return [{k: (r[k] if k in _TEXT_COLUMNS else float(r[k])) for k in RESULT_COLUMNS}
            for r in reader]
