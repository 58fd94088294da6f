"""Parameter sweeps over the four cases and switch-point detection."""
from __future__ import annotations

import enum
import hashlib
import inspect
import json
import logging
import math
import os
import warnings
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass, field
from typing import Callable, Dict, List, Optional, Sequence, Tuple

import numpy as np

from .core import ScenarioData, validate_scenario
from .data_io import RESULT_COLUMNS, scenario_to_doc, write_results
from .games import Case, GameOptions, SolutionBundle, solve_case

log = logging.getLogger(__name__)


class SweepError(RuntimeError):
    pass


class Axis(enum.Enum):
    CRC_PLUS_PRICE = "crc_plus"
    H2_PRICE = "h2"
    THETA = "theta"

    @classmethod
    def parse(cls, s) -> "Axis":
        if isinstance(s, Axis):
            return s
        key = str(s).strip().lower().replace("-", "").replace("_", "")
        aliases = {"crcplus": cls.CRC_PLUS_PRICE, "crcplusprice": cls.CRC_PLUS_PRICE,
                   "h2": cls.H2_PRICE, "h2price": cls.H2_PRICE, "theta": cls.THETA}
        if key not in aliases:
            raise ValueError(f"unknown sweep axis {s!r}; choose crcplus, h2 or theta")
        return aliases[key]


@dataclass(frozen=True)
class SweepPlan:
    axis: Axis
    values: Tuple[float, ...]
    cases: Tuple[Case, ...]
    base: ScenarioData
    options: GameOptions = field(default_factory=GameOptions)
    seed: int = 0

    def __post_init__(self):
        object.__setattr__(self, "axis", Axis.parse(self.axis))
        object.__setattr__(self, "values", tuple(float(v) for v in self.values))
        object.__setattr__(self, "cases", tuple(Case.parse(c) for c in self.cases))
        if not self.values:
            raise ValueError("sweep needs at least one value")
        if any(b <= a for a, b in zip(self.values, self.values[1:])):
            raise ValueError("sweep values must be strictly increasing")
        if not self.cases:
            raise ValueError("sweep needs at least one case")

    def points(self):
        return [(c, v) for c in self.cases for v in self.values]


def axis_values(start: float, stop: float, step: float) -> Tuple[float, ...]:
    """Inclusive range ``start..stop`` in steps of ``step``."""
    if not step > 0:
        raise ValueError("sweep step must be > 0")
    if stop < start:
        raise ValueError("sweep end lies before its start")
    n = int(math.floor((stop - start) / step + 1e-9))
    return tuple(float(np.round(start + k * step, 10)) for k in range(n + 1))


def scenario_hash(sc: ScenarioData) -> str:
    doc = scenario_to_doc(validate_scenario(sc))
    blob = json.dumps(doc, sort_keys=True, default=str).encode()
    return hashlib.sha256(blob).hexdigest()[:16]


@dataclass
class SweepResult:
    axis: Axis
    rows: List[dict]
    provenance: Dict[str, object]
    failures: List[dict] = field(default_factory=list)

    def rows_for(self, case) -> List[dict]:
        case = Case.parse(case)
        out = [r for r in self.rows if r["case"] == case.value]
        return sorted(out, key=lambda r: r["sweep_value"])

    def write(self, path: str, fmt: str = "csv", gnuplot: bool = False):
        if gnuplot:
            write_gnuplot(self, path)
        else:
            write_results(self.rows, path, fmt)


def _solve_point(args):
    base, axis, value, case, options = args
    sc = base.with_overrides(**{axis.value: value})
    try:
        bundle = solve_case(sc, case, options)
        row = bundle.summary(axis.value, value)
    except Exception as exc:  # recorded, the sweep goes on
        log.warning("%s at %s=%g failed: %s", case.value, axis.value, value, exc)
        row = {k: math.nan for k in RESULT_COLUMNS}
        row.update(case=case.value, sweep_param=axis.value, sweep_value=value,
                   status=f"error: {exc}")
    return row


def run_sweep(plan: SweepPlan, jobs: int = 1) -> SweepResult:
    """Solve every (case, value) point; failed points are kept as rows with their status."""
    base = validate_scenario(plan.base)
    tasks = [(base, plan.axis, v, c, plan.options) for c, v in plan.points()]
    if jobs > 1 and len(tasks) > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            rows = list(pool.map(_solve_point, tasks))
    else:
        rows = [_solve_point(t) for t in tasks]
    ok = [r for r in rows if r["status"] in ("optimal", "gap-optimal")]
    failures = [r for r in rows if r not in ok]
    if not ok:
        raise SweepError(f"all {len(rows)} sweep points failed")
    prov = {
        "scenario": base.name,
        "scenario_hash": scenario_hash(base),
        "seed": plan.seed,
        "rel_gap": plan.options.solver.rel_gap,
        "backend": plan.options.solver.resolved_backend(),
        "axis": plan.axis.value,
    }
    return SweepResult(plan.axis, rows, prov, failures)


def find_switch(result: SweepResult, case, field: str,
                predicate: Callable) -> Optional[float]:
    """First axis value at which ``predicate`` turns from false to true.

    ``predicate`` receives the field value, or ``(previous, current)`` if it
    takes two arguments. Rows with failed solves are skipped. Returns None if
    the predicate never flips (including when it already holds at the first
    point).
    """
    rows = result.rows_for(case)
    if not rows:
        raise ValueError(f"no rows for case {Case.parse(case).value}")
    if field not in rows[0]:
        raise KeyError(f"unknown field {field!r}; available: {', '.join(rows[0])}")
    pairwise = len(inspect.signature(predicate).parameters) == 2
    rows = [r for r in rows if not (isinstance(r[field], float) and math.isnan(r[field]))]
    prev_state, prev_val = None, None
    for r in rows:
        v = r[field]
        if pairwise:
            if prev_val is None:
                prev_val = v
                continue
            state = bool(predicate(prev_val, v))
            prev_val = v
        else:
            state = bool(predicate(v))
        if state and prev_state is False:
            return r["sweep_value"]
        prev_state = state
    return None


def monotone_violations(result: SweepResult, case, field: str, increasing: bool = False,
                        tol: float = 0.0) -> List[Tuple[float, float, float]]:
    """Points ``(value, previous, current)`` where ``field`` breaks the expected monotonicity."""
    rows = [r for r in result.rows_for(case) if r["status"] in ("optimal", "gap-optimal")]
    out = []
    for a, b in zip(rows, rows[1:]):
        step = b[field] - a[field]
        if (step < -tol) if increasing else (step > tol):
            out.append((b["sweep_value"], a[field], b[field]))
    return out


def check_monotone(result: SweepResult, case, field: str, increasing: bool = False,
                   tol: float = 0.0) -> bool:
    """True if monotone. A single violating point only warns; more than one fails."""
    bad = monotone_violations(result, case, field, increasing, tol)
    if len(bad) == 1:
        warnings.warn(f"{field} of {Case.parse(case).value} breaks monotonicity once at "
                      f"{bad[0][0]:g} ({bad[0][1]:.6g} -> {bad[0][2]:.6g})", stacklevel=2)
        return True
    return not bad


def write_gnuplot(result: SweepResult, path: str,
                  fields: Sequence[str] = ("p_grid", "p_el_fa", "p_el_nfa85", "p_el_nfa",
                                           "ely_profit", "no_profit")):
    """Whitespace-separated block: one line per axis value, one column per case x field."""
    cases = sorted({r["case"] for r in result.rows})
    values = sorted({r["sweep_value"] for r in result.rows})
    index = {(r["case"], r["sweep_value"]): r for r in result.rows}
    cols = [f"{c}:{f}" for c in cases for f in fields]
    with open(path, "w") as fh:
        fh.write(f"# {result.axis.value} " + " ".join(cols) + "\n")
        for v in values:
            cells = []
            for c in cases:
                r = index.get((c, v))
                for f in fields:
                    x = r[f] if r is not None else math.nan
                    cells.append("NaN" if x is None or math.isnan(x) else repr(float(x)))
            fh.write(f"{v!r} " + " ".join(cells) + "\n")


def default_jobs() -> int:
    return os.cpu_count() or 1
