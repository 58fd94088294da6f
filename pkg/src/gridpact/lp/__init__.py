"""Solver-agnostic MILP modelling layer."""
from .ir import (FEAS_TOL, INF, Constraint, LinExpr, ModelError, ModelIR, RawSolution, Sense,
                 Status, Var, VarKind, evaluate, max_violation, quicksum)
from .backends import (BACKENDS, BackendUnavailable, SolverOptions, available_backends,
                       compile_model, polish, solve)
from .diagnose import elastic_diagnosis

__all__ = [
    "FEAS_TOL", "INF", "Constraint", "LinExpr", "ModelError", "ModelIR", "RawSolution", "Sense",
    "Status", "Var", "VarKind", "evaluate", "max_violation", "quicksum", "BACKENDS",
    "BackendUnavailable", "SolverOptions", "available_backends", "compile_model", "polish",
    "solve", "elastic_diagnosis",
]
