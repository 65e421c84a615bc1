"""Moment-based bounds on first passage times of population CTMCs."""

from .constraints import FptSystem, LinearMomentConstraint, Measure, MomentVar, constraint_set, hybrid_constraint, martingale_constraint
from .model import FptQuery, ModelError, Objective, Pctmc, load, parse_model, parse_query, validate
from .sdp import MAXIMIZE, MINIMIZE, SdpProblem, assemble
from .solver import BoundResult, Solution, StandardSdp, Status, bound, export_sdpa, parse_sdpa, solve, solve_problem

__version__ = "0.1.0"

__all__ = [
    "BoundResult",
    "FptQuery",
    "FptSystem",
    "LinearMomentConstraint",
    "MAXIMIZE",
    "MINIMIZE",
    "Measure",
    "ModelError",
    "MomentVar",
    "Objective",
    "Pctmc",
    "SdpProblem",
    "Solution",
    "StandardSdp",
    "Status",
    "assemble",
    "bound",
    "constraint_set",
    "export_sdpa",
    "hybrid_constraint",
    "load",
    "martingale_constraint",
    "parse_model",
    "parse_query",
    "parse_sdpa",
    "solve",
    "solve_problem",
    "validate",
]
