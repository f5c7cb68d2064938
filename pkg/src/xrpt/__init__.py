"""xrpt: constraint-guided on-line test generation for I/O EFSM models.

The package combines an off-line phase (bounded backward reachability
constraints, control-graph distances, search neighbourhoods) with an
on-line decision engine that drives a black-box system under test toward
trap-based test goals using a violations-degree fitness and tabu search.
"""

from .constraints import (
    ConstraintExpr, TRUE, FALSE, parse_constraint, parse_update, render,
    evaluate, push_negations, substitute, violations_degree, simplify,
)
from .solver import sat_model, optimize_model, is_weaker_or_equal, equivalent
from .efsm import (
    EfsmModel, EfsmState, Transition, Trap, TestGoal, TrapStatus, VarDecl,
    VarKind, load_model, save_model, load_bundled, model_from_dict,
    model_to_dict, trap_covered_by,
)
from .reachability import ReachabilitySet, generate_reachability, rpt_online_step
from .analysis import OfflineAnalysis, compute_dist, compute_neighbourhoods, TrapPartition
from .engine import EngineConfig, run as run_xrpt
from .sut import SimulatedSut, conforms
from .reports import TestReport, Verdict

__version__ = "0.1.0"

__all__ = [
    "ConstraintExpr", "TRUE", "FALSE", "parse_constraint", "parse_update",
    "render", "evaluate", "push_negations", "substitute", "violations_degree",
    "simplify", "sat_model", "optimize_model", "is_weaker_or_equal",
    "equivalent", "EfsmModel", "EfsmState", "Transition", "Trap", "TestGoal",
    "TrapStatus", "VarDecl", "VarKind", "load_model", "save_model",
    "load_bundled", "model_from_dict", "model_to_dict", "trap_covered_by",
    "ReachabilitySet", "generate_reachability", "rpt_online_step",
    "OfflineAnalysis", "compute_dist", "compute_neighbourhoods",
    "TrapPartition", "EngineConfig", "run_xrpt", "SimulatedSut", "conforms",
    "TestReport", "Verdict",
]
