"""Foreign-key completion under denial and cardinality constraints."""
from .analysis import analyze, build_hasse_forest, classify_pair, compute_hybrid_split
from .coloring import build_conflict_graph, coloring_lf, complete_fk, partition_view, solve_invalid_tuples
from .constraints import (
    ConstraintSet,
    ForeignKeyDC,
    LinearCC,
    dc_error_fraction,
    eval_cc_count,
    eval_dc_body,
    parse_constraints,
    relative_cc_error,
    relative_error,
)
from .exact import compute_combo_pool, solve_exact
from .ilp import Budget, build_system, greedy_fill, intervalize, solve_integer
from .model import Relation, Schema, init_join_view, load_relation, materialize_join, write_relation
from .pipeline import SolveConfig, SolveReport, check_solution, solve_hybrid

__version__ = "0.1.0"

__all__ = [
    "Budget",
    "ConstraintSet",
    "ForeignKeyDC",
    "LinearCC",
    "Relation",
    "Schema",
    "SolveConfig",
    "SolveReport",
    "analyze",
    "build_conflict_graph",
    "build_hasse_forest",
    "build_system",
    "check_solution",
    "classify_pair",
    "coloring_lf",
    "complete_fk",
    "compute_combo_pool",
    "compute_hybrid_split",
    "dc_error_fraction",
    "eval_cc_count",
    "eval_dc_body",
    "greedy_fill",
    "init_join_view",
    "intervalize",
    "load_relation",
    "materialize_join",
    "parse_constraints",
    "partition_view",
    "relative_cc_error",
    "relative_error",
    "solve_exact",
    "solve_hybrid",
    "solve_integer",
    "solve_invalid_tuples",
    "write_relation",
]
