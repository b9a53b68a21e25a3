"""End-to-end hybrid solve with per-phase timings and an independent checker."""
from __future__ import annotations

import json
import logging
import re
import statistics
import time
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any

from .analysis import analyze
from .coloring import complete_fk
from .constraints import ConstraintSet, cc_counts, dc_error_fraction, relative_error
from .exact import FillState, combo_universe, compute_combo_pool, fill_unused, relevant_columns, solve_exact
from .ilp import MODIFIED, Budget, IntegerSolver, build_system, greedy_fill, intervalize, solve_integer
from .model import JoinView, Relation, init_join_view, materialize_join

log = logging.getLogger(__name__)

SCHEMA_VERSION = 1
PHASES = ("pairwiseComparison", "recursion", "ilpSolver", "coloring", "total")


@dataclass
class SolveConfig:
    seed: int = 0
    marginal_mode: str = MODIFIED
    budget: Budget = field(default_factory=Budget)
    parallel_partitions: int = 0
    solver: IntegerSolver | None = None
    dump_lp: str | Path | None = None


@dataclass
class CCResult:
    id: str
    target: int
    achieved: int
    relative_error: Fraction


@dataclass
class SolveReport:
    per_cc: list[CCResult]
    dc_error: Fraction
    join_equal: bool
    fresh_r2_rows: int = 0
    invalid_tuple_count: int = 0
    timings: dict[str, float] = field(default_factory=dict)
    solver_exact: bool = True
    details: dict[str, Any] = field(default_factory=dict)

    @property
    def median_cc_error(self) -> Fraction:
        errs = [c.relative_error for c in self.per_cc]
        return Fraction(statistics.median(errs)) if errs else Fraction(0)

    @property
    def mean_cc_error(self) -> Fraction:
        errs = [c.relative_error for c in self.per_cc]
        return sum(errs, Fraction(0)) / len(errs) if errs else Fraction(0)

    @property
    def total_cc_error(self) -> Fraction:
        return sum((c.relative_error for c in self.per_cc), Fraction(0))

    @property
    def ok(self) -> bool:
        return self.dc_error == 0 and self.join_equal

    def to_dict(self, timings: bool = True) -> dict:
        d: dict[str, Any] = {
            "schemaVersion": SCHEMA_VERSION,
            "perCC": {
                c.id: {"target": c.target, "achieved": c.achieved, "relativeError": float(c.relative_error)}
                for c in self.per_cc
            },
            "medianCCError": float(self.median_cc_error),
            "meanCCError": float(self.mean_cc_error),
            "dcError": float(self.dc_error),
            "joinEqual": self.join_equal,
            "freshR2Rows": self.fresh_r2_rows,
            "invalidTupleCount": self.invalid_tuple_count,
            "solverExact": self.solver_exact,
        }
        if timings and self.timings:
            d["timings"] = {k: float(self.timings.get(k, 0.0)) for k in PHASES}
        d.update(self.details)
        return d

    def to_json(self, timings: bool = True) -> str:
        return dumps_fixed(self.to_dict(timings))


_FLOAT_MARK = re.compile(r'"\\u0000F([-0-9.]+)"')


def dumps_fixed(obj: Any) -> str:
    """JSON with every float written with exactly 6 decimals."""

    def mark(o):
        if isinstance(o, float):
            return "\0F" + f"{o:.6f}"
        if isinstance(o, dict):
            return {k: mark(v) for k, v in o.items()}
        if isinstance(o, (list, tuple)):
            return [mark(v) for v in o]
        return o

    text = json.dumps(mark(obj), indent=2)
    return _FLOAT_MARK.sub(lambda m: m.group(1), text) + "\n"


def join_equal(materialized: JoinView, view: JoinView) -> bool:
    """Same K1 rows, and equal values on every B cell the reference view has filled."""
    if sorted(materialized.keys) != sorted(view.keys):
        return False
    for i, k in enumerate(view.keys):
        j = materialized.position[k]
        for c in view.b_names:
            v = view.b_value(i, c)
            if v is not None and (not materialized.is_b(c) or materialized.b_value(j, c) != v):
                return False
    return True


def evaluate(constraints: ConstraintSet, view: JoinView, r1_hat: Relation) -> tuple[list[CCResult], Fraction]:
    ccs = constraints.user_ccs
    counts = cc_counts(ccs, view)
    per_cc = [CCResult(c.id, c.target, counts[c.id], relative_error(c.target, counts[c.id])) for c in ccs]
    return per_cc, dc_error_fraction(constraints.dcs, r1_hat)


def check_solution(r1_hat: Relation, r2_hat: Relation, view: JoinView | None, constraints: ConstraintSet) -> SolveReport:
    """Re-evaluate a completion from scratch: DC error, CC errors over the materialized join, join equality."""
    joined = materialize_join(r1_hat, r2_hat)
    per_cc, dc_err = evaluate(constraints, joined, r1_hat)
    eq = True if view is None else join_equal(joined, view)
    return SolveReport(per_cc, dc_err, eq)


def solve_hybrid(
    r1: Relation, r2: Relation, constraints: ConstraintSet, config: SolveConfig | None = None
) -> tuple[Relation, Relation, SolveReport]:
    config = config or SolveConfig()
    timings = {k: 0.0 for k in PHASES}
    start = time.perf_counter()

    phase_ccs = [c for c in constraints.ccs if c.r2_sets]
    columns = relevant_columns(phase_ccs, r2)
    view = init_join_view(r1, r2.schema, columns)
    universe = combo_universe(r2, columns)

    t = time.perf_counter()
    an = analyze(phase_ccs)
    s1_ids, s2_ids = set(an.split.s1), set(an.split.s2)
    s1 = [c for c in phase_ccs if c.id in s1_ids]
    s2 = [c for c in phase_ccs if c.id in s2_ids]
    timings["pairwiseComparison"] = (time.perf_counter() - t) * 1000

    t = time.perf_counter()
    state = FillState(view, phase_ccs, universe)
    _, exact_ledger = solve_exact(view, s1, an.forest, state=state, r2=r2)
    timings["recursion"] = (time.perf_counter() - t) * 1000

    solver_exact = True
    system_size = None
    t = time.perf_counter()
    if s2:
        free = [i for i in range(len(view)) if view.combo(i) is None]
        if config.marginal_mode == MODIFIED:
            probe = {c.id: c for c in s2}
            free = [i for i in free if any(c.match_r1(view.row_dict(i)) for c in probe.values())]
        space = intervalize(s2, view, rows=free, combos=universe, prune=True, guard_ccs=s1)
        achieved = {c.id: state.count(c.id) for c in phase_ccs}
        system = build_system(space, s2, config.marginal_mode, achieved=achieved, guard_ccs=s1)
        if config.dump_lp:
            Path(config.dump_lp).write_text(system.to_text(space), encoding="utf-8")
        sol = solve_integer(system, space.upper_bounds, config.budget, config.solver)
        solver_exact = sol.exact
        system_size = {"variables": system.num_vars, "rows": len(system.rows), "nodes": sol.nodes}
        greedy_fill(view, space, sol, state)
    timings["ilpSolver"] = (time.perf_counter() - t) * 1000

    t = time.perf_counter()
    pool = compute_combo_pool(phase_ccs, r2, columns)
    invalid = fill_unused(view, pool, r2, config.seed, state)
    timings["recursion"] += (time.perf_counter() - t) * 1000
    phase1_view = view.copy()

    t = time.perf_counter()
    r1_hat, r2_hat, crep = complete_fk(
        view, r1, r2, constraints.dcs, ccs=constraints.ccs, parallel=config.parallel_partitions, universe=universe
    )
    timings["coloring"] = (time.perf_counter() - t) * 1000
    timings["total"] = (time.perf_counter() - start) * 1000

    joined = materialize_join(r1_hat, r2_hat)
    per_cc, dc_err = evaluate(constraints, joined, r1_hat)
    report = SolveReport(
        per_cc,
        dc_err,
        join_equal(joined, phase1_view),
        crep.fresh_r2_rows,
        len(invalid),
        timings,
        solver_exact,
        {
            "split": {"s1": len(s1), "s2": len(s2)},
            "shortfalls": dict(sorted(exact_ledger.shortfalls.items())),
            "partitions": [
                {"combo": list(p.combo), "vertices": p.vertices, "edges": p.edges, "freshRows": p.fresh}
                for p in crep.partitions
            ],
            **({"ilpSystem": system_size} if system_size else {}),
        },
    )
    report.phase1_view = phase1_view  # type: ignore[attr-defined]
    report.final_view = crep.view  # type: ignore[attr-defined]
    log.info(
        "solved: %d CCs (%d exact, %d ILP), dc error %s, %d fresh R2 rows",
        len(per_cc), len(s1), len(s2), dc_err, crep.fresh_r2_rows,
    )
    return r1_hat, r2_hat, report
