"""Command-line entry point."""
from __future__ import annotations

import argparse
import json
import logging
import os
import sys
from pathlib import Path
from typing import Sequence

from . import benchgen, oracle
from .analysis import analyze
from .constraints import parse_constraints
from .errors import LinksynthError
from .ilp import ALL_WAY, MODIFIED, NONE, Budget
from .model import Relation, load_relation, load_schema, materialize_join, write_relation
from .pipeline import SolveConfig, check_solution, solve_hybrid

log = logging.getLogger("linksynth")

EXIT_OK = 0
EXIT_IO = 1
EXIT_USAGE = 2
EXIT_FAILED = 3


class UsageError(Exception):
    pass


def _schema_path(csv_path: Path, explicit: str | None) -> Path:
    if explicit:
        return Path(explicit)
    return csv_path.with_name(csv_path.stem + ".schema.json")


def _require(path: Path, what: str) -> Path:
    if not path.is_file():
        raise FileNotFoundError(f"{what} not found: {path}")
    return path


def _load(csv: str, schema: str | None, name: str) -> Relation:
    path = _require(Path(csv), f"{name} CSV")
    spath = _require(_schema_path(path, schema), f"{name} schema")
    return load_relation(path, load_schema(spath), name)


def _inputs(args):
    r1 = _load(args.r1, args.r1_schema, "r1")
    r2 = _load(args.r2, args.r2_schema, "r2")
    cpath = _require(Path(args.constraints), "constraints file")
    return r1, r2, parse_constraints(cpath, r1.schema, r2.schema)


def _seed(args) -> int:
    env = os.environ.get("LINKSYNTH_SEED")
    if env is not None:
        try:
            return int(env)
        except ValueError:
            raise UsageError(f"LINKSYNTH_SEED must be an integer, got {env!r}") from None
    return args.seed


def _solver(name: str):
    if name == "scipy":
        from .ilp import ScipyMilpSolver

        return ScipyMilpSolver()
    return None


def cmd_solve(args) -> int:
    out = Path(args.output)
    r1, r2, cs = _inputs(args)
    out.mkdir(parents=True, exist_ok=True)
    config = SolveConfig(
        seed=_seed(args),
        marginal_mode=args.marginals,
        budget=Budget(args.ilp_budget_nodes, args.ilp_budget_seconds),
        parallel_partitions=args.parallel_partitions,
        solver=_solver(args.solver),
        dump_lp=args.dump_lp,
    )
    r1_hat, r2_hat, report = solve_hybrid(r1, r2, cs, config)
    write_relation(r1_hat, out / "r1_completed.csv")
    write_relation(r2_hat, out / "r2_augmented.csv")
    (out / "report.json").write_text(report.to_json(timings=not args.no_timings), encoding="utf-8")
    satisfied = sum(1 for c in report.per_cc if c.relative_error == 0)
    print(f"{satisfied}/{len(report.per_cc)} CCs satisfied, dcError {float(report.dc_error):.6f}, "
          f"joinEqual {str(report.join_equal).lower()}, {report.fresh_r2_rows} fresh R2 rows")
    return EXIT_OK if report.ok else EXIT_FAILED


def cmd_check(args) -> int:
    r1_hat, r2_hat, cs = _inputs(args)
    view = None
    if args.reference_r1:
        if not args.reference_r2:
            raise UsageError("--reference-r1 needs --reference-r2")
        ref1 = _load(args.reference_r1, args.r1_schema, "reference r1")
        ref2 = _load(args.reference_r2, args.r2_schema, "reference r2")
        view = materialize_join(ref1, ref2)
    report = check_solution(r1_hat, r2_hat, view, cs)
    text = report.to_json(timings=False)
    if args.output:
        Path(args.output).write_text(text, encoding="utf-8")
    else:
        sys.stdout.write(text)
    return EXIT_OK if report.ok else EXIT_FAILED


def cmd_classify(args) -> int:
    r1, r2, cs = _inputs(args)
    an = analyze([c for c in cs.ccs if c.r2_sets])
    matrix = json.dumps(an.matrix_json(), indent=2) + "\n"
    if args.output:
        out = Path(args.output)
        out.mkdir(parents=True, exist_ok=True)
        (out / "relations.json").write_text(matrix, encoding="utf-8")
        (out / "hasse.dot").write_text(an.forest.to_dot(), encoding="utf-8")
    else:
        sys.stdout.write(matrix)
        sys.stdout.write(an.forest.to_dot())
    return EXIT_OK


def cmd_gen(args) -> int:
    try:
        config = benchgen.BenchConfig(
            scale=args.scale,
            seed=_seed(args),
            dc_set=args.dc_set,
            cc_set=args.cc_set,
            cc_count=args.cc_count,
            extra_r2_columns=args.extra_r2_columns,
        )
    except ValueError as e:
        raise UsageError(str(e)) from None
    inst = benchgen.generate_instance(config)
    benchgen.write_instance(inst, args.output)
    print(f"{len(inst.r1)} persons, {len(inst.r2)} households, {len(inst.constraints.ccs)} CCs, "
          f"{len(inst.constraints.dcs)} DCs -> {args.output}")
    return EXIT_OK


def cmd_oracle(args) -> int:
    r1, r2, cs = _inputs(args)
    ok, witness = oracle.brute_force_decide(r1, r2, cs, args.limit)
    doc = {"satisfiable": ok, "witness": None if witness is None else {str(k): v for k, v in witness.items()}}
    sys.stdout.write(json.dumps(doc, indent=2) + "\n")
    return EXIT_OK


def cmd_reduce(args) -> int:
    path = _require(Path(args.cnf), "CNF file")
    formula = oracle.parse_dimacs(path.read_text(encoding="utf-8"))
    r1, r2, cs = oracle.reduce_nae3sat(formula)
    oracle.write_instance(args.output, r1, r2, cs)
    print(f"{len(r1)} R1 rows, {len(r2)} R2 rows -> {args.output}")
    return EXIT_OK


def _add_inputs(p: argparse.ArgumentParser) -> None:
    p.add_argument("--r1", required=True, help="R1 CSV")
    p.add_argument("--r2", required=True, help="R2 CSV")
    p.add_argument("--constraints", required=True, help="constraints JSON")
    p.add_argument("--r1-schema", help="R1 schema JSON (default: <r1 stem>.schema.json)")
    p.add_argument("--r2-schema", help="R2 schema JSON (default: <r2 stem>.schema.json)")


def build_parser() -> argparse.ArgumentParser:
    parser = argparse.ArgumentParser(prog="linksynth", description="Complete a missing foreign key under DCs and CCs.")
    parser.add_argument("--log-level", default="WARNING", choices=["DEBUG", "INFO", "WARNING", "ERROR"])
    sub = parser.add_subparsers(dest="command", required=True)

    p = sub.add_parser("solve", help="run the full pipeline")
    _add_inputs(p)
    p.add_argument("-o", "--output", required=True, help="output directory")
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--marginals", choices=[ALL_WAY, MODIFIED, NONE], default=MODIFIED)
    p.add_argument("--ilp-budget-nodes", type=int, default=Budget().nodes)
    p.add_argument("--ilp-budget-seconds", type=float, default=Budget().seconds)
    p.add_argument("--solver", choices=["builtin", "scipy"], default="builtin")
    p.add_argument("--dump-lp", help="write the integer system to this file")
    p.add_argument("--parallel-partitions", type=int, default=0)
    p.add_argument("--no-timings", action="store_true", help="omit wall-clock timings from report.json")
    p.set_defaults(func=cmd_solve)

    p = sub.add_parser("check", help="re-evaluate a completed instance")
    _add_inputs(p)
    p.add_argument("--reference-r1", help="completed R1 whose join is the reference view")
    p.add_argument("--reference-r2", help="R2 matching --reference-r1")
    p.add_argument("-o", "--output", help="write the report here instead of stdout")
    p.set_defaults(func=cmd_check)

    p = sub.add_parser("classify", help="pairwise CC relations and Hasse forest")
    _add_inputs(p)
    p.add_argument("-o", "--output", help="directory for relations.json and hasse.dot")
    p.set_defaults(func=cmd_classify)

    p = sub.add_parser("gen", help="generate a benchmark instance")
    p.add_argument("-o", "--output", required=True)
    p.add_argument("--scale", type=float, default=1.0)
    p.add_argument("--seed", type=int, default=0)
    p.add_argument("--dc-set", choices=["good8", "all12"], default="all12")
    p.add_argument("--cc-set", choices=["good", "bad"], default="good")
    p.add_argument("--cc-count", type=int, default=1001)
    p.add_argument("--extra-r2-columns", type=int, default=0)
    p.set_defaults(func=cmd_gen)

    p = sub.add_parser("oracle", help="exhaustive decision on a tiny instance")
    _add_inputs(p)
    p.add_argument("--limit", type=int, default=oracle.MAX_ASSIGNMENTS)
    p.set_defaults(func=cmd_oracle)

    p = sub.add_parser("reduce-nae3sat", help="build an instance from a DIMACS CNF")
    p.add_argument("--cnf", required=True)
    p.add_argument("-o", "--output", required=True)
    p.set_defaults(func=cmd_reduce)
    return parser


def run(argv: Sequence[str] | None = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except SystemExit as e:
        return int(e.code or 0)
    logging.basicConfig(level=args.log_level, format="%(levelname)s %(name)s: %(message)s")
    try:
        return args.func(args)
    except UsageError as e:
        print(f"linksynth: error: {e}", file=sys.stderr)
        return EXIT_USAGE
    except (OSError, LinksynthError) as e:
        print(f"linksynth: error: {e}", file=sys.stderr)
        return EXIT_IO


def main() -> None:
    sys.exit(run())
