"""Shared fixtures, naive reference evaluators and tiny-instance generators for the tests.

The reference evaluators here deliberately avoid the library's evaluation
code: they work on plain dicts and compare with ``operator``.
"""
from __future__ import annotations

import itertools
import json
import operator
import random
from fractions import Fraction
from pathlib import Path

from linksynth.constraints import ConstraintSet, constraints_from_dict
from linksynth.model import Relation, Schema, load_relation, load_schema

FIXTURES = Path(__file__).parent / "fixtures"
RUNNING = FIXTURES / "running"

# completed Persons from the running example (key -> h_id)
COMPLETED_FK = {1: 2, 2: 1, 3: 3, 4: 4, 5: 2, 6: 2, 7: 2, 8: 5, 9: 6}
CORRUPTED_FK = {**COMPLETED_FK, 1: 2, 2: 2}
# Area per person in the completed view
COMPLETED_AREA = {1: "Chicago", 2: "Chicago", 3: "Chicago", 4: "Chicago", 5: "Chicago",
             6: "Chicago", 7: "Chicago", 8: "NYC", 9: "NYC"}
# conflict graph of the running example: solid edges, then cross-Area (dashed) ones
CONFLICT_SOLID = [{1, 2}, {1, 3}, {1, 4}, {2, 3}, {2, 4}, {3, 4}, {1, 5}, {2, 5}, {2, 6}, {2, 7}, {8, 9}]
CONFLICT_CROSS = [{9, 1}, {9, 2}, {9, 3}, {9, 4}, {8, 1}, {8, 2}, {8, 3}, {8, 4}]
EXPECTED_COLORS = {1: 2, 2: 1, 3: 3, 4: 4, 5: 3, 6: 2, 7: 2, 8: 5, 9: 6}
LF_ORDER = [2, 1, 3, 4, 8, 9, 5, 6, 7]

OPS = {"=": operator.eq, "!=": operator.ne, "<": operator.lt, ">": operator.gt, "<=": operator.le, ">=": operator.ge}


def running_schemas() -> tuple[Schema, Schema]:
    return load_schema(RUNNING / "persons.schema.json"), load_schema(RUNNING / "housing.schema.json")


def running_instance() -> tuple[Relation, Relation, ConstraintSet]:
    s1, s2 = running_schemas()
    r1 = load_relation(RUNNING / "persons.csv", s1, "persons")
    r2 = load_relation(RUNNING / "housing.csv", s2, "housing")
    doc = json.loads((RUNNING / "constraints.json").read_text())
    return r1, r2, constraints_from_dict(doc, s1, s2)


def constraints(doc: dict, r1: Schema, r2: Schema) -> ConstraintSet:
    return constraints_from_dict(doc, r1, r2)


# -- naive reference evaluators ----------------------------------------------------


def rows_of(rel: Relation) -> list[dict]:
    return [dict(zip(rel.schema.names, r)) for r in rel.rows]


def naive_join(r1_hat: Relation, r2_hat: Relation) -> list[dict]:
    fk = r1_hat.schema.fk
    by_key = {r[r2_hat.schema.key]: r for r in rows_of(r2_hat)}
    out = []
    for r in rows_of(r1_hat):
        s = by_key[r[fk]]
        out.append({**s, **r})
    return out


def naive_cc_count(cc, joined: list[dict]) -> int:
    n = 0
    for row in joined:
        if all(row.get(p.column) is not None and OPS[p.op](row[p.column], p.value)
               for p in cc.r1_predicates + cc.r2_predicates):
            n += 1
    return n


def naive_rel_error(target: int, achieved: int) -> Fraction:
    return Fraction(abs(achieved - target), max(10, target))


def _body_holds(dc, tup: tuple[dict, ...]) -> bool:
    for p in dc.body:
        left = tup[p.var - 1][p.column]
        right = p.value if p.var2 is None else tup[p.var2 - 1][p.column2]
        if p.offset:
            right += p.offset
        if not OPS[p.op](left, right):
            return False
    return True


def naive_violators(dcs, r1_hat: Relation) -> set:
    """Keys of tuples in some violated DC instantiation, by trying every ordered tuple of distinct rows sharing an FK."""
    rows = rows_of(r1_hat)
    key, fk = r1_hat.schema.key, r1_hat.schema.fk
    groups: dict = {}
    for r in rows:
        groups.setdefault(r[fk], []).append(r)
    bad = set()
    for dc in dcs:
        for members in groups.values():
            for tup in itertools.permutations(members, dc.arity):
                if _body_holds(dc, tup):
                    bad.update(r[key] for r in tup)
    return bad


def naive_dc_error(dcs, r1_hat: Relation) -> Fraction:
    if len(r1_hat) == 0:
        return Fraction(0)
    return Fraction(len(naive_violators(dcs, r1_hat)), len(r1_hat))


def naive_check(r1_hat: Relation, r2_hat: Relation, cs: ConstraintSet) -> tuple[Fraction, list[Fraction]]:
    joined = naive_join(r1_hat, r2_hat)
    errs = [naive_rel_error(c.target, naive_cc_count(c, joined)) for c in cs.ccs]
    return naive_dc_error(cs.dcs, r1_hat), errs


# -- tiny random instances ---------------------------------------------------------

TINY_R1 = Schema.of(("pid", "integer", "primary-key"), ("Age", "integer"), ("Rel", "categorical"), ("fk", "integer", "foreign-key"))
TINY_R2 = Schema.of(("hid", "integer", "primary-key"), ("Area", "categorical"), ("Ten", "categorical"))
TINY_RELS = ("own", "sp", "ch")


def _tiny_dc(rng: random.Random, n: int) -> dict:
    kind = rng.randrange(4)
    if kind == 0:
        r = rng.choice(TINY_RELS)
        body = [{"t": 1, "col": "Rel", "op": "=", "value": r}, {"t": 2, "col": "Rel", "op": "=", "value": r}]
        return {"id": f"D{n}", "arity": 2, "body": body}
    if kind == 1:
        a, b = rng.choice(TINY_RELS), rng.choice(TINY_RELS)
        body = [
            {"t": 1, "col": "Rel", "op": "=", "value": a},
            {"t": 2, "col": "Rel", "op": "=", "value": b},
            {"t": 2, "col": "Age", "op": rng.choice(["<", ">"]), "t2": 1, "col2": "Age", "offset": rng.randint(-4, 4)},
        ]
        return {"id": f"D{n}", "arity": 2, "body": body}
    if kind == 2:
        body = [{"t": 1, "col": "Age", "op": "=", "t2": 2, "col2": "Age"}]
        return {"id": f"D{n}", "arity": 2, "body": body}
    body = [
        {"t": 1, "col": "Rel", "op": "=", "t2": 2, "col2": "Rel"},
        {"t": 2, "col": "Rel", "op": "=", "t2": 3, "col2": "Rel"},
    ]
    return {"id": f"D{n}", "arity": 3, "body": body}


def _tiny_cc(rng: random.Random, n: int) -> dict:
    where = []
    if rng.random() < 0.6:
        lo = rng.randint(0, 9)
        where.append({"col": "Age", "in": [lo, rng.randint(lo, 9)]})
    if rng.random() < 0.5 or not where:
        where.append({"col": "Rel", "op": "=", "value": rng.choice(TINY_RELS)})
    where.append({"col": "Area", "op": "=", "value": rng.choice("xy")})
    if rng.random() < 0.3:
        where.append({"col": "Ten", "op": "=", "value": rng.choice("pq")})
    return {"id": f"C{n}", "where": where, "target": 0}


def tiny_instance(seed: int, max_r1: int = 8, max_r2: int = 4, max_dcs: int = 3, max_ccs: int = 4):
    """Random instance; CC targets come from a random assignment half of the time."""
    rng = random.Random(seed)
    n1, n2 = rng.randint(1, max_r1), rng.randint(1, max_r2)
    r1_rows = [(k, rng.randint(0, 9), rng.choice(TINY_RELS), None) for k in range(1, n1 + 1)]
    r2_rows = [(k, rng.choice("xy"), rng.choice("pq")) for k in range(1, n2 + 1)]
    r1 = Relation(TINY_R1, r1_rows, "r1")
    r2 = Relation(TINY_R2, r2_rows, "r2")
    doc = {
        "ccs": [_tiny_cc(rng, n) for n in range(rng.randint(0, max_ccs))],
        "dcs": [_tiny_dc(rng, n) for n in range(rng.randint(0, max_dcs))],
    }
    cs = constraints_from_dict(doc, TINY_R1, TINY_R2)
    truth = r1.with_fk({k: rng.randint(1, n2) for k in r1.keys})
    joined = naive_join(truth, r2)
    planted = rng.random() < 0.5
    ccs = []
    seen = {}
    for c in cs.ccs:
        target = naive_cc_count(c, joined) if planted else rng.randint(0, 3)
        key = c.canonical()
        if key in seen:
            target = seen[key]
        seen[key] = target
        ccs.append(c.__class__(c.id, c.r1_predicates, c.r2_predicates, target, c.kinds))
    return r1, r2, ConstraintSet(tuple(ccs), cs.dcs)


def exhaustive_min_l1(rows: list[tuple[tuple[int, ...], int]], ub: list[int]) -> int:
    """Smallest total L1 residual over every integer vector within bounds (numpy, vectorized)."""
    import numpy as np

    grids = np.meshgrid(*[np.arange(u + 1) for u in ub], indexing="ij")
    xs = np.stack([g.ravel() for g in grids], axis=1)
    total = np.zeros(len(xs), dtype=np.int64)
    for idx, target in rows:
        s = xs[:, list(idx)].sum(axis=1) if idx else np.zeros(len(xs), dtype=np.int64)
        total += np.abs(s - target)
    return int(total.min())
