"""Cardinality constraints (CCs) over the join view and FK denial constraints (DCs) on R1."""
from __future__ import annotations

import json
from bisect import bisect_left, bisect_right
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from pathlib import Path
from typing import Any, Iterator, Mapping, Sequence

from .errors import (
    ConstraintError,
    ContradictoryConstraints,
    ForbiddenFKReference,
    MalformedRange,
    UnknownColumn,
)
from .model import CATEGORICAL, FOREIGN_KEY, INTEGER, PRIMARY_KEY, JoinView, Relation, Schema

OPS = ("=", "!=", "<", ">", "<=", ">=")
_OP_ALIASES = {"==": "=", "≠": "!=", "<>": "!=", "≤": "<=", "≥": ">="}
_FLIP = {"=": "=", "!=": "!=", "<": ">", ">": "<", "<=": ">=", ">=": "<="}


def normalize_op(op: str) -> str:
    op = _OP_ALIASES.get(op, op)
    if op not in OPS:
        raise ConstraintError(f"unknown operator {op!r}")
    return op


def compare(a, op: str, b) -> bool:
    if op == "=":
        return a == b
    if op == "!=":
        return a != b
    if op == "<":
        return a < b
    if op == ">":
        return a > b
    if op == "<=":
        return a <= b
    return a >= b


@dataclass(frozen=True)
class Predicate:
    """``t[var].column op value`` or ``t[var].column op t[var2].column2 + offset``."""

    var: int
    column: str
    op: str
    value: Any = None
    var2: int | None = None
    column2: str | None = None
    offset: int = 0

    @property
    def binary(self) -> bool:
        return self.var2 is not None

    def holds(self, left, right=None) -> bool:
        if left is None:
            return False
        if self.var2 is None:
            return compare(left, self.op, self.value)
        if right is None:
            return False
        return compare(left, self.op, right + self.offset if self.offset else right)

    def __str__(self) -> str:
        if self.var2 is None:
            return f"t{self.var}.{self.column} {self.op} {self.value!r}"
        off = f" {'+' if self.offset >= 0 else '-'} {abs(self.offset)}" if self.offset else ""
        return f"t{self.var}.{self.column} {self.op} t{self.var2}.{self.column2}{off}"


# -- canonical value sets, used for classification and duplicate detection ----


@dataclass(frozen=True)
class IntRange:
    """Closed integer interval; None means unbounded."""

    lo: int | None = None
    hi: int | None = None

    def is_empty(self) -> bool:
        return self.lo is not None and self.hi is not None and self.lo > self.hi

    def contains(self, v) -> bool:
        return (self.lo is None or v >= self.lo) and (self.hi is None or v <= self.hi)

    def subset_of(self, other: "IntRange") -> bool:
        if self.is_empty():
            return True
        lo_ok = other.lo is None or (self.lo is not None and self.lo >= other.lo)
        hi_ok = other.hi is None or (self.hi is not None and self.hi <= other.hi)
        return lo_ok and hi_ok

    def disjoint_with(self, other: "IntRange") -> bool:
        if self.is_empty() or other.is_empty():
            return True
        lo = max((x for x in (self.lo, other.lo) if x is not None), default=None)
        hi = min((x for x in (self.hi, other.hi) if x is not None), default=None)
        return lo is not None and hi is not None and lo > hi

    def key(self) -> tuple:
        return ("int", self.lo, self.hi)

    def intersect(self, other: "IntRange") -> "IntRange":
        lo = max((x for x in (self.lo, other.lo) if x is not None), default=None)
        hi = min((x for x in (self.hi, other.hi) if x is not None), default=None)
        return IntRange(lo, hi)


@dataclass(frozen=True)
class CatSet:
    """Either a finite allowed set, or everything except ``excluded``."""

    allowed: frozenset | None = None
    excluded: frozenset = frozenset()

    def __post_init__(self):
        if self.allowed is not None and self.excluded:
            object.__setattr__(self, "allowed", frozenset(self.allowed - self.excluded))
            object.__setattr__(self, "excluded", frozenset())

    def is_empty(self) -> bool:
        return self.allowed is not None and not self.allowed

    def contains(self, v) -> bool:
        if self.allowed is not None:
            return v in self.allowed
        return v not in self.excluded

    def subset_of(self, other: "CatSet") -> bool:
        if self.allowed is not None:
            return all(other.contains(v) for v in self.allowed)
        if other.allowed is not None:
            return False
        return other.excluded <= self.excluded

    def disjoint_with(self, other: "CatSet") -> bool:
        if self.allowed is not None:
            return not any(other.contains(v) for v in self.allowed)
        if other.allowed is not None:
            return not any(self.contains(v) for v in other.allowed)
        return False

    def key(self) -> tuple:
        if self.allowed is not None:
            return ("in", tuple(sorted(self.allowed)))
        return ("not-in", tuple(sorted(self.excluded)))

    def intersect(self, other: "CatSet") -> "CatSet":
        if self.allowed is not None:
            return CatSet(frozenset(v for v in self.allowed if other.contains(v)))
        if other.allowed is not None:
            return other.intersect(self)
        return CatSet(None, self.excluded | other.excluded)


def _value_set(preds: Sequence[Predicate], kind: str):
    if kind == INTEGER:
        r = IntRange()
        for p in preds:
            v = p.value
            if p.op == "=":
                r = r.intersect(IntRange(v, v))
            elif p.op == "<":
                r = r.intersect(IntRange(None, v - 1))
            elif p.op == "<=":
                r = r.intersect(IntRange(None, v))
            elif p.op == ">":
                r = r.intersect(IntRange(v + 1, None))
            elif p.op == ">=":
                r = r.intersect(IntRange(v, None))
            else:
                raise MalformedRange(f"'!=' on integer column {p.column!r} is not an interval")
        return r
    s = CatSet()
    for p in preds:
        if p.op == "=":
            s = s.intersect(CatSet(frozenset([p.value])))
        elif p.op == "!=":
            s = s.intersect(CatSet(None, frozenset([p.value])))
        else:
            raise ConstraintError(f"operator {p.op!r} needs an integer column, got {p.column!r}")
    return s


@dataclass(frozen=True)
class LinearCC:
    id: str
    r1_predicates: tuple[Predicate, ...]
    r2_predicates: tuple[Predicate, ...]
    target: int
    kinds: tuple[tuple[str, str], ...] = ()
    internal: bool = False
    r1_sets: dict = field(default_factory=dict, init=False, compare=False, hash=False, repr=False)
    r2_sets: dict = field(default_factory=dict, init=False, compare=False, hash=False, repr=False)

    def __post_init__(self):
        if self.target < 0:
            raise ConstraintError(f"CC {self.id}: target must be non-negative")
        kinds = dict(self.kinds)
        for preds, out in ((self.r1_predicates, self.r1_sets), (self.r2_predicates, self.r2_sets)):
            by_col: dict[str, list[Predicate]] = defaultdict(list)
            for p in preds:
                by_col[p.column].append(p)
            for col, ps in by_col.items():
                out[col] = _value_set(ps, kinds.get(col, INTEGER if isinstance(ps[0].value, int) else CATEGORICAL))

    @property
    def r1_columns(self) -> list[str]:
        return list(self.r1_sets)

    @property
    def r2_columns(self) -> list[str]:
        return list(self.r2_sets)

    def all_sets(self) -> dict:
        return {**self.r1_sets, **self.r2_sets}

    def canonical(self) -> tuple:
        return tuple(sorted((c, s.key()) for c, s in self.all_sets().items()))

    def match_r1(self, row: Mapping) -> bool:
        return all(s.contains(row[c]) for c, s in self.r1_sets.items())

    def match_r2(self, row: Mapping) -> bool:
        for c, s in self.r2_sets.items():
            v = row[c]
            if v is None or not s.contains(v):
                return False
        return True

    def match_r2_combo(self, combo: Sequence, columns: Sequence[str]) -> bool:
        """True iff ``combo`` over ``columns`` satisfies every R2 condition.

        Conditions on columns outside ``columns`` make the match fail.
        """
        pos = {c: i for i, c in enumerate(columns)}
        for c, s in self.r2_sets.items():
            i = pos.get(c)
            if i is None or combo[i] is None or not s.contains(combo[i]):
                return False
        return True

    def matches(self, row: Mapping) -> bool:
        return self.match_r1(row) and self.match_r2(row)

    def describe(self) -> str:
        parts = [str(p).replace("t1.", "") for p in self.r1_predicates + self.r2_predicates]
        return f"{self.id}: |{' AND '.join(parts) or 'TRUE'}| = {self.target}"


@dataclass(frozen=True)
class ForeignKeyDC:
    id: str
    arity: int
    body: tuple[Predicate, ...]

    def __post_init__(self):
        if self.arity < 2:
            raise ConstraintError(f"DC {self.id}: arity must be at least 2")
        used = max((max(p.var, p.var2 or 0) for p in self.body), default=0)
        if used > self.arity or any(p.var < 1 or (p.var2 is not None and p.var2 < 1) for p in self.body):
            raise ConstraintError(f"DC {self.id}: tuple variable out of range 1..{self.arity}")

    @property
    def columns(self) -> set[str]:
        out = {p.column for p in self.body}
        out |= {p.column2 for p in self.body if p.column2}
        return out


@dataclass(frozen=True)
class ConstraintSet:
    ccs: tuple[LinearCC, ...] = ()
    dcs: tuple[ForeignKeyDC, ...] = ()

    def __post_init__(self):
        object.__setattr__(self, "ccs", tuple(self.ccs))
        object.__setattr__(self, "dcs", tuple(self.dcs))
        ids = [c.id for c in self.ccs] + [d.id for d in self.dcs]
        dup = sorted({i for i in ids if ids.count(i) > 1})
        if dup:
            raise ConstraintError(f"duplicate constraint ids {dup}")
        seen: dict[tuple, LinearCC] = {}
        for cc in self.ccs:
            key = cc.canonical()
            other = seen.get(key)
            if other is not None and other.target != cc.target:
                raise ContradictoryConstraints(
                    f"CCs {other.id} and {cc.id} select the same rows with targets "
                    f"{other.target} and {cc.target}"
                )
            seen.setdefault(key, cc)

    @property
    def user_ccs(self) -> list[LinearCC]:
        return [c for c in self.ccs if not c.internal]

    def to_dict(self) -> dict:
        return constraints_to_dict(self)


# -- DSL ---------------------------------------------------------------------


def _coerce(value, kind: str, where: str):
    if kind == INTEGER:
        if isinstance(value, bool) or not isinstance(value, int):
            if isinstance(value, float) and value.is_integer():
                return int(value)
            raise ConstraintError(f"{where}: expected integer constant, got {value!r}")
        return value
    if isinstance(value, (dict, list)) or value is None:
        raise ConstraintError(f"{where}: expected scalar constant, got {value!r}")
    return str(value)


def _cc_column(col: str, r1: Schema, r2: Schema, where: str) -> tuple[str, str]:
    for side, schema in (("r1", r1), ("r2", r2)):
        if schema.has(col):
            c = schema.column(col)
            if c.role == FOREIGN_KEY:
                raise ForbiddenFKReference(f"{where}: CC may not reference the foreign key {col!r}")
            if c.role == PRIMARY_KEY:
                raise ConstraintError(f"{where}: CC may not reference key column {col!r}")
            return side, c.kind
    raise UnknownColumn(f"{where}: unknown column {col!r}")


def parse_cc(obj: Mapping, r1: Schema, r2: Schema) -> LinearCC:
    cid = str(obj.get("id", ""))
    if not cid:
        raise ConstraintError("CC without id")
    if "target" not in obj:
        raise ConstraintError(f"CC {cid}: missing target")
    target = _coerce(obj["target"], INTEGER, f"CC {cid}")
    r1p: list[Predicate] = []
    r2p: list[Predicate] = []
    kinds: dict[str, str] = {}
    for atom in obj.get("where", []):
        col = atom.get("col")
        if not col:
            raise ConstraintError(f"CC {cid}: predicate without col")
        side, kind = _cc_column(col, r1, r2, f"CC {cid}")
        kinds[col] = kind
        out = r1p if side == "r1" else r2p
        if "in" in atom:
            rng = atom["in"]
            if kind != INTEGER:
                raise MalformedRange(f"CC {cid}: range on non-integer column {col!r}")
            if (
                not isinstance(rng, list)
                or len(rng) != 2
                or any(isinstance(v, bool) or not isinstance(v, int) for v in rng)
                or rng[0] > rng[1]
            ):
                raise MalformedRange(f"CC {cid}: malformed range {rng!r} on {col!r}")
            out.append(Predicate(1, col, ">=", rng[0]))
            out.append(Predicate(1, col, "<=", rng[1]))
        else:
            op = normalize_op(atom.get("op", "="))
            if "value" not in atom:
                raise ConstraintError(f"CC {cid}: predicate on {col!r} without value")
            out.append(Predicate(1, col, op, _coerce(atom["value"], kind, f"CC {cid}")))
    cc = LinearCC(cid, tuple(r1p), tuple(r2p), target, tuple(sorted(kinds.items())), bool(obj.get("internal", False)))
    return cc


def parse_dc(obj: Mapping, r1: Schema) -> ForeignKeyDC:
    did = str(obj.get("id", ""))
    if not did:
        raise ConstraintError("DC without id")
    arity = obj.get("arity")
    body = []
    for atom in obj.get("body", []):
        col = atom.get("col")
        t = atom.get("t", 1)
        for name in (col, atom.get("col2")):
            if name is None:
                continue
            if not r1.has(name):
                raise UnknownColumn(f"DC {did}: unknown column {name!r}")
            if r1.column(name).role == FOREIGN_KEY:
                raise ForbiddenFKReference(f"DC {did}: body may not reference the foreign key {name!r}")
        if col is None:
            raise ConstraintError(f"DC {did}: atom without col")
        kind = r1.kind(col)
        op = normalize_op(atom.get("op", "="))
        if op not in ("=", "!=") and kind != INTEGER:
            raise ConstraintError(f"DC {did}: operator {op!r} on non-integer column {col!r}")
        if "t2" in atom or "col2" in atom:
            col2 = atom.get("col2", col)
            if r1.kind(col2) != kind:
                raise ConstraintError(f"DC {did}: comparing {col!r} with {col2!r} of another kind")
            offset = atom.get("offset", 0)
            if isinstance(offset, bool) or not isinstance(offset, int):
                raise ConstraintError(f"DC {did}: offset must be an integer")
            if offset and kind != INTEGER:
                raise ConstraintError(f"DC {did}: offset on non-integer column {col!r}")
            body.append(Predicate(int(t), col, op, None, int(atom.get("t2", t)), col2, offset))
        else:
            if "value" not in atom:
                raise ConstraintError(f"DC {did}: atom on {col!r} without value or t2")
            body.append(Predicate(int(t), col, op, _coerce(atom["value"], kind, f"DC {did}")))
    used = max((max(p.var, p.var2 or 0) for p in body), default=2)
    if arity is None:
        arity = used
    if not isinstance(arity, int) or arity < 2:
        raise ConstraintError(f"DC {did}: arity must be an integer >= 2")
    if used != arity and body:
        raise ConstraintError(f"DC {did}: arity {arity} but body uses t{used}")
    return ForeignKeyDC(did, arity, tuple(body))


def constraints_from_dict(doc: Mapping, r1: Schema, r2: Schema) -> ConstraintSet:
    if not isinstance(doc, Mapping):
        raise ConstraintError("constraint document must be a JSON object")
    ccs = [parse_cc(c, r1, r2) for c in doc.get("ccs", [])]
    dcs = [parse_dc(d, r1) for d in doc.get("dcs", [])]
    return ConstraintSet(tuple(ccs), tuple(dcs))


def parse_constraints(path: str | Path, r1: Schema, r2: Schema) -> ConstraintSet:
    with open(path, encoding="utf-8") as fh:
        try:
            doc = json.load(fh)
        except json.JSONDecodeError as exc:
            raise ConstraintError(f"{path}: invalid JSON: {exc}") from None
    return constraints_from_dict(doc, r1, r2)


def _pred_to_dict(p: Predicate) -> dict:
    if p.var2 is None:
        return {"t": p.var, "col": p.column, "op": p.op, "value": p.value}
    d = {"t": p.var, "col": p.column, "op": p.op, "t2": p.var2, "col2": p.column2}
    if p.offset:
        d["offset"] = p.offset
    return d


def cc_to_dict(cc: LinearCC) -> dict:
    where = [{"col": p.column, "op": p.op, "value": p.value} for p in cc.r1_predicates + cc.r2_predicates]
    d: dict = {"id": cc.id, "where": where, "target": cc.target}
    if cc.internal:
        d["internal"] = True
    return d


def constraints_to_dict(cs: ConstraintSet) -> dict:
    return {
        "ccs": [cc_to_dict(c) for c in cs.ccs],
        "dcs": [
            {"id": d.id, "arity": d.arity, "body": [_pred_to_dict(p) for p in d.body]} for d in cs.dcs
        ],
    }


# -- evaluation --------------------------------------------------------------


def eval_cc_count(cc: LinearCC, view: JoinView) -> int:
    n = 0
    for i in range(len(view)):
        row = view.row_dict(i)
        if cc.match_r1(row) and cc.match_r2(row):
            n += 1
    return n


def cc_counts(ccs: Sequence[LinearCC], view: JoinView) -> dict[str, int]:
    """Counts for many CCs at once, grouping rows by their referenced values."""
    r1_cols = sorted({c for cc in ccs for c in cc.r1_sets})
    r2_cols = sorted({c for cc in ccs for c in cc.r2_sets})
    r1_vals = [view.r1_column(c) for c in r1_cols]
    r2_vals = [view.b_column(c) for c in r2_cols]
    groups: dict[tuple, Counter] = defaultdict(Counter)
    for i in range(len(view)):
        groups[tuple(v[i] for v in r2_vals)][tuple(v[i] for v in r1_vals)] += 1
    out = {}
    for cc in ccs:
        n = 0
        for b, sigs in groups.items():
            if not cc.match_r2(dict(zip(r2_cols, b))):
                continue
            for sig, cnt in sigs.items():
                if cc.match_r1(dict(zip(r1_cols, sig))):
                    n += cnt
        out[cc.id] = n
    return out


def relative_error(target: int, achieved: int) -> Fraction:
    return Fraction(abs(achieved - target), max(10, target))


def relative_cc_error(cc: LinearCC, view: JoinView) -> Fraction:
    return relative_error(cc.target, eval_cc_count(cc, view))


def eval_dc_body(dc: ForeignKeyDC, tuples: Sequence[Mapping]) -> bool:
    if len(tuples) != dc.arity:
        raise ConstraintError(f"DC {dc.id} needs {dc.arity} tuples, got {len(tuples)}")
    for p in dc.body:
        left = tuples[p.var - 1][p.column]
        right = tuples[p.var2 - 1][p.column2] if p.var2 is not None else None
        if not p.holds(left, right):
            return False
    return True


def iter_violations(
    dc: ForeignKeyDC, columns: Mapping[str, Sequence], n: int
) -> Iterator[tuple[int, ...]]:
    """Yield position tuples ``(i1..ik)`` of distinct rows on which the DC body holds.

    ``columns`` maps column name to values aligned with positions ``0..n-1``.
    Each satisfying assignment of tuple variables is yielded once, so a
    symmetric body yields every permutation; callers dedupe as sets.
    """
    k = dc.arity
    unary: dict[int, list[Predicate]] = defaultdict(list)
    binary: list[Predicate] = []
    for p in dc.body:
        if p.var2 is None or p.var2 == p.var:
            unary[p.var].append(p)
        else:
            binary.append(p)

    def unary_ok(p: Predicate, i: int) -> bool:
        left = columns[p.column][i]
        if p.var2 is None:
            return p.holds(left)
        return p.holds(left, columns[p.column2][i])

    cand = [[i for i in range(n) if all(unary_ok(p, i) for p in unary[v])] for v in range(1, k + 1)]
    if any(not c for c in cand):
        return

    # For variable m, predicates whose other variable is bound earlier.
    # Each is rewritten as (column of t_m, op, other var, other column, sign, offset)
    # meaning t_m.col op t_o.col2 * 1 + offset'.
    levels: list[list[tuple[str, str, int, str, int]]] = [[] for _ in range(k + 1)]
    for p in binary:
        a, b = p.var, p.var2
        if a > b:  # t_a.col op t_b.col2 + off, t_a is later
            levels[a].append((p.column, p.op, b, p.column2, p.offset))
        else:  # t_b.col2 flip(op) t_a.col - off, t_b is later
            levels[b].append((p.column2, _FLIP[p.op], a, p.column, -p.offset))

    hash_idx: dict[tuple[int, str], dict] = {}
    sort_idx: dict[tuple[int, str], tuple[list, list]] = {}

    def by_hash(m: int, col: str) -> dict:
        key = (m, col)
        if key not in hash_idx:
            d: dict = defaultdict(list)
            vals = columns[col]
            for i in cand[m - 1]:
                d[vals[i]].append(i)
            hash_idx[key] = d
        return hash_idx[key]

    def by_sort(m: int, col: str) -> tuple[list, list]:
        key = (m, col)
        if key not in sort_idx:
            vals = columns[col]
            pairs = sorted((vals[i], i) for i in cand[m - 1])
            sort_idx[key] = ([v for v, _ in pairs], [i for _, i in pairs])
        return sort_idx[key]

    plans = []
    for m in range(1, k + 1):
        preds = levels[m]
        eq = next((q for q in preds if q[1] == "="), None)
        ineq = next((q for q in preds if q[1] in ("<", "<=", ">", ">=")), None)
        plans.append((preds, eq, ineq))

    bound = [0] * (k + 1)

    def rec(m: int):
        preds, eq, ineq = plans[m - 1]
        if eq is not None:
            col, _, o, col2, off = eq
            ref = columns[col2][bound[o]]
            options = by_hash(m, col).get(ref + off if off else ref, ())
        elif ineq is not None:
            col, op, o, col2, off = ineq
            ref = columns[col2][bound[o]] + off
            vals, idx = by_sort(m, col)
            if op == "<":
                options = idx[: bisect_left(vals, ref)]
            elif op == "<=":
                options = idx[: bisect_right(vals, ref)]
            elif op == ">":
                options = idx[bisect_right(vals, ref):]
            else:
                options = idx[bisect_left(vals, ref):]
        else:
            options = cand[m - 1]
        prev = bound[1:m]
        for i in options:
            if i in prev:
                continue
            ok = True
            for col, op, o, col2, off in preds:
                right = columns[col2][bound[o]]
                if not compare(columns[col][i], op, right + off if off else right):
                    ok = False
                    break
            if not ok:
                continue
            bound[m] = i
            if m == k:
                yield tuple(bound[1:])
            else:
                yield from rec(m + 1)

    yield from rec(1)


def relation_columns(rel: Relation, names) -> dict[str, list]:
    return {c: rel.column(c) for c in names}


def dc_violating_keys(dcs: Sequence[ForeignKeyDC], r1_hat: Relation) -> set:
    fk = r1_hat.schema.fk
    if fk is None:
        raise ConstraintError("R1 has no foreign-key column")
    keys = r1_hat.keys
    fks = r1_hat.column(fk)
    groups: dict = defaultdict(list)
    for pos, v in enumerate(fks):
        if v is not None:
            groups[v].append(pos)
    needed = set().union(*(d.columns for d in dcs)) if dcs else set()
    all_cols = {c: r1_hat.column(c) for c in needed}
    bad: set = set()
    for members in groups.values():
        if len(members) < 2:
            continue
        cols = {c: [vals[p] for p in members] for c, vals in all_cols.items()}
        for dc in dcs:
            if len(members) < dc.arity:
                continue
            for combo in iter_violations(dc, cols, len(members)):
                bad.update(keys[members[p]] for p in combo)
    return bad


def dc_error_fraction(dcs: Sequence[ForeignKeyDC], r1_hat: Relation) -> Fraction:
    if not len(r1_hat) or not dcs:
        return Fraction(0)
    return Fraction(len(dc_violating_keys(dcs, r1_hat)), len(r1_hat))
