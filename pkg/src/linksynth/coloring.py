"""Phase II: conflict hypergraphs, largest-first list coloring and FK completion."""
from __future__ import annotations

import logging
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Mapping, Sequence

from .constraints import ForeignKeyDC, LinearCC, iter_violations, relative_error
from .errors import LinksynthError
from .exact import FillState, combo_universe, keys_by_combo
from .model import JoinView, Relation

log = logging.getLogger(__name__)


@dataclass
class Partition:
    combo: tuple
    vertices: list  # K1 keys, ascending
    candidates: list  # K2 keys carrying this combo, ascending


def partition_view(view: JoinView, r2: Relation, columns: Sequence[str] | None = None) -> list[Partition]:
    """One partition per distinct combo over ``columns``; rows without a combo are left out."""
    if columns is not None and tuple(columns) != view.combo_columns:
        view = view.copy()
        view.combo_columns = tuple(columns)
    groups: dict[tuple, list] = {}
    for i in range(len(view)):
        combo = view.combo(i)
        if combo is not None:
            groups.setdefault(combo, []).append(view.keys[i])
    by_combo = keys_by_combo(r2, view.combo_columns)
    out = []
    for combo in sorted(groups):
        out.append(Partition(combo, sorted(groups[combo]), list(by_combo.get(combo, []))))
    return out


@dataclass
class ConflictHypergraph:
    vertices: list
    edges: dict[frozenset, tuple[str, ...]] = field(default_factory=dict)
    adjacency: dict = field(default_factory=dict)

    def degree(self, v) -> int:
        return len(self.adjacency.get(v, ()))

    def add_edge(self, members: frozenset, dc_id: str) -> None:
        tags = self.edges.get(members)
        if tags is None:
            self.edges[members] = (dc_id,)
            for v in members:
                self.adjacency.setdefault(v, []).append(members)
        elif dc_id not in tags:
            self.edges[members] = tags + (dc_id,)

    def edge_sets(self) -> set[frozenset]:
        return set(self.edges)


def build_conflict_graph(
    vertices: Sequence, values: Mapping[str, Sequence], dcs: Sequence[ForeignKeyDC]
) -> ConflictHypergraph:
    """Hyperedge for every distinct vertex set on which some DC body holds.

    ``values`` maps each R1 column to a sequence aligned with ``vertices``.
    """
    g = ConflictHypergraph(list(vertices), {}, {v: [] for v in vertices})
    n = len(g.vertices)
    for dc in dcs:
        if n < dc.arity:
            continue
        for combo in iter_violations(dc, values, n):
            g.add_edge(frozenset(g.vertices[p] for p in combo), dc.id)
    return g


def view_values(view: JoinView, keys: Sequence, columns) -> dict[str, list]:
    pos = [view.position[k] for k in keys]
    return {c: [view.r1_value(i, c) for i in pos] for c in columns}


def dc_columns(dcs: Sequence[ForeignKeyDC]) -> set[str]:
    return set().union(*(d.columns for d in dcs)) if dcs else set()


@dataclass
class Coloring:
    assignment: dict
    skipped: list = field(default_factory=list)
    order: list = field(default_factory=list)


def coloring_lf(
    graph: ConflictHypergraph,
    partial: Mapping | None,
    candidates: Sequence | Mapping,
) -> Coloring:
    """Largest-first list coloring.

    Uncolored vertices go by non-increasing degree, ties by ascending key. A
    color is forbidden for v when some incident edge has every other vertex
    colored with it; v takes the smallest allowed candidate or is skipped.
    ``candidates`` is one shared list or a per-vertex mapping.
    """
    assignment = dict(partial or {})
    order = sorted((v for v in graph.vertices if v not in assignment), key=lambda v: (-graph.degree(v), v))
    shared = None if isinstance(candidates, Mapping) else sorted(candidates)
    skipped = []
    for v in order:
        forbidden = set()
        for e in graph.adjacency.get(v, ()):
            seen = None
            for u in e:
                if u == v:
                    continue
                c = assignment.get(u)
                if c is None or (seen is not None and c != seen):
                    seen = None
                    break
                seen = c
            if seen is not None:
                forbidden.add(seen)
        options = shared if shared is not None else sorted(candidates.get(v, ()))
        color = next((c for c in options if c not in forbidden), None)
        if color is None:
            skipped.append(v)
        else:
            assignment[v] = color
    return Coloring(assignment, skipped, order)


class FreshKeyAllocator:
    """Issues integer R2 keys above every existing key."""

    def __init__(self, existing: Sequence):
        ints = [k for k in existing if isinstance(k, int)]
        if len(ints) != len(existing):
            raise LinksynthError("fresh keys need integer R2 keys")
        self.next_key = max(ints, default=0) + 1
        self.reserved_ranges: list[range] = []

    def allocate(self, n: int) -> list[int]:
        out = list(range(self.next_key, self.next_key + n))
        self.next_key += n
        return out

    def reserve(self, n: int) -> range:
        r = range(self.next_key, self.next_key + n)
        self.next_key += n
        self.reserved_ranges.append(r)
        return r


@dataclass
class PartitionStats:
    combo: tuple
    vertices: int
    edges: int
    candidates: int
    fresh: int


@dataclass
class CompletionReport:
    partitions: list[PartitionStats]
    fresh_r2_rows: int
    invalid_tuple_count: int
    view: JoinView  # final view, every B column filled


def _color_partition(part: Partition, values, dcs, fresh_source):
    g = build_conflict_graph(part.vertices, values, dcs)
    first = coloring_lf(g, {}, part.candidates)
    used: list = []
    if first.skipped:
        fresh = fresh_source(len(first.skipped))
        second = coloring_lf(g, first.assignment, fresh)
        if second.skipped:  # cannot happen: |skipped| fresh colors always suffice
            raise LinksynthError(f"partition {part.combo}: fresh colors exhausted")
        used = sorted({second.assignment[v] for v in first.skipped})
        first = Coloring(second.assignment, [], first.order + second.order)
    return g, first, used


class _R2Builder:
    def __init__(self, r2: Relation, combo_columns: Sequence[str]):
        self.r2 = r2
        self.schema = r2.schema
        self.combo_columns = tuple(combo_columns)
        self.by_combo = keys_by_combo(r2, combo_columns)
        self.original = {c: list(k) for c, k in self.by_combo.items()}
        self.new_rows: list[tuple] = []

    def template(self, combo: tuple) -> tuple:
        keys = self.original.get(combo)
        if keys:
            return self.r2.row_by_key(keys[0])
        if self.r2.rows:
            return self.r2.row_by_key(min(self.r2.keys))
        missing = [c for c in self.schema.data_columns if c not in self.combo_columns]
        if missing:
            raise LinksynthError(f"R2 is empty; cannot invent values for {missing}")
        return tuple(None for _ in self.schema.columns)

    def add(self, key, combo: tuple) -> None:
        row = list(self.template(combo))
        row[self.schema.index(self.schema.key)] = key
        for c, v in zip(self.combo_columns, combo):
            row[self.schema.index(c)] = v
        self.new_rows.append(tuple(row))
        self.by_combo.setdefault(combo, []).append(key)

    def keys_for(self, combo: tuple) -> list:
        return sorted(self.by_combo.get(combo, []))


def solve_invalid_tuples(
    view: JoinView,
    dcs: Sequence[ForeignKeyDC],
    ccs: Sequence[LinearCC],
    r2_hat: _R2Builder,
    coloring: Coloring,
    allocator: FreshKeyAllocator,
    universe: Sequence[tuple] | None = None,
) -> Coloring:
    """Give each invalid row the combo with the smallest increase in total relative CC error, then a color.

    Candidate colors are the keys carrying the chosen combo; only edges with an
    invalid vertex matter since the rest of the partition is already colored.
    """
    invalid = sorted((i for i in range(len(view)) if view.combo(i) is None), key=lambda i: view.keys[i])
    if not invalid:
        return coloring
    if universe is None:
        universe = combo_universe(r2_hat.r2, view.combo_columns)
    universe = sorted(universe)
    ccs = [c for c in ccs if c.r2_sets and not c.internal]
    state = FillState(view, ccs, universe)

    def err(n: int, count: int) -> Fraction:
        return relative_error(state.ccs[n].target, count)

    chosen: dict[tuple, list] = {}
    for i in invalid:
        best, best_delta = None, None
        for combo in universe:
            delta = sum((err(n, state.counts[n] + 1) - err(n, state.counts[n]) for n in state.matching(i, combo)), Fraction(0))
            if best_delta is None or delta < best_delta:
                best, best_delta = combo, delta
        state.assign(i, best)
        chosen.setdefault(best, []).append(view.keys[i])

    cols = dc_columns(dcs)
    assignment = dict(coloring.assignment)
    skipped_all = []
    for combo in sorted(chosen):
        new_keys = set(chosen[combo])
        members = sorted(k for k in assignment if view.combo(view.position[k]) == combo) + sorted(new_keys)
        g = build_conflict_graph(members, view_values(view, members, cols), dcs)
        keep = ConflictHypergraph(members, {}, {v: [] for v in members})
        for e, tags in g.edges.items():
            if e & new_keys:
                for t in tags:
                    keep.add_edge(e, t)
        partial = {k: assignment[k] for k in members if k in assignment}
        first = coloring_lf(keep, partial, r2_hat.keys_for(combo))
        if first.skipped:
            fresh = allocator.allocate(len(first.skipped))
            second = coloring_lf(keep, first.assignment, fresh)
            for c in sorted({second.assignment[v] for v in first.skipped}):
                r2_hat.add(c, combo)
            first = second
        skipped_all.extend(first.skipped)
        assignment.update(first.assignment)
    return Coloring(assignment, skipped_all, coloring.order)


def complete_fk(
    view: JoinView,
    r1: Relation,
    r2: Relation,
    dcs: Sequence[ForeignKeyDC],
    *,
    ccs: Sequence[LinearCC] = (),
    parallel: int = 0,
    universe: Sequence[tuple] | None = None,
) -> tuple[Relation, Relation, CompletionReport]:
    view = view.copy()
    parts = partition_view(view, r2)
    cols = dc_columns(dcs)
    allocator = FreshKeyAllocator(r2.keys)
    builder = _R2Builder(r2, view.combo_columns)
    results: list = [None] * len(parts)

    if parallel and parallel > 1 and len(parts) > 1:
        ranges = [allocator.reserve(len(p.vertices)) for p in parts]

        def work(n: int):
            p = parts[n]
            rng = ranges[n]
            return _color_partition(p, view_values(view, p.vertices, cols), dcs, lambda k: list(rng[:k]))

        with ThreadPoolExecutor(max_workers=parallel) as pool:
            for n, res in enumerate(pool.map(work, range(len(parts)))):
                results[n] = res
    else:
        for n, p in enumerate(parts):
            results[n] = _color_partition(p, view_values(view, p.vertices, cols), dcs, allocator.allocate)

    assignment: dict = {}
    stats = []
    for p, (g, col, used) in zip(parts, results):
        assignment.update(col.assignment)
        for key in used:
            builder.add(key, p.combo)
        stats.append(PartitionStats(p.combo, len(p.vertices), len(g.edges), len(p.candidates), len(used)))

    invalid_count = sum(1 for i in range(len(view)) if view.combo(i) is None)
    coloring = solve_invalid_tuples(view, dcs, ccs, builder, Coloring(assignment), allocator, universe)
    assignment = coloring.assignment

    r2_hat = r2.extended(builder.new_rows)
    for i, k in enumerate(view.keys):
        row = r2_hat.row_by_key(assignment[k])
        for c in view.b_names:
            view.set_b(i, c, row[r2_hat.schema.index(c)])
    r1_hat = r1.with_fk(assignment)
    report = CompletionReport(stats, len(builder.new_rows), invalid_count, view)
    return r1_hat, r2_hat, report
