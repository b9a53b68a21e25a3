"""Exact view completion for non-intersecting CCs, plus the unused-combination fill."""
from __future__ import annotations

import heapq
import itertools
import logging
import random
from collections import Counter, defaultdict
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .analysis import HasseForest, build_hasse_forest, id_order
from .constraints import LinearCC
from .model import JoinView, Relation

log = logging.getLogger(__name__)

# Above this many combinations the universe falls back to combos present in R2.
MAX_UNIVERSE = 200_000


def relevant_columns(ccs: Iterable[LinearCC], r2: Relation) -> tuple[str, ...]:
    used = {c for cc in ccs for c in cc.r2_sets}
    return tuple(c for c in r2.schema.data_columns if c in used)


def combo_universe(r2: Relation, columns: Sequence[str]) -> list[tuple]:
    """Product of the active domains of ``columns`` in R2, in lexicographic order."""
    if not columns:
        return [()]
    domains = [sorted(set(r2.column(c))) for c in columns]
    size = 1
    for d in domains:
        size *= len(d)
    if size > MAX_UNIVERSE:
        log.warning("combination universe of %d too large; using combinations present in R2", size)
        idx = [r2.schema.index(c) for c in columns]
        return sorted({tuple(r[i] for i in idx) for r in r2.rows})
    return list(itertools.product(*domains))


def keys_by_combo(r2: Relation, columns: Sequence[str]) -> dict[tuple, list]:
    idx = [r2.schema.index(c) for c in columns]
    ki = r2.schema.index(r2.schema.key)
    out: dict[tuple, list] = defaultdict(list)
    for r in r2.rows:
        out[tuple(r[i] for i in idx)].append(r[ki])
    for v in out.values():
        v.sort()
    return dict(out)


@dataclass
class ComboPool:
    columns: tuple[str, ...]
    used_combos: list[tuple]
    unused_combos: list[tuple]


def compute_combo_pool(ccs: Sequence[LinearCC], r2: Relation, columns: Sequence[str] | None = None) -> ComboPool:
    ccs = [c for c in ccs if c.r2_sets]
    if columns is None:
        columns = relevant_columns(ccs, r2)
    used, unused = [], []
    for combo in combo_universe(r2, columns):
        if any(cc.match_r2_combo(combo, columns) for cc in ccs):
            used.append(combo)
        else:
            unused.append(combo)
    return ComboPool(tuple(columns), used, unused)


@dataclass
class FillLedger:
    per_cc: dict[str, int] = field(default_factory=dict)
    shortfalls: dict[str, int] = field(default_factory=dict)
    invalid_rows: list = field(default_factory=list)

    def merge(self, other: "FillLedger") -> None:
        for k, v in other.per_cc.items():
            self.per_cc[k] = self.per_cc.get(k, 0) + v
        self.shortfalls.update(other.shortfalls)


class FillState:
    """Incremental CC counts over a partially filled view.

    Rows are grouped by their signature over the R1 columns the CCs mention, and
    combos are matched once against every CC's R2 side, so assigning a row only
    touches the CCs matching both its signature and its combo.
    """

    def __init__(self, view: JoinView, ccs: Sequence[LinearCC], universe: Sequence[tuple]):
        self.view = view
        self.ccs = list(ccs)
        self.cc_index = {cc.id: n for n, cc in enumerate(self.ccs)}
        self.columns = view.combo_columns
        self.universe = list(universe)
        self.r1_cols = sorted({c for cc in self.ccs for c in cc.r1_sets})
        cols = [view.r1_column(c) for c in self.r1_cols]
        self.sig_of = [tuple(v[i] for v in cols) for i in range(len(view))]
        order = sorted(range(len(view)), key=lambda i: view.keys[i])
        self.rank = [0] * len(view)
        for r, i in enumerate(order):
            self.rank[i] = r
        self.sig_rows: dict[tuple, list[int]] = defaultdict(list)
        for i in order:
            self.sig_rows[self.sig_of[i]].append(i)
        self.sig_ccs: dict[tuple, frozenset[int]] = {}
        for sig in self.sig_rows:
            row = dict(zip(self.r1_cols, sig))
            self.sig_ccs[sig] = frozenset(n for n, cc in enumerate(self.ccs) if cc.match_r1(row))
        self.combo_ccs: dict[tuple, frozenset[int]] = {}
        self.cc_combos: list[list[tuple]] = [[] for _ in self.ccs]
        for combo in self.universe:
            self._index_combo(combo)
        self.counts = [0] * len(self.ccs)
        for i in range(len(view)):
            combo = view.combo(i)
            if combo is not None:
                for n in self.matching(i, combo):
                    self.counts[n] += 1

    def _index_combo(self, combo: tuple) -> frozenset[int]:
        hit = frozenset(n for n, cc in enumerate(self.ccs) if cc.match_r2_combo(combo, self.columns))
        self.combo_ccs[combo] = hit
        for n in hit:
            self.cc_combos[n].append(combo)
        return hit

    def ccs_of_combo(self, combo: tuple) -> frozenset[int]:
        hit = self.combo_ccs.get(combo)
        return hit if hit is not None else self._index_combo(combo)

    def matching(self, i: int, combo: tuple) -> frozenset[int]:
        return self.sig_ccs[self.sig_of[i]] & self.ccs_of_combo(combo)

    def assign(self, i: int, combo: tuple) -> None:
        if self.view.combo(i) is not None:
            raise ValueError(f"row {self.view.keys[i]!r} already assigned")
        self.view.assign_combo(i, combo)
        for n in self.matching(i, combo):
            self.counts[n] += 1

    def count(self, cc_id: str) -> int:
        return self.counts[self.cc_index[cc_id]]

    def sigs_matching(self, n: int) -> list[tuple]:
        return [s for s, hit in self.sig_ccs.items() if n in hit]

    def unassigned_matching(self, n: int) -> Iterable[int]:
        """Unassigned rows whose R1 side matches CC ``n``, ascending primary key."""
        lists = [self.sig_rows[s] for s in self.sigs_matching(n)]
        view = self.view
        merged = heapq.merge(*lists, key=lambda i: self.rank[i]) if len(lists) > 1 else iter(lists[0] if lists else [])
        return (i for i in merged if view.combo(i) is None)


def _post_order(forest: HasseForest) -> list[str]:
    out: list[str] = []
    seen: set[str] = set()

    def visit(n: str):
        if n in seen:
            return
        seen.add(n)
        for c in sorted(forest.children.get(n, []), key=id_order):
            visit(c)
        out.append(n)

    for roots in forest.maximal:
        for r in sorted(roots, key=id_order):
            visit(r)
    return out


def solve_exact(
    view: JoinView,
    s1_ccs: Sequence[LinearCC],
    forest: HasseForest | None = None,
    *,
    state: FillState | None = None,
    r2: Relation | None = None,
) -> tuple[JoinView, FillLedger]:
    """Fill rows for every CC of a non-intersecting set, children before parents.

    Each CC m needs ``target - current count`` more rows. Rows are taken among
    unassigned rows matching m's R1 side in ascending key order, and each gets a
    combo that satisfies m's R2 side while matching no CC outside m and its
    ancestors. This subsumes the ``AND NOT child`` filter: already assigned rows
    are never touched, and no other CC's count moves.
    """
    s1_ccs = [c for c in s1_ccs if c.r2_sets]
    if forest is None:
        forest = build_hasse_forest(s1_ccs)
    else:
        forest = forest.restricted(c.id for c in s1_ccs)
    if state is None:
        universe = combo_universe(r2, view.combo_columns) if r2 is not None else []
        state = FillState(view, s1_ccs, universe)
    key_count: Counter = Counter()
    if r2 is not None:
        for combo, keys in keys_by_combo(r2, view.combo_columns).items():
            key_count[combo] = len(keys)
    load: Counter = Counter()
    for i in range(len(view)):
        c = view.combo(i)
        if c is not None:
            load[c] += 1

    def preference(combo: tuple):
        k = key_count.get(combo, 0)
        return (0 if k else 1, load[combo] / k if k else load[combo], combo)

    ledger = FillLedger()
    for cc_id in _post_order(forest):
        n = state.cc_index[cc_id]
        cc = state.ccs[n]
        allowed_ccs = {state.cc_index[a] for a in forest.ancestors.get(cc_id, ()) if a in state.cc_index}
        allowed_ccs.add(n)
        need = cc.target - state.counts[n]
        filled = 0
        cache: dict[tuple, list[tuple]] = {}
        if need > 0:
            for i in state.unassigned_matching(n):
                sig = state.sig_of[i]
                if sig not in cache:
                    forbidden = state.sig_ccs[sig] - allowed_ccs
                    cache[sig] = [c for c in state.cc_combos[n] if not (state.ccs_of_combo(c) & forbidden)]
                options = cache[sig]
                if not options:
                    continue
                combo = min(options, key=preference)
                state.assign(i, combo)
                load[combo] += 1
                filled += 1
                if filled == need:
                    break
        ledger.per_cc[cc_id] = filled
        deficit = cc.target - state.counts[n]
        if deficit:
            ledger.shortfalls[cc_id] = deficit
            log.info("CC %s short by %d rows", cc_id, deficit)
    ledger.invalid_rows = [view.keys[i] for i in sorted(view.unassigned(), key=lambda i: view.keys[i])]
    return view, ledger


def fill_unused(
    view: JoinView,
    pool: ComboPool,
    r2: Relation | None = None,
    seed: int = 0,
    state: FillState | None = None,
) -> list:
    """Round-robin leftover rows over unused combos; returns keys left invalid.

    Combos that have R2 rows are preferred so leftovers land on real households.
    """
    combos = list(pool.unused_combos)
    if r2 is not None and combos:
        present = keys_by_combo(r2, view.combo_columns)
        with_keys = [c for c in combos if c in present]
        if with_keys:
            combos = with_keys
    rows = sorted(view.unassigned(), key=lambda i: view.keys[i])
    if not combos:
        return [view.keys[i] for i in rows]
    start = random.Random(seed).randrange(len(combos))
    for n, i in enumerate(rows):
        combo = combos[(start + n) % len(combos)]
        if state is not None:
            state.assign(i, combo)
        else:
            view.assign_combo(i, combo)
    return []
