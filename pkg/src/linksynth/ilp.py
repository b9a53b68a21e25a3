"""Binning, the 0/1 count system and an embedded integer solver for intersecting CCs."""
from __future__ import annotations

import itertools
import logging
import time
from bisect import bisect_right
from dataclasses import dataclass, field
from typing import Protocol, Sequence

from .constraints import IntRange, LinearCC
from .exact import FillLedger
from .model import INTEGER, JoinView, Relation

log = logging.getLogger(__name__)

ALL_WAY = "all-way"
MODIFIED = "modified"
NONE = "none"
MARGINAL_MODES = (ALL_WAY, MODIFIED, NONE)

MAX_CELLS = 100_000


@dataclass
class Bin:
    signature: tuple  # per R1 column: IntRange segment for integers, the value otherwise
    rows: list[int]  # view positions, ascending primary key

    @property
    def member_count(self) -> int:
        return len(self.rows)


@dataclass
class BinSpace:
    r1_columns: list[str]
    kinds: dict[str, str]
    cuts: dict[str, list[int]]
    bins: list[Bin]
    combo_columns: tuple[str, ...]
    combos: list[tuple]
    variables: list[tuple[int, int]]  # (bin index, combo index), combo-major
    upper_bounds: list[int]

    def bin_row(self, b: int) -> dict:
        """Representative R1 values of bin ``b`` (segments for integer columns)."""
        return dict(zip(self.r1_columns, self.bins[b].signature))

    def bin_matches(self, b: int, cc: LinearCC) -> bool:
        sig = self.bin_row(b)
        for col, s in cc.r1_sets.items():
            v = sig[col]
            if isinstance(v, IntRange):
                if not v.subset_of(s):
                    return False
            elif not s.contains(v):
                return False
        return True

    def var_matches(self, j: int, cc: LinearCC) -> bool:
        b, c = self.variables[j]
        return self.bin_matches(b, cc) and cc.match_r2_combo(self.combos[c], self.combo_columns)

    def find_bin(self, **values) -> int:
        """Index of the bin containing a row with the given R1 values."""
        for b, bn in enumerate(self.bins):
            ok = True
            for col, v in values.items():
                s = bn.signature[self.r1_columns.index(col)]
                if (s.contains(v) if isinstance(s, IntRange) else s == v) is False:
                    ok = False
                    break
            if ok:
                return b
        raise KeyError(values)

    def var_index(self, b: int, combo: tuple) -> int:
        c = self.combos.index(tuple(combo))
        return self.variables.index((b, c))


def _segment(cuts: list[int], v: int) -> IntRange:
    k = bisect_right(cuts, v)
    lo = cuts[k - 1] if k > 0 else None
    hi = cuts[k] - 1 if k < len(cuts) else None
    return IntRange(lo, hi)


def cut_points(ccs: Sequence[LinearCC], kinds: dict[str, str]) -> dict[str, list[int]]:
    cuts: dict[str, set[int]] = {c: set() for c, k in kinds.items() if k == INTEGER}
    for cc in ccs:
        for col, s in cc.r1_sets.items():
            if isinstance(s, IntRange) and col in cuts:
                if s.lo is not None:
                    cuts[col].add(s.lo)
                if s.hi is not None:
                    cuts[col].add(s.hi + 1)
    return {c: sorted(v) for c, v in cuts.items()}


def intervalize(
    ccs: Sequence[LinearCC],
    r1: JoinView | Relation,
    *,
    rows: Sequence[int] | None = None,
    combos: Sequence[tuple] | None = None,
    combo_columns: Sequence[str] | None = None,
    r2: Relation | None = None,
    prune: bool = False,
    guard_ccs: Sequence[LinearCC] = (),
) -> BinSpace:
    """Group R1 rows into bins over the CC cut points and lay out one variable per (bin, combo).

    With ``prune``, a bin only gets variables for combos that make it match some
    CC (system or guard), plus one neutral combo matching none; neutral combos
    are interchangeable in the system, so one per bin is enough.
    """
    if isinstance(r1, Relation):
        from .model import init_join_view

        view = init_join_view(r1.without_fk() if not r1.fk_missing() else r1, r2.schema if r2 else _empty_r2(), combo_columns)
    else:
        view = r1
    if combo_columns is None:
        combo_columns = view.combo_columns
    combo_columns = tuple(combo_columns)
    if combos is None:
        from .exact import combo_universe

        combos = combo_universe(r2, combo_columns) if r2 is not None else [()]
    combos = [tuple(c) for c in combos]
    cols = [c.name for c in view.r1_columns if c.name != view.key_column]
    kinds = {c.name: c.kind for c in view.r1_columns if c.name != view.key_column}
    cuts = cut_points(ccs, kinds)
    if rows is None:
        rows = range(len(view))
    rows = sorted(rows, key=lambda i: view.keys[i])
    values = [view.r1_column(c) for c in cols]
    by_sig: dict[tuple, list[int]] = {}
    for i in rows:
        sig = tuple(
            _segment(cuts[c], vals[i]) if kinds[c] == INTEGER else vals[i] for c, vals in zip(cols, values)
        )
        by_sig.setdefault(sig, []).append(i)
    bins = [Bin(sig, members) for sig, members in by_sig.items()]
    space = BinSpace(cols, kinds, cuts, bins, combo_columns, combos, [], [])
    all_ccs = list(ccs) + [g for g in guard_ccs if g.id not in {c.id for c in ccs}]
    pairs: list[tuple[int, int]] = []
    if prune:
        r2_hits = [[cc.match_r2_combo(cb, combo_columns) for cb in combos] for cc in all_ccs]
        for b in range(len(bins)):
            live = [n for n, cc in enumerate(all_ccs) if space.bin_matches(b, cc)]
            neutral = None
            for c in range(len(combos)):
                if any(r2_hits[n][c] for n in live):
                    pairs.append((b, c))
                elif neutral is None:
                    neutral = c
            if neutral is not None:
                pairs.append((b, neutral))
    else:
        pairs = [(b, c) for b in range(len(bins)) for c in range(len(combos))]
    pairs.sort(key=lambda p: (p[1], p[0]))
    space.variables = pairs
    space.upper_bounds = [bins[b].member_count for b, _ in pairs]
    return space


def _empty_r2():
    from .model import Column, Schema

    return Schema((Column("_k", INTEGER, "primary-key"),))


@dataclass(frozen=True)
class SystemRow:
    kind: str  # "marginal" | "input-cc"
    cc_id: str | None
    indices: tuple[int, ...]
    target: int


@dataclass
class LinearSystem:
    num_vars: int
    rows: list[SystemRow] = field(default_factory=list)

    def to_text(self, space: BinSpace | None = None) -> str:
        out = [f"# vars {self.num_vars} rows {len(self.rows)}"]
        if space is not None:
            for j, (b, c) in enumerate(space.variables):
                sig = ",".join(
                    f"{col}=[{s.lo},{s.hi}]" if isinstance(s, IntRange) else f"{col}={s}"
                    for col, s in zip(space.r1_columns, space.bins[b].signature)
                )
                combo = ",".join(f"{k}={v}" for k, v in zip(space.combo_columns, space.combos[c]))
                out.append(f"var {j} ub={space.upper_bounds[j]} bin={b} {sig} | {combo}")
        for n, r in enumerate(self.rows):
            out.append(f"row {n} {r.kind} {r.cc_id or '-'} = {r.target} : {' '.join(map(str, r.indices))}")
        return "\n".join(out) + "\n"


def _cells(space: BinSpace) -> list[tuple]:
    """Every intervalized cell over the bin space's R1 columns."""
    axes = []
    for col in space.r1_columns:
        if space.kinds[col] == INTEGER:
            cuts = space.cuts[col]
            segs = [_segment(cuts, cuts[0] - 1)] if cuts else [IntRange()]
            segs += [_segment(cuts, c) for c in cuts]
            axes.append(segs)
        else:
            idx = space.r1_columns.index(col)
            axes.append(sorted({bn.signature[idx] for bn in space.bins}))
    size = 1
    for a in axes:
        size *= len(a)
    if size > MAX_CELLS:
        return [bn.signature for bn in space.bins]
    return list(itertools.product(*axes))


def _cell_in(cell: tuple, cols: list[str], cc: LinearCC) -> bool:
    row = dict(zip(cols, cell))
    for col, s in cc.r1_sets.items():
        v = row[col]
        if isinstance(v, IntRange):
            if not v.subset_of(s) or v.is_empty():
                return False
        elif not s.contains(v):
            return False
    return True


def build_system(
    space: BinSpace,
    ccs: Sequence[LinearCC],
    marginal_mode: str = ALL_WAY,
    *,
    achieved: dict[str, int] | None = None,
    guard_ccs: Sequence[LinearCC] = (),
) -> LinearSystem:
    """Marginal rows, then one row per CC.

    ``achieved`` holds counts already realised by rows outside the bin space;
    CC targets are reduced by it. ``guard_ccs`` are other CCs touched by the
    variables, added so the solver keeps them where they are.
    """
    if marginal_mode not in MARGINAL_MODES:
        raise ValueError(f"unknown marginal mode {marginal_mode!r}")
    achieved = achieved or {}
    system = LinearSystem(len(space.variables))
    by_bin: dict[int, list[int]] = {}
    for j, (b, _) in enumerate(space.variables):
        by_bin.setdefault(b, []).append(j)
    if marginal_mode == ALL_WAY:
        for b, bn in enumerate(space.bins):
            system.rows.append(SystemRow("marginal", None, tuple(by_bin.get(b, ())), bn.member_count))
    elif marginal_mode == MODIFIED and ccs:
        sig_bin = {bn.signature: b for b, bn in enumerate(space.bins)}
        for cell in _cells(space):
            if not any(_cell_in(cell, space.r1_columns, cc) for cc in ccs):
                continue
            b = sig_bin.get(cell)
            idx = tuple(by_bin.get(b, ())) if b is not None else ()
            target = space.bins[b].member_count if b is not None else 0
            system.rows.append(SystemRow("marginal", None, idx, target))
    seen = set()
    for cc in list(ccs) + list(guard_ccs):
        if cc.id in seen:
            continue
        idx = tuple(j for j in range(len(space.variables)) if space.var_matches(j, cc))
        if cc.id not in {c.id for c in ccs} and not idx:
            continue
        seen.add(cc.id)
        system.rows.append(SystemRow("input-cc", cc.id, idx, max(0, cc.target - achieved.get(cc.id, 0))))
    return system


# -- solving -------------------------------------------------------------------


@dataclass
class Budget:
    nodes: int = 10**7
    seconds: float = 60.0


@dataclass
class IntegerSolution:
    values: list[int]
    residual: list[int]
    exact: bool
    nodes: int = 0
    proven_optimal: bool = False

    @property
    def total_residual(self) -> int:
        return sum(self.residual)


class IntegerSolver(Protocol):
    def solve(self, system: LinearSystem, upper_bounds: Sequence[int], budget: Budget) -> IntegerSolution: ...


def residuals(system: LinearSystem, values: Sequence[int]) -> list[int]:
    return [abs(sum(values[j] for j in r.indices) - r.target) for r in system.rows]


class _Exhausted(Exception):
    pass


class BranchAndBoundSolver:
    """Depth-first search over variable domains.

    First an exact search: equality rows prune through bounds propagation
    (each row's remaining target caps its variables). If no exact solution
    exists or the budget runs out, a branch-and-bound over the L1 slack
    follows, pruned by the admissible bound sum_r dist(b_r, [sum lo, sum hi]).
    """

    def solve(self, system: LinearSystem, upper_bounds: Sequence[int], budget: Budget | None = None) -> IntegerSolution:
        budget = budget or Budget()
        self._deadline = time.monotonic() + budget.seconds
        self._node_limit = budget.nodes
        self.nodes = 0
        n = system.num_vars
        rows = [list(r.indices) for r in system.rows]
        targets = [r.target for r in system.rows]
        ub = [max(0, int(u)) for u in upper_bounds]
        var_rows: list[list[int]] = [[] for _ in range(n)]
        for r, idx in enumerate(rows):
            for j in idx:
                var_rows[j].append(r)
        self._rows, self._targets, self._var_rows = rows, targets, var_rows

        found, proven = None, False
        try:
            found, proven = self._exact(ub)
        except _Exhausted:
            log.info("exact search stopped after %d nodes", self.nodes)
        if found is not None:
            return IntegerSolution(found, [0] * len(rows), True, self.nodes, True)

        best = self._local_search(ub)
        best_cost = sum(self._row_dev(best))
        optimal = False
        if best_cost > 0:
            try:
                best, best_cost = self._l1(ub, best, best_cost)
                optimal = True
            except _Exhausted as stop:
                best, best_cost = stop.args[0], stop.args[1]
        res = residuals(system, best)
        return IntegerSolution(best, res, sum(res) == 0, self.nodes, optimal or proven)

    def _tick(self, payload=None):
        self.nodes += 1
        if self.nodes > self._node_limit or (self.nodes % 256 == 0 and time.monotonic() > self._deadline):
            raise _Exhausted(*(payload or ()))

    def _row_dev(self, x):
        return [abs(sum(x[j] for j in idx) - t) for idx, t in zip(self._rows, self._targets)]

    # exact search with propagation
    def _exact(self, ub):
        rows, targets, var_rows = self._rows, self._targets, self._var_rows
        n = len(ub)
        lo = [0] * n
        hi = list(ub)
        slo = [0] * len(rows)
        shi = [sum(hi[j] for j in idx) for idx in rows]
        trail: list[tuple[int, int, int]] = []

        def setb(j, nlo, nhi):
            olo, ohi = lo[j], hi[j]
            trail.append((j, olo, ohi))
            lo[j], hi[j] = nlo, nhi
            dl, dh = nlo - olo, nhi - ohi
            for r in var_rows[j]:
                slo[r] += dl
                shi[r] += dh

        def undo(mark):
            while len(trail) > mark:
                j, olo, ohi = trail.pop()
                dl, dh = olo - lo[j], ohi - hi[j]
                lo[j], hi[j] = olo, ohi
                for r in var_rows[j]:
                    slo[r] += dl
                    shi[r] += dh

        def propagate(queue):
            inq = set(queue)
            queue = list(queue)
            while queue:
                r = queue.pop()
                inq.discard(r)
                b = targets[r]
                if b < slo[r] or b > shi[r]:
                    return False
                if slo[r] == shi[r]:
                    continue
                for j in rows[r]:
                    l, h = lo[j], hi[j]
                    if l == h:
                        continue
                    nh = min(h, b - (slo[r] - l))
                    nl = max(l, b - (shi[r] - h))
                    if nl > nh:
                        return False
                    if nl != l or nh != h:
                        setb(j, nl, nh)
                        for r2 in var_rows[j]:
                            if r2 not in inq:
                                inq.add(r2)
                                queue.append(r2)
                        if b < slo[r] or b > shi[r]:
                            return False
            return True

        def pick():
            best, key = None, None
            for j in range(n):
                d = hi[j] - lo[j]
                if d:
                    k = (d, -len(var_rows[j]))
                    if key is None or k < key:
                        best, key = j, k
            return best

        if not propagate(range(len(rows))):
            return None, True
        stack: list[tuple[int, int, int, int]] = []
        while True:
            j = pick()
            if j is None:
                return list(lo), True
            mid = (lo[j] + hi[j]) // 2
            mark = len(trail)
            stack.append((mark, j, mid, 0))
            self._tick()
            setb(j, lo[j], mid)
            ok = propagate(var_rows[j])
            while not ok:
                while stack and stack[-1][3] == 1:
                    stack.pop()
                if not stack:
                    return None, True
                mark, j, mid, _ = stack.pop()
                undo(mark)
                stack.append((mark, j, mid, 1))
                self._tick()
                setb(j, mid + 1, hi[j])
                ok = propagate(var_rows[j])

    def _local_search(self, ub):
        targets, var_rows = self._targets, self._var_rows
        n = len(ub)
        x = [0] * n
        dev = [-t for t in targets]  # A x - b
        improved = True
        while improved:
            improved = False
            for j in range(n):
                while x[j] < ub[j]:
                    gain = sum(abs(dev[r] + 1) - abs(dev[r]) for r in var_rows[j])
                    if gain >= 0:
                        break
                    x[j] += 1
                    for r in var_rows[j]:
                        dev[r] += 1
                    improved = True
                while x[j] > 0:
                    gain = sum(abs(dev[r] - 1) - abs(dev[r]) for r in var_rows[j])
                    if gain >= 0:
                        break
                    x[j] -= 1
                    for r in var_rows[j]:
                        dev[r] -= 1
                    improved = True
        return x

    def _l1(self, ub, best, best_cost):
        rows, targets, var_rows = self._rows, self._targets, self._var_rows
        n = len(ub)
        lo = [0] * n
        hi = list(ub)
        slo = [0] * len(rows)
        shi = [sum(hi[j] for j in idx) for idx in rows]

        def dist(r):
            b = targets[r]
            return slo[r] - b if b < slo[r] else (b - shi[r] if b > shi[r] else 0)

        bound = sum(dist(r) for r in range(len(rows)))
        state = {"best": list(best), "cost": best_cost}

        def setb(j, nlo, nhi):
            nonlocal bound
            dl, dh = nlo - lo[j], nhi - hi[j]
            for r in var_rows[j]:
                bound -= dist(r)
                slo[r] += dl
                shi[r] += dh
                bound += dist(r)
            lo[j], hi[j] = nlo, nhi

        def rec():
            self._tick((state["best"], state["cost"]))
            if bound >= state["cost"]:
                return
            j, width = None, 0
            for v in range(n):
                w = hi[v] - lo[v]
                if w > width:
                    j, width = v, w
            if j is None:
                state["best"], state["cost"] = list(lo), bound
                return
            l, h = lo[j], hi[j]
            mid = (l + h) // 2
            setb(j, l, mid)
            rec()
            setb(j, mid + 1, h)
            rec()
            setb(j, l, h)

        import sys

        limit = sys.getrecursionlimit()
        sys.setrecursionlimit(max(limit, 10_000 + 64 * n))
        try:
            rec()
        finally:
            sys.setrecursionlimit(limit)
        return state["best"], state["cost"]


class ScipyMilpSolver:
    """HiGHS via ``scipy.optimize.milp`` on the slack formulation."""

    def solve(self, system: LinearSystem, upper_bounds: Sequence[int], budget: Budget | None = None) -> IntegerSolution:
        import numpy as np
        from scipy.optimize import Bounds, LinearConstraint, milp
        from scipy.sparse import lil_matrix

        budget = budget or Budget()
        n, m = system.num_vars, len(system.rows)
        a = lil_matrix((m, n + 2 * m))
        for r, row in enumerate(system.rows):
            for j in row.indices:
                a[r, j] = 1
            a[r, n + r] = 1
            a[r, n + m + r] = -1
        b = np.array([r.target for r in system.rows], dtype=float)
        c = np.concatenate([np.zeros(n), np.ones(2 * m)])
        ub = np.concatenate([np.asarray(upper_bounds, dtype=float), np.full(2 * m, np.inf)])
        res = milp(
            c,
            constraints=[LinearConstraint(a.tocsr(), b, b)] if m else [],
            integrality=np.concatenate([np.ones(n), np.zeros(2 * m)]),
            bounds=Bounds(np.zeros(n + 2 * m), ub),
            options={"time_limit": budget.seconds, "node_limit": budget.nodes},
        )
        if res.x is None:
            values = [0] * n
        else:
            values = [int(round(v)) for v in res.x[:n]]
        resid = residuals(system, values)
        return IntegerSolution(values, resid, sum(resid) == 0, 0, res.status == 0)


def solve_integer(
    system: LinearSystem,
    upper_bounds: Sequence[int],
    budget: Budget | None = None,
    solver: IntegerSolver | None = None,
) -> IntegerSolution:
    return (solver or BranchAndBoundSolver()).solve(system, upper_bounds, budget or Budget())


def greedy_fill(view: JoinView, space: BinSpace, solution: IntegerSolution, state=None) -> tuple[JoinView, FillLedger]:
    """Give each variable's combo to up to ``value`` unassigned rows of its bin.

    Bins are visited in ascending index and rows in ascending primary key.
    """
    ledger = FillLedger()
    by_bin: dict[int, list[int]] = {}
    for j, (b, _) in enumerate(space.variables):
        by_bin.setdefault(b, []).append(j)
    for b, bn in enumerate(space.bins):
        free = [i for i in bn.rows if view.combo(i) is None]
        pos = 0
        for j in by_bin.get(b, ()):
            combo = space.combos[space.variables[j][1]]
            take = min(solution.values[j], len(free) - pos)
            for i in free[pos: pos + take]:
                if state is not None:
                    state.assign(i, combo)
                else:
                    view.assign_combo(i, combo)
            pos += take
    assigned = {}
    if state is not None:
        for cc in state.ccs:
            assigned[cc.id] = state.count(cc.id)
    ledger.per_cc = assigned
    ledger.invalid_rows = sorted(
        (view.keys[i] for bn in space.bins for i in bn.rows if view.combo(i) is None)
    )
    return view, ledger
