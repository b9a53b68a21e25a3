"""Ground truth for tiny instances: exhaustive search and the NAE-3SAT reduction."""
from __future__ import annotations

import itertools
from dataclasses import dataclass
from pathlib import Path

from .coloring import build_conflict_graph
from .constraints import ConstraintSet, ForeignKeyDC, Predicate
from .errors import InstanceTooLarge, LinksynthError
from .model import CATEGORICAL, DATA, FOREIGN_KEY, INTEGER, PRIMARY_KEY, Column, Relation, Schema

MAX_ASSIGNMENTS = 10**7


def brute_force_decide(
    r1: Relation, r2: Relation, constraints: ConstraintSet, limit: int = MAX_ASSIGNMENTS
) -> tuple[bool, dict | None]:
    """Search FK assignments in lexicographic order for one meeting every DC and every CC exactly.

    Rows are taken in ascending key order and R2 keys in ascending order. A
    prefix is pruned as soon as it makes some DC edge monochromatic or a CC
    count can no longer reach its target.
    """
    n, m = len(r1), len(r2)
    if m**n > limit:
        raise InstanceTooLarge(f"{m}^{n} assignments exceed {limit}")
    keys1 = sorted(r1.keys)
    keys2 = sorted(r2.keys)
    if n == 0:
        ok = all(cc.target == 0 for cc in constraints.ccs)
        return (True, {}) if ok else (False, None)
    if m == 0:
        return False, None

    names1 = [c for c in r1.schema.names if c != r1.schema.fk]
    rows1 = [dict(zip(r1.schema.names, r1.row_by_key(k))) for k in keys1]
    rows2 = [dict(zip(r2.schema.names, r2.row_by_key(k))) for k in keys2]
    values = {c: [r[c] for r in rows1] for c in names1}
    graph = build_conflict_graph(list(range(n)), values, constraints.dcs)
    # edges checked when their last member (in search order) is assigned
    closing: list[list[tuple[int, ...]]] = [[] for _ in range(n)]
    for e in graph.edges:
        members = sorted(e)
        closing[members[-1]].append(tuple(members[:-1]))

    ccs = list(constraints.ccs)
    hit = [[[c for c, cc in enumerate(ccs) if cc.match_r1(r) and cc.match_r2(s)] for s in rows2] for r in rows1]
    can = [[any(c in h for h in hit[p]) for c in range(len(ccs))] for p in range(n)]
    remaining = [[0] * len(ccs) for _ in range(n + 1)]
    for p in range(n - 1, -1, -1):
        remaining[p] = [remaining[p + 1][c] + can[p][c] for c in range(len(ccs))]
    targets = [cc.target for cc in ccs]
    counts = [0] * len(ccs)
    choice = [0] * n

    def feasible(p: int) -> bool:
        rem = remaining[p]
        return all(counts[c] <= targets[c] <= counts[c] + rem[c] for c in range(len(ccs)))

    def rec(p: int) -> bool:
        if p == n:
            return counts == targets
        for k in range(m):
            if any(all(choice[u] == k for u in others) for others in closing[p]):
                continue
            choice[p] = k
            for c in hit[p][k]:
                counts[c] += 1
            if feasible(p + 1) and rec(p + 1):
                return True
            for c in hit[p][k]:
                counts[c] -= 1
        return False

    if not feasible(0):
        return False, None
    if rec(0):
        return True, {keys1[p]: keys2[choice[p]] for p in range(n)}
    return False, None


# -- NAE-3SAT ------------------------------------------------------------------


@dataclass(frozen=True)
class CnfFormula:
    num_vars: int
    clauses: tuple[tuple[int, int, int], ...]

    def __post_init__(self):
        object.__setattr__(self, "clauses", tuple(tuple(c) for c in self.clauses))
        for c in self.clauses:
            if len(c) != 3:
                raise LinksynthError(f"clause {c} does not have exactly 3 literals")
            if any(lit == 0 or abs(lit) > self.num_vars for lit in c):
                raise LinksynthError(f"clause {c} has a literal outside 1..{self.num_vars}")


def parse_dimacs(text: str) -> CnfFormula:
    num_vars = None
    lits: list[int] = []
    for line in text.splitlines():
        line = line.strip()
        if not line or line.startswith("c") or line.startswith("%"):
            continue
        if line.startswith("p"):
            parts = line.split()
            if len(parts) < 4 or parts[1] != "cnf":
                raise LinksynthError(f"bad problem line {line!r}")
            num_vars = int(parts[2])
            continue
        lits.extend(int(t) for t in line.split())
    if num_vars is None:
        raise LinksynthError("missing 'p cnf' line")
    clauses, cur = [], []
    for lit in lits:
        if lit == 0:
            clauses.append(tuple(cur))
            cur = []
        else:
            cur.append(lit)
    if cur:
        clauses.append(tuple(cur))
    return CnfFormula(num_vars, tuple(clauses))


def nae_satisfiable(formula: CnfFormula) -> bool:
    if formula.num_vars > 20:
        raise InstanceTooLarge("NAE check limited to 20 variables")
    for bits in itertools.product((False, True), repeat=formula.num_vars):
        ok = True
        for clause in formula.clauses:
            vals = {bits[abs(l) - 1] == (l > 0) for l in clause}
            if len(vals) < 2:
                ok = False
                break
        if ok:
            return True
    return False


R1_NAE_SCHEMA = Schema(
    (
        Column("id", INTEGER, PRIMARY_KEY),
        Column("Var", CATEGORICAL, DATA),
        Column("alpha", INTEGER, DATA),
        Column("Cls", CATEGORICAL, DATA),
        Column("Chosen", INTEGER, FOREIGN_KEY),
    )
)
R2_NAE_SCHEMA = Schema((Column("cid", INTEGER, PRIMARY_KEY), Column("E", CATEGORICAL, DATA)))

NAE_DCS = (
    ForeignKeyDC(
        "DC_var",
        2,
        (Predicate(1, "Var", "=", None, 2, "Var"), Predicate(1, "alpha", "!=", None, 2, "alpha")),
    ),
    ForeignKeyDC(
        "DC_cls",
        3,
        (Predicate(1, "Cls", "=", None, 2, "Cls"), Predicate(2, "Cls", "=", None, 3, "Cls")),
    ),
)


def reduce_nae3sat(formula: CnfFormula) -> tuple[Relation, Relation, ConstraintSet]:
    """Instance whose C-Extension exists iff the formula is NAE-satisfiable.

    One R1 row per literal occurrence; Chosen picks the literal's truth value.
    Same-variable rows of opposite polarity must differ, and no clause may have
    all its rows equal. A variable occurring at least twice with one polarity
    only also gets a pivot row of the opposite polarity in a clause of its own,
    which ties its occurrences to a single value.
    """
    rows = []
    polarity: dict[int, list[int]] = {}
    for ci, clause in enumerate(formula.clauses, start=1):
        for lit in clause:
            rows.append((len(rows) + 1, f"x{abs(lit)}", 1 if lit > 0 else 0, f"C{ci}", None))
            polarity.setdefault(abs(lit), []).append(1 if lit > 0 else 0)
    for v in sorted(polarity):
        seen = polarity[v]
        if len(seen) >= 2 and len(set(seen)) == 1:
            rows.append((len(rows) + 1, f"x{v}", 1 - seen[0], f"aux_x{v}", None))
    r1 = Relation(R1_NAE_SCHEMA, rows, "r1")
    r2 = Relation(R2_NAE_SCHEMA, [(0, "a"), (1, "b")], "r2")
    return r1, r2, ConstraintSet((), NAE_DCS)


def write_instance(out_dir: str | Path, r1: Relation, r2: Relation, constraints: ConstraintSet) -> None:
    import json

    from .constraints import constraints_to_dict
    from .model import write_relation, write_schema

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_relation(r1, out / "r1.csv")
    write_relation(r2, out / "r2.csv")
    write_schema(r1.schema, out / "r1.schema.json")
    write_schema(r2.schema, out / "r2.schema.json")
    (out / "constraints.json").write_text(json.dumps(constraints_to_dict(constraints), indent=2) + "\n", encoding="utf-8")


def all_formulas(max_vars: int, max_clauses: int) -> list[CnfFormula]:
    """Every 3-CNF with at most ``max_vars`` variables and ``max_clauses`` clauses.

    Clauses are multisets of literals and formulas multisets of clauses, so
    ordering variants are not repeated.
    """
    out = []
    for nv in range(1, max_vars + 1):
        lits = [v for i in range(1, nv + 1) for v in (i, -i)]
        clauses = list(itertools.combinations_with_replacement(lits, 3))
        for nc in range(0, max_clauses + 1):
            for combo in itertools.combinations_with_replacement(clauses, nc):
                out.append(CnfFormula(nv, tuple(combo)))
    return out


def canonical_formulas(num_vars: int, max_clauses: int) -> list[CnfFormula]:
    """One representative per orbit of ``all_formulas`` under variable renaming and polarity flips.

    Both the reduction and the NAE condition are invariant under these maps, so
    checking one formula per orbit covers all of them. Orbits are grown one
    clause at a time from canonical smaller formulas, which reaches every orbit.
    """
    lits = [v for i in range(1, num_vars + 1) for v in (i, -i)]
    clauses = list(itertools.combinations_with_replacement(lits, 3))
    maps = []
    for perm in itertools.permutations(range(1, num_vars + 1)):
        for flips in itertools.product((1, -1), repeat=num_vars):
            m = {}
            for i in range(1, num_vars + 1):
                m[i] = flips[i - 1] * perm[i - 1]
                m[-i] = -m[i]
            maps.append(m)

    def canon(f: tuple) -> tuple:
        return min(tuple(sorted(tuple(sorted(m[l] for l in c)) for c in f)) for m in maps)

    out = [CnfFormula(num_vars, ())]
    level = {(): ()}
    for _ in range(max_clauses):
        nxt: dict[tuple, tuple] = {}
        for f in level.values():
            for c in clauses:
                key = canon(f + (c,))
                nxt.setdefault(key, key)
        out.extend(CnfFormula(num_vars, f) for f in nxt.values())
        level = nxt
    return out
