"""Pairwise CC relationships, the containment (Hasse) forest and the hybrid split."""
from __future__ import annotations

import json
import re
from dataclasses import dataclass, field
from typing import Iterable, Sequence

from .constraints import LinearCC

DISJOINT = "disjoint"
A_CONTAINS_B = "a-contains-b"
B_CONTAINS_A = "b-contains-a"
INTERSECTING = "intersecting"


def id_order(cc_id: str) -> tuple:
    """Natural sort key, so CC2 sorts before CC10."""
    return tuple(int(t) if t.isdigit() else t for t in re.split(r"(\d+)", cc_id))


@dataclass(frozen=True)
class CCRelation:
    pair: tuple[str, str]
    kind: str

    def swapped(self) -> "CCRelation":
        flip = {A_CONTAINS_B: B_CONTAINS_A, B_CONTAINS_A: A_CONTAINS_B}
        return CCRelation((self.pair[1], self.pair[0]), flip.get(self.kind, self.kind))


def _sets_disjoint(sa: dict, sb: dict) -> bool:
    if any(s.is_empty() for s in sa.values()) or any(s.is_empty() for s in sb.values()):
        return True
    return any(sa[c].disjoint_with(sb[c]) for c in sa.keys() & sb.keys())


def _same_sets(sa: dict, sb: dict) -> bool:
    return sa.keys() == sb.keys() and all(sa[c].key() == sb[c].key() for c in sa)


def subsumed(a: LinearCC, b: LinearCC) -> bool:
    """Containment test on the union of R1 and R2 conditions: a's rows lie within b's."""
    sa, sb = a.all_sets(), b.all_sets()
    if not sa.keys() >= sb.keys():
        return False
    return all(sa[c].subset_of(sb[c]) for c in sb)


def classify_pair(a: LinearCC, b: LinearCC) -> CCRelation:
    pair = (a.id, b.id)
    if _sets_disjoint(a.r1_sets, b.r1_sets):
        return CCRelation(pair, DISJOINT)
    if _same_sets(a.r1_sets, b.r1_sets) and _sets_disjoint(a.r2_sets, b.r2_sets):
        return CCRelation(pair, DISJOINT)
    a_in_b, b_in_a = subsumed(a, b), subsumed(b, a)
    if a_in_b and b_in_a:
        # Equal selections: the later id is treated as the contained one.
        return CCRelation(pair, A_CONTAINS_B if id_order(a.id) < id_order(b.id) else B_CONTAINS_A)
    if b_in_a:
        return CCRelation(pair, A_CONTAINS_B)
    if a_in_b:
        return CCRelation(pair, B_CONTAINS_A)
    return CCRelation(pair, INTERSECTING)


def classify_all(ccs: Sequence[LinearCC]) -> dict[tuple[str, str], str]:
    """Kinds for every ordered pair (a, b) with a before b in input order."""
    out = {}
    for i, a in enumerate(ccs):
        for b in ccs[i + 1:]:
            out[(a.id, b.id)] = classify_pair(a, b).kind
    return out


@dataclass
class HasseForest:
    nodes: list[str]
    edges: list[tuple[str, str]]  # (parent, child)
    diagrams: list[list[str]]
    maximal: list[list[str]]
    parents: dict[str, list[str]] = field(default_factory=dict)
    children: dict[str, list[str]] = field(default_factory=dict)
    ancestors: dict[str, set[str]] = field(default_factory=dict)

    def diagram_of(self, node: str) -> int:
        for i, d in enumerate(self.diagrams):
            if node in d:
                return i
        raise KeyError(node)

    def maximal_of(self, diagram: int) -> str:
        roots = self.maximal[diagram]
        if len(roots) != 1:
            raise ValueError(f"diagram {diagram} has {len(roots)} maximal elements")
        return roots[0]

    def restricted(self, ids: Iterable[str]) -> "HasseForest":
        keep = set(ids)
        nodes = [n for n in self.nodes if n in keep]
        anc = {n: self.ancestors.get(n, set()) & keep for n in nodes}
        return _forest_from_ancestors(nodes, anc)

    def to_dot(self, labels: dict[str, str] | None = None) -> str:
        lines = ["digraph hasse {", "  rankdir=TB;"]
        for i, d in enumerate(self.diagrams):
            lines.append(f"  subgraph cluster_{i} {{")
            lines.append(f'    label="diagram {i}";')
            for n in d:
                label = (labels or {}).get(n, n)
                lines.append(f"    {json.dumps(n)} [label={json.dumps(label)}];")
            lines.append("  }")
        for p, c in self.edges:
            lines.append(f"  {json.dumps(p)} -> {json.dumps(c)};")
        lines.append("}")
        return "\n".join(lines) + "\n"


def _forest_from_ancestors(nodes: list[str], anc: dict[str, set[str]]) -> HasseForest:
    order = {n: i for i, n in enumerate(nodes)}
    parents: dict[str, list[str]] = {}
    children: dict[str, list[str]] = {n: [] for n in nodes}
    edges = []
    for c in nodes:
        a = anc[c]
        indirect: set[str] = set()
        for q in a:
            indirect |= anc[q]
        ps = sorted(a - indirect, key=order.__getitem__)
        parents[c] = ps
        for p in ps:
            children[p].append(c)
            edges.append((p, c))
    for p in children:
        children[p].sort(key=lambda n: id_order(n))
    edges.sort(key=lambda e: (order[e[0]], order[e[1]]))
    # connected components over the undirected edge set
    root = {n: n for n in nodes}

    def find(x):
        while root[x] != x:
            root[x] = root[root[x]]
            x = root[x]
        return x

    for p, c in edges:
        rp, rc = find(p), find(c)
        if rp != rc:
            if order[rp] < order[rc]:
                root[rc] = rp
            else:
                root[rp] = rc
    comps: dict[str, list[str]] = {}
    for n in nodes:
        comps.setdefault(find(n), []).append(n)
    diagrams = list(comps.values())
    maximal = [[n for n in d if not parents[n]] for d in diagrams]
    return HasseForest(nodes, edges, diagrams, maximal, parents, children, dict(anc))


def build_hasse_forest(
    ccs: Sequence[LinearCC], relations: dict[tuple[str, str], str] | None = None
) -> HasseForest:
    if relations is None:
        relations = classify_all(ccs)
    nodes = [c.id for c in ccs]
    anc: dict[str, set[str]] = {n: set() for n in nodes}
    for (a, b), kind in relations.items():
        if kind == A_CONTAINS_B:
            anc[b].add(a)
        elif kind == B_CONTAINS_A:
            anc[a].add(b)
    return _forest_from_ancestors(nodes, anc)


@dataclass(frozen=True)
class HybridSplit:
    s1: tuple[str, ...]
    s2: tuple[str, ...]


def compute_hybrid_split(
    ccs: Sequence[LinearCC],
    forest: HasseForest,
    relations: dict[tuple[str, str], str] | None = None,
) -> HybridSplit:
    if relations is None:
        relations = classify_all(ccs)
    flagged: set[str] = set()
    for (a, b), kind in relations.items():
        if kind == INTERSECTING:
            flagged.update((a, b))
    s2: set[str] = set()
    for d in forest.diagrams:
        if flagged.intersection(d):
            s2.update(d)
    ids = [c.id for c in ccs]
    return HybridSplit(tuple(i for i in ids if i not in s2), tuple(i for i in ids if i in s2))


@dataclass
class Analysis:
    ccs: list[LinearCC]
    relations: dict[tuple[str, str], str]
    forest: HasseForest
    split: HybridSplit

    def kind(self, a: str, b: str) -> str:
        if (a, b) in self.relations:
            return self.relations[(a, b)]
        if (b, a) in self.relations:
            return CCRelation((b, a), self.relations[(b, a)]).swapped().kind
        raise KeyError((a, b))

    def matrix_json(self) -> dict:
        ids = [c.id for c in self.ccs]
        matrix = [[("self" if a == b else self.kind(a, b)) for b in ids] for a in ids]
        return {
            "ids": ids,
            "matrix": matrix,
            "diagrams": self.forest.diagrams,
            "s1": list(self.split.s1),
            "s2": list(self.split.s2),
        }


def analyze(ccs: Sequence[LinearCC]) -> Analysis:
    ccs = list(ccs)
    rel = classify_all(ccs)
    forest = build_hasse_forest(ccs, rel)
    return Analysis(ccs, rel, forest, compute_hybrid_split(ccs, forest, rel))
