"""Census-like Persons/Housing benchmark instances with the household DC/CC sets."""
from __future__ import annotations

import json
import random
from dataclasses import asdict, dataclass
from pathlib import Path
from typing import Sequence

from .analysis import INTERSECTING, classify_all
from .constraints import ConstraintSet, ForeignKeyDC, LinearCC, Predicate, cc_counts
from .errors import CapacityExceeded, LinksynthError
from .model import CATEGORICAL, DATA, FOREIGN_KEY, INTEGER, PRIMARY_KEY, Column, Relation, Schema, materialize_join

PERSONS_1X = 25_099
HOUSEHOLDS_1X = 9_820
MAX_AGE = 114

OWNER = "Owner"
SPOUSE = "Spouse"
PARTNER = "Unmarried partner"
BIO = "Biological child"
ADOPTED = "Adopted child"
STEP = "Step child"
SIBLING = "Brother/Sister"
PARENT = "Father/Mother"
PARENT_IN_LAW = "Parent-in-law"
GRANDCHILD = "Grandchild"
CHILD_IN_LAW = "Son/daughter-in-law"
FOSTER = "Foster child"
HOUSEMATE = "House/Room mate"
OTHER_REL = "Other relative"
OTHER_NONREL = "Other nonrelative"

TENURES = ("Owned with mortgage", "Owned free and clear", "Rented", "Occupied without payment")
TENURE_WEIGHTS = (0.42, 0.23, 0.33, 0.02)
EXTRA_COLUMNS = ("County", "St", "Div", "Reg", "Water", "Bath", "Fridge", "Stove")

SIZE_WEIGHTS = {1: 0.27, 2: 0.33, 3: 0.16, 4: 0.13, 5: 0.06, 6: 0.03, 7: 0.02}
MEMBER_WEIGHTS = {
    BIO: 0.46, ADOPTED: 0.03, STEP: 0.04, SIBLING: 0.03, PARENT: 0.04, PARENT_IN_LAW: 0.02,
    GRANDCHILD: 0.06, CHILD_IN_LAW: 0.02, FOSTER: 0.01, HOUSEMATE: 0.06, PARTNER: 0.04,
    OTHER_REL: 0.05, OTHER_NONREL: 0.04,
}

PERSONS_SCHEMA = Schema(
    (
        Column("p_id", INTEGER, PRIMARY_KEY),
        Column("Age", INTEGER, DATA),
        Column("Rel", CATEGORICAL, DATA),
        Column("Multi-ling", CATEGORICAL, DATA),
        Column("h_id", INTEGER, FOREIGN_KEY),
    )
)


def housing_schema(extra: int = 0) -> Schema:
    cols = [Column("h_id", INTEGER, PRIMARY_KEY), Column("Tenure", CATEGORICAL, DATA), Column("Area", CATEGORICAL, DATA)]
    cols += [Column(c, CATEGORICAL, DATA) for c in EXTRA_COLUMNS[:extra]]
    return Schema(tuple(cols))


@dataclass
class BenchConfig:
    scale: float = 1.0
    seed: int = 0
    dc_set: str = "all12"
    cc_set: str = "good"
    cc_count: int = 1001
    extra_r2_columns: int = 0

    def __post_init__(self):
        if not self.scale > 0:
            raise ValueError("scale must be positive")
        if self.dc_set not in ("good8", "all12"):
            raise ValueError(f"unknown DC set {self.dc_set!r}")
        if self.cc_set not in ("good", "bad"):
            raise ValueError(f"unknown CC set {self.cc_set!r}")
        if not 0 <= self.extra_r2_columns <= len(EXTRA_COLUMNS):
            raise ValueError(f"extra R2 columns must be in 0..{len(EXTRA_COLUMNS)}")
        if self.cc_count < 0:
            raise ValueError("cc count must be non-negative")


# -- DCs ---------------------------------------------------------------------------


def _age_window_dcs(num: int, rels: Sequence[str], lo_off: int, hi_off: int, owner_extra=()) -> list[ForeignKeyDC]:
    """Member of a role must have Age in [A + lo_off, A + hi_off], A the owner's age."""
    out = []
    owner = [Predicate(1, "Rel", "=", OWNER), *owner_extra]
    for rel in rels:
        tag = rel.split()[0].split("/")[0].lower()
        member = Predicate(2, "Rel", "=", rel)
        out.append(ForeignKeyDC(f"DC{num:02d}_{tag}_low", 2, (*owner, member, Predicate(2, "Age", "<", None, 1, "Age", lo_off))))
        out.append(ForeignKeyDC(f"DC{num:02d}_{tag}_up", 2, (*owner, member, Predicate(2, "Age", ">", None, 1, "Age", hi_off))))
    return out


def household_dcs(dc_set: str = "all12") -> list[ForeignKeyDC]:
    """The 12 household DCs, disjunctive roles expanded into one conjunctive DC each."""
    children = (BIO, ADOPTED, STEP)
    dcs = []
    dcs += _age_window_dcs(1, children, -69, -12, (Predicate(1, "Multi-ling", "=", "0"),))
    dcs += _age_window_dcs(2, children, -50, -12, (Predicate(1, "Multi-ling", "=", "1"),))
    dcs += _age_window_dcs(3, (SPOUSE, PARTNER), -50, 50)
    dcs += _age_window_dcs(4, (SIBLING,), -35, 35)
    dcs += _age_window_dcs(5, (PARENT, PARENT_IN_LAW), 12, 115)
    dcs += _age_window_dcs(6, (GRANDCHILD,), -115, -30)
    dcs += _age_window_dcs(7, (CHILD_IN_LAW,), -69, -1)
    dcs += _age_window_dcs(8, (FOSTER,), -69, -12)
    if dc_set == "good8":
        return dcs
    dcs.append(ForeignKeyDC("DC09_owners", 2, (Predicate(1, "Rel", "=", OWNER), Predicate(2, "Rel", "=", OWNER))))
    for rel in (GRANDCHILD, CHILD_IN_LAW):
        tag = rel.split()[0].split("/")[0].lower()
        dcs.append(ForeignKeyDC(
            f"DC10_{tag}", 2,
            (Predicate(1, "Rel", "=", OWNER), Predicate(1, "Age", "<", 30), Predicate(2, "Rel", "=", rel)),
        ))
    for rel in (PARENT, PARENT_IN_LAW):
        tag = rel.split()[0].split("/")[0].lower()
        dcs.append(ForeignKeyDC(
            f"DC11_{tag}", 2,
            (Predicate(1, "Rel", "=", OWNER), Predicate(1, "Age", ">", 94), Predicate(2, "Rel", "=", rel)),
        ))
    for a, b in ((SPOUSE, SPOUSE), (SPOUSE, PARTNER), (PARTNER, PARTNER)):
        tag = f"{a.split()[0].lower()}_{b.split()[0].lower()}"
        dcs.append(ForeignKeyDC(f"DC12_{tag}", 2, (Predicate(1, "Rel", "=", a), Predicate(2, "Rel", "=", b))))
    return dcs


def _role_window(rel: str, age: int, multi: str) -> tuple[int, int] | None:
    if rel in (BIO, ADOPTED, STEP):
        lo, hi = (age - 69, age - 12) if multi == "0" else (age - 50, age - 12)
    elif rel in (SPOUSE, PARTNER):
        lo, hi = max(16, age - 50), age + 50
    elif rel == SIBLING:
        lo, hi = age - 35, age + 35
    elif rel in (PARENT, PARENT_IN_LAW):
        if age > 94:
            return None
        lo, hi = age + 12, age + 115
    elif rel == GRANDCHILD:
        if age < 30:
            return None
        lo, hi = age - 115, age - 30
    elif rel == CHILD_IN_LAW:
        if age < 30:
            return None
        lo, hi = max(16, age - 69), age - 1
    elif rel == FOSTER:
        lo, hi = age - 69, age - 12
    elif rel == HOUSEMATE:
        lo, hi = 15, 85
    elif rel == OTHER_NONREL:
        lo, hi = 15, 95
    else:
        lo, hi = 0, 95
    lo, hi = max(0, lo), min(MAX_AGE, hi, 100)
    return (lo, hi) if lo <= hi else None


def _household(rng: random.Random, size: int) -> list[tuple[int, str, str]]:
    age = rng.randint(18, 95)
    multi = "1" if rng.random() < 0.2 else "0"
    members = [(age, OWNER, multi)]
    has_partner = False
    roles, weights = zip(*MEMBER_WEIGHTS.items())
    while len(members) < size:
        if not has_partner and len(members) == 1 and rng.random() < 0.55:
            rel = SPOUSE
        else:
            rel = rng.choices(roles, weights)[0]
        if rel in (SPOUSE, PARTNER) and has_partner:
            continue
        window = _role_window(rel, age, multi)
        if window is None:
            continue
        has_partner = has_partner or rel in (SPOUSE, PARTNER)
        members.append((rng.randint(*window), rel, "1" if rng.random() < 0.2 else "0"))
    return members


def _sizes(rng: random.Random, households: int, persons: int) -> list[int]:
    keys, weights = zip(*SIZE_WEIGHTS.items())
    sizes = rng.choices(keys, weights, k=households)
    total = sum(sizes)
    while total != persons:
        h = rng.randrange(households)
        if total < persons and sizes[h] < 7:
            sizes[h] += 1
            total += 1
        elif total > persons and sizes[h] > 1:
            sizes[h] -= 1
            total -= 1
    return sizes


def generate_data(config: BenchConfig) -> tuple[Relation, Relation]:
    """Ground-truth Persons (FK filled) and Housing."""
    rng = random.Random(config.seed)
    households = max(1, round(HOUSEHOLDS_1X * config.scale))
    persons = max(households, round(PERSONS_1X * config.scale))
    persons = min(persons, 7 * households)
    n_areas = min(600, max(1, round(households / 60)))
    counties = max(1, n_areas // 4)
    states = max(1, counties // 5)

    h_rows = []
    for h in range(1, households + 1):
        area = rng.randrange(n_areas)
        county = area * counties // n_areas
        st = county * states // counties
        extras = [f"C{county:03d}", f"S{st:02d}", f"D{st // 3}", f"R{st // 9}"]
        extras += [rng.choice(("yes", "no")) for _ in range(4)]
        row = (h, rng.choices(TENURES, TENURE_WEIGHTS)[0], f"A{area:03d}", *extras[: config.extra_r2_columns])
        h_rows.append(row)
    housing = Relation(housing_schema(config.extra_r2_columns), h_rows, "housing")

    p_rows = []
    pid = 1
    for h, size in enumerate(_sizes(rng, households, persons), start=1):
        for age, rel, multi in _household(rng, size):
            p_rows.append((pid, age, rel, multi, h))
            pid += 1
    truth = Relation(PERSONS_SCHEMA, p_rows, "persons")
    return truth, housing


# -- CC templates -------------------------------------------------------------------

GOOD_TEMPLATES = (
    (18, 114, OWNER, "0"), (18, 114, SPOUSE, "1"),
    (0, 10, BIO, None), (6, 10, BIO, None), (2, 5, BIO, None), (3, 5, BIO, None), (3, 5, BIO, "0"),
    (11, 18, BIO, None), (11, 13, BIO, None), (14, 18, BIO, None),
    (19, 30, BIO, None), (22, 30, BIO, None), (25, 30, BIO, "1"),
    (18, 39, PARENT, None), (40, 85, PARENT, "0"), (40, 85, PARENT, "1"),
    (15, 85, HOUSEMATE, "0"), (15, 85, HOUSEMATE, "1"),
    (18, 30, GRANDCHILD, "0"), (18, 30, GRANDCHILD, "1"),
    (18, 114, PARTNER, "1"),
    (0, 30, STEP, None), (0, 20, STEP, None), (21, 30, STEP, "1"),
    (19, 40, ADOPTED, None), (25, 40, ADOPTED, "1"), (31, 40, ADOPTED, "1"),
)

BAD_TEMPLATES = (
    (21, 114, SPOUSE, "1"), (18, 39, SPOUSE, "1"),
    (18, 114, OWNER, "0"), (18, 114, SPOUSE, "1"),
    (0, 10, BIO, None), (6, 10, BIO, None), (2, 5, BIO, None), (3, 5, BIO, "0"),
    (11, 18, BIO, None), (11, 13, BIO, None), (14, 18, BIO, None), (19, 30, BIO, None), (22, 30, BIO, None),
    (40, 85, PARENT, "0"), (40, 85, PARENT, "1"),
    (15, 85, HOUSEMATE, "0"), (15, 85, HOUSEMATE, "1"),
    (18, 30, GRANDCHILD, "0"), (18, 30, GRANDCHILD, "1"),
    (18, 114, PARTNER, "1"), (0, 30, STEP, None),
    (21, 64, SPOUSE, "1"), (18, 85, SPOUSE, "1"), (40, 85, SPOUSE, "1"),
    (65, 114, PARENT, "1"), (0, 39, GRANDCHILD, "1"), (22, 39, GRANDCHILD, "1"),
    (0, 21, STEP, None), (19, 39, ADOPTED, None), (25, 39, ADOPTED, "1"), (31, 39, ADOPTED, "1"),
)

_KINDS = (("Age", INTEGER), ("Area", CATEGORICAL), ("Multi-ling", CATEGORICAL), ("Rel", CATEGORICAL), ("Tenure", CATEGORICAL))


def make_cc(cc_id: str, template: tuple, r2_value: tuple, target: int = 0) -> LinearCC:
    lo, hi, rel, multi = template
    r1 = [Predicate(1, "Age", ">=", lo), Predicate(1, "Age", "<=", hi), Predicate(1, "Rel", "=", rel)]
    if multi is not None:
        r1.append(Predicate(1, "Multi-ling", "=", multi))
    if r2_value[0] == "pair":
        r2 = [Predicate(1, "Tenure", "=", r2_value[1]), Predicate(1, "Area", "=", r2_value[2])]
    else:
        r2 = [Predicate(1, "Area", "=", r2_value[1])]
    return LinearCC(cc_id, tuple(r1), tuple(r2), target, _KINDS)


def r2_values(housing: Relation) -> list[tuple]:
    """Bare Area values and Tenure-Area pairs occurring in Housing."""
    pairs = sorted(set(zip(housing.column("Tenure"), housing.column("Area"))))
    areas = sorted(set(housing.column("Area")))
    return [("area", a) for a in areas] + [("pair", t, a) for t, a in pairs]


def _families(templates: Sequence[tuple]) -> list[list[int]]:
    """Groups of templates connected by overlapping R1 selections."""
    probe = [make_cc(str(i), t, ("area", "_")) for i, t in enumerate(templates)]
    parent = list(range(len(templates)))

    def find(x):
        while parent[x] != x:
            parent[x] = parent[parent[x]]
            x = parent[x]
        return x

    for i, a in enumerate(probe):
        for j in range(i + 1, len(probe)):
            b = probe[j]
            if not any(a.r1_sets[c].disjoint_with(b.r1_sets[c]) for c in a.r1_sets.keys() & b.r1_sets.keys()):
                parent[find(j)] = find(i)
    groups: dict[int, list[int]] = {}
    for i in range(len(templates)):
        groups.setdefault(find(i), []).append(i)
    return list(groups.values())


def _contains(outer: tuple, inner: tuple) -> bool:
    return outer[2] == inner[2] and outer[0] <= inner[0] and inner[1] <= outer[1] and (outer[3] is None or outer[3] == inner[3])


def _good_pool(values: Sequence[tuple], rng: random.Random) -> list[tuple[tuple, tuple]]:
    """(template, r2 value) pairs no two of which intersect.

    A template family with a single member is crossed with every value. A
    larger family is either spread (its top template with every value) or
    rooted at one area (each member with the bare area, leaves also with that
    area's Tenure pairs); mixing values across nested templates would make
    them intersect.
    """
    areas = [v for v in values if v[0] == "area"]
    pool = []
    for fam in _families(GOOD_TEMPLATES):
        temps = [GOOD_TEMPLATES[i] for i in fam]
        if len(temps) == 1:
            pool += [(temps[0], v) for v in values]
            continue
        tops = [t for t in temps if not any(o != t and _contains(o, t) for o in temps)]
        if rng.random() < 0.5 or not areas:
            pool += [(t, v) for t in tops for v in values]
        else:
            home = rng.choice(areas)[1]
            leaves = [t for t in temps if not any(o != t and _contains(t, o) for o in temps)]
            pool += [(t, ("area", home)) for t in temps]
            pool += [(t, v) for t in leaves for v in values if v[0] == "pair" and v[2] == home]
    return pool


def instantiate_constraint_templates(
    cc_set: str, values: Sequence[tuple], count: int, seed: int = 0
) -> list[LinearCC]:
    """CCs from the template table crossed with R2 values; targets are left at 0."""
    if count == 0:
        return []
    rng = random.Random(seed)
    if cc_set == "good":
        pool = _good_pool(values, rng)
        lead: list[tuple[tuple, tuple]] = []
    else:
        pool = [(t, v) for t in BAD_TEMPLATES for v in values]
        areas = [v for v in values if v[0] == "area"] or list(values)
        anchor = areas[0]
        lead = [(BAD_TEMPLATES[0], anchor), (BAD_TEMPLATES[1], anchor)] if count >= 2 else []
        pool = [p for p in pool if p not in lead]
    if count > len(pool) + len(lead):
        raise CapacityExceeded(f"{count} CCs requested but only {len(pool) + len(lead)} available")
    rng.shuffle(pool)
    chosen = (lead + pool)[:count]
    return [make_cc(f"CC{n:04d}", t, v) for n, (t, v) in enumerate(chosen, start=1)]


@dataclass
class BenchInstance:
    r1: Relation
    r2: Relation
    truth: Relation
    constraints: ConstraintSet
    config: BenchConfig


def generate_instance(config: BenchConfig) -> BenchInstance:
    truth, housing = generate_data(config)
    values = r2_values(housing)
    ccs = instantiate_constraint_templates(config.cc_set, values, config.cc_count, config.seed)
    counts = cc_counts(ccs, materialize_join(truth, housing))
    ccs = [LinearCC(c.id, c.r1_predicates, c.r2_predicates, counts[c.id], c.kinds) for c in ccs]
    if config.cc_set == "good":
        rel = classify_all(ccs)
        if any(k == INTERSECTING for k in rel.values()):
            raise LinksynthError("good CC set produced an intersecting pair")
    constraints = ConstraintSet(tuple(ccs), tuple(household_dcs(config.dc_set)))
    return BenchInstance(truth.without_fk(), housing, truth, constraints, config)


def write_instance(inst: BenchInstance, out_dir: str | Path) -> None:
    from .constraints import constraints_to_dict
    from .model import write_relation, write_schema

    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    write_relation(inst.r1, out / "r1.csv")
    write_relation(inst.r2, out / "r2.csv")
    write_relation(inst.truth, out / "truth.csv")
    write_schema(inst.r1.schema, out / "r1.schema.json")
    write_schema(inst.r2.schema, out / "r2.schema.json")
    (out / "constraints.json").write_text(json.dumps(constraints_to_dict(inst.constraints), indent=2) + "\n", encoding="utf-8")
    (out / "config.json").write_text(json.dumps(asdict(inst.config), indent=2) + "\n", encoding="utf-8")
