import itertools
import json

import pytest

from helpers import OPS, naive_check
from linksynth.analysis import analyze
from linksynth.benchgen import (
    EXTRA_COLUMNS,
    HOUSEHOLDS_1X,
    PERSONS_1X,
    BenchConfig,
    generate_data,
    generate_instance,
    household_dcs,
    instantiate_constraint_templates,
    r2_values,
    write_instance,
)
from linksynth.errors import CapacityExceeded


def _domains(inst):
    doms = {"Age": range(0, 115)}
    for col in ("Rel", "Multi-ling"):
        doms[col] = set(inst.truth.column(col))
    for col in inst.r2.schema.data_columns:
        doms[col] = set(inst.r2.column(col))
    return doms


def _value_sets(cc, doms):
    """Explicit allowed values per constrained column."""
    out = {}
    for p in cc.r1_predicates + cc.r2_predicates:
        allowed = {v for v in doms[p.column] if OPS[p.op](v, p.value)}
        out[p.column] = out.get(p.column, allowed) & allowed
    return out


def _naive_relation(a, b, doms):
    sa, sb = _value_sets(a, doms), _value_sets(b, doms)
    cols = set(sa) | set(sb)
    full = {c: set(doms[c]) for c in cols}
    sa = {c: sa.get(c, full[c]) for c in cols}
    sb = {c: sb.get(c, full[c]) for c in cols}
    if any(not (sa[c] & sb[c]) for c in cols):
        return "disjoint"
    if all(sa[c] <= sb[c] for c in cols) or all(sb[c] <= sa[c] for c in cols):
        return "nested"
    return "intersecting"


def test_scale_one_counts():
    truth, housing = generate_data(BenchConfig(scale=1.0, seed=0))
    assert abs(len(truth) - PERSONS_1X) <= PERSONS_1X * 0.01
    assert abs(len(housing) - HOUSEHOLDS_1X) <= HOUSEHOLDS_1X * 0.01


def test_small_smoke():
    inst = generate_instance(BenchConfig(scale=10 / PERSONS_1X, seed=3, cc_count=5))
    assert 1 <= len(inst.r1) <= 12 and inst.r1.fk_missing()
    assert len(inst.constraints.ccs) == 5


@pytest.mark.parametrize("seed", range(6))
def test_good_set_has_no_intersecting_pair(seed):
    inst = generate_instance(BenchConfig(scale=0.01, seed=seed, cc_count=60))
    doms = _domains(inst)
    for a, b in itertools.combinations(inst.constraints.ccs, 2):
        assert _naive_relation(a, b, doms) != "intersecting", (a.id, b.id)
    assert analyze(list(inst.constraints.ccs)).split.s2 == ()


def test_bad_set_has_intersecting_pair():
    inst = generate_instance(BenchConfig(scale=0.01, seed=0, cc_set="bad", cc_count=20))
    doms = _domains(inst)
    kinds = [_naive_relation(a, b, doms) for a, b in itertools.combinations(inst.constraints.ccs, 2)]
    assert "intersecting" in kinds
    assert analyze(list(inst.constraints.ccs)).split.s2 != ()


def test_deterministic_per_seed():
    a = generate_instance(BenchConfig(scale=0.005, seed=7, cc_count=20))
    b = generate_instance(BenchConfig(scale=0.005, seed=7, cc_count=20))
    c = generate_instance(BenchConfig(scale=0.005, seed=8, cc_count=20))
    assert a.truth.rows == b.truth.rows and a.r2.rows == b.r2.rows
    assert a.constraints == b.constraints
    assert a.truth.rows != c.truth.rows


@pytest.mark.parametrize("dc_set", ["good8", "all12"])
def test_truth_satisfies_everything(dc_set):
    inst = generate_instance(BenchConfig(scale=0.008, seed=2, dc_set=dc_set, cc_count=40))
    dc_err, errs = naive_check(inst.truth, inst.r2, inst.constraints)
    assert dc_err == 0 and not any(errs)


def test_dc_sets():
    good = {d.id for d in household_dcs("good8")}
    every = {d.id for d in household_dcs("all12")}
    assert good < every
    assert all(int(i[2:4]) <= 8 for i in good)
    assert {int(i[2:4]) for i in every} == set(range(1, 13))


def test_capacity_and_zero_count():
    _, housing = generate_data(BenchConfig(scale=0.0005, seed=0))
    values = r2_values(housing)
    assert instantiate_constraint_templates("good", values, 0) == []
    with pytest.raises(CapacityExceeded):
        instantiate_constraint_templates("good", values, 10**6)


def test_config_validation():
    for bad in (dict(scale=0), dict(dc_set="x"), dict(cc_set="x"), dict(extra_r2_columns=99), dict(cc_count=-1)):
        with pytest.raises(ValueError):
            BenchConfig(**bad)


def test_extra_columns_and_files(tmp_path):
    inst = generate_instance(BenchConfig(scale=0.002, seed=1, cc_count=5, extra_r2_columns=3))
    assert inst.r2.schema.data_columns[-3:] == list(EXTRA_COLUMNS[:3])
    write_instance(inst, tmp_path)
    names = sorted(p.name for p in tmp_path.iterdir())
    assert names == ["config.json", "constraints.json", "r1.csv", "r1.schema.json", "r2.csv", "r2.schema.json", "truth.csv"]
    assert json.loads((tmp_path / "config.json").read_text())["extra_r2_columns"] == 3
