import json
from fractions import Fraction

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import (
    CORRUPTED_FK,
    COMPLETED_FK,
    RUNNING,
    TINY_R1,
    naive_dc_error,
    running_instance,
    running_schemas,
    tiny_instance,
)
from linksynth.constraints import (
    ConstraintSet,
    IntRange,
    cc_counts,
    constraints_from_dict,
    constraints_to_dict,
    dc_error_fraction,
    eval_cc_count,
    eval_dc_body,
    iter_violations,
    parse_constraints,
    relative_cc_error,
    relative_error,
)
from linksynth.errors import (
    ConstraintError,
    ContradictoryConstraints,
    ForbiddenFKReference,
    MalformedRange,
    UnknownColumn,
)
from linksynth.model import Relation, init_join_view, materialize_join


def _cs(doc):
    s1, s2 = running_schemas()
    return constraints_from_dict(doc, s1, s2)


def test_parse_running_constraints():
    s1, s2 = running_schemas()
    cs = parse_constraints(RUNNING / "constraints.json", s1, s2)
    assert [c.target for c in cs.ccs] == [4, 2, 3, 4]
    assert len(cs.dcs) == 5 and all(d.arity == 2 for d in cs.dcs)
    cc3 = cs.ccs[2]
    assert cc3.r1_sets["Age"] == IntRange(None, 24)
    assert [p.column for p in cc3.r2_predicates] == ["Area"]


def test_dc_on_fk_rejected():
    with pytest.raises(ForbiddenFKReference):
        _cs({"dcs": [{"id": "D", "arity": 2, "body": [{"t": 1, "col": "h_id", "op": "=", "t2": 2, "col2": "h_id"}]}]})


def test_unknown_column_and_bad_ranges():
    with pytest.raises(UnknownColumn):
        _cs({"ccs": [{"id": "C", "where": [{"col": "Height", "op": "=", "value": 1}], "target": 1}]})
    with pytest.raises(MalformedRange):
        _cs({"ccs": [{"id": "C", "where": [{"col": "Age", "in": [30, 10]}], "target": 1}]})
    with pytest.raises(MalformedRange):
        _cs({"ccs": [{"id": "C", "where": [{"col": "Rel", "in": [1, 2]}], "target": 1}]})
    with pytest.raises(MalformedRange):
        _cs({"ccs": [{"id": "C", "where": [{"col": "Age", "op": "!=", "value": 3}], "target": 1}]})


def test_duplicate_ids_and_contradictions():
    cc = {"id": "C", "where": [{"col": "Area", "op": "=", "value": "NYC"}], "target": 1}
    with pytest.raises(ConstraintError):
        _cs({"ccs": [cc, cc]})
    other = {**cc, "id": "D", "target": 2}
    with pytest.raises(ContradictoryConstraints):
        _cs({"ccs": [cc, other]})
    # the same selection written as a range is the same CC
    a = {"id": "A", "where": [{"col": "Age", "in": [3, 5]}], "target": 1}
    b = {"id": "B", "where": [{"col": "Age", "op": ">", "value": 2}, {"col": "Age", "op": "<", "value": 6}], "target": 4}
    with pytest.raises(ContradictoryConstraints):
        _cs({"ccs": [a, b]})


def test_dc_arity_must_match_body():
    with pytest.raises(ConstraintError):
        _cs({"dcs": [{"id": "D", "arity": 3, "body": [{"t": 1, "col": "Rel", "op": "=", "t2": 2, "col2": "Rel"}]}]})


def test_dsl_round_trip():
    _, _, cs = running_instance()
    again = _cs(json.loads(json.dumps(constraints_to_dict(cs))))
    assert [c.canonical() for c in again.ccs] == [c.canonical() for c in cs.ccs]
    assert [d.body for d in again.dcs] == [d.body for d in cs.dcs]


def test_cc_counts_on_completed_view():
    r1, r2, cs = running_instance()
    view = materialize_join(r1.with_fk(COMPLETED_FK), r2)
    assert [eval_cc_count(c, view) for c in cs.ccs] == [4, 2, 3, 4]
    assert cc_counts(cs.ccs, view) == {"CC1": 4, "CC2": 2, "CC3": 3, "CC4": 4}
    assert all(relative_cc_error(c, view) == 0 for c in cs.ccs)


def test_null_cells_fail_r2_predicates():
    r1, r2, cs = running_instance()
    view = init_join_view(r1, r2.schema)
    assert [eval_cc_count(c, view) for c in cs.ccs] == [0, 0, 0, 0]
    empty = init_join_view(Relation(r1.schema, []), r2.schema)
    assert eval_cc_count(cs.ccs[0], empty) == 0


def test_dc_body_examples():
    r1, _, cs = running_instance()
    dcs = {d.id: d for d in cs.dcs}
    row = {k: dict(zip(r1.schema.names, r1.row_by_key(k))) for k in r1.keys}
    assert eval_dc_body(dcs["DC_OO"], [row[1], row[2]])
    assert not eval_dc_body(dcs["DC_OO"], [row[1], row[5]])
    owner = {**row[1], "Age": 75}
    spouse = {**row[5], "Age": 26}
    assert not eval_dc_body(dcs["DC_OS_low"], [owner, spouse])
    assert eval_dc_body(dcs["DC_OS_low"], [owner, {**spouse, "Age": 24}])


def test_relative_error_formula():
    assert relative_error(4, 4) == 0
    assert relative_error(0, 5) == Fraction(1, 2)
    assert relative_error(100, 84) == Fraction(16, 100)
    assert relative_error(3, 0) == Fraction(3, 10)


def test_dc_error_fraction_running_example():
    r1, _, cs = running_instance()
    oo = [d for d in cs.dcs if d.id == "DC_OO"]
    assert dc_error_fraction(cs.dcs, r1.with_fk(CORRUPTED_FK.copy() | {5: 3})) == naive_dc_error(
        cs.dcs, r1.with_fk(CORRUPTED_FK.copy() | {5: 3})
    )
    assert dc_error_fraction(oo, r1.with_fk(COMPLETED_FK)) == 0
    assert dc_error_fraction(oo, r1.with_fk(CORRUPTED_FK)) == Fraction(2, 9)
    # under all five DCs the reference spouse (24) sits 51 years below owner 1
    assert dc_error_fraction(cs.dcs, r1.with_fk(COMPLETED_FK)) == Fraction(2, 9)
    assert dc_error_fraction(cs.dcs, r1.with_fk(CORRUPTED_FK)) == Fraction(5, 9)
    assert dc_error_fraction([], r1.with_fk(CORRUPTED_FK)) == 0


def test_violations_are_deduplicated_sets():
    s1, _ = running_schemas()
    cols = {"Rel": ["Owner", "Owner", "Owner"]}
    oo = _cs({"dcs": [{"id": "D", "arity": 2, "body": [{"t": 1, "col": "Rel", "op": "=", "value": "Owner"},
                                                        {"t": 2, "col": "Rel", "op": "=", "value": "Owner"}]}]}).dcs[0]
    found = {frozenset(v) for v in iter_violations(oo, cols, 3)}
    assert found == {frozenset({0, 1}), frozenset({0, 2}), frozenset({1, 2})}
    assert s1.fk == "h_id"


@settings(max_examples=150, deadline=None)
@given(st.integers(0, 10**6))
def test_dc_error_matches_naive_oracle(seed):
    import random

    r1, r2, cs = tiny_instance(seed, max_r1=7, max_r2=3, max_dcs=3)
    rng = random.Random(seed)
    r1_hat = r1.with_fk({k: rng.choice(r2.keys) for k in r1.keys})
    assert dc_error_fraction(cs.dcs, r1_hat) == naive_dc_error(cs.dcs, r1_hat)
    assert r1_hat.schema == TINY_R1


def test_empty_constraint_set():
    assert ConstraintSet((), ()).user_ccs == []
