import json
import random

import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from helpers import CORRUPTED_FK, COMPLETED_FK, naive_check, running_instance, tiny_instance
from linksynth.constraints import ConstraintSet
from linksynth.ilp import ALL_WAY, MODIFIED, NONE
from linksynth.model import materialize_join
from linksynth.pipeline import PHASES, SolveConfig, check_solution, solve_hybrid


def test_running_example_end_to_end():
    r1, r2, cs = running_instance()
    r1_hat, r2_hat, rep = solve_hybrid(r1, r2, cs, SolveConfig())
    dc_err, errs = naive_check(r1_hat, r2_hat, cs)
    assert dc_err == 0 and errs == [0, 0, 0, 0]
    assert rep.ok and rep.join_equal and rep.dc_error == 0
    assert [c.achieved for c in rep.per_cc] == [4, 2, 3, 4]
    assert r2_hat.rows[: len(r2)] == r2.rows
    assert [r[:-1] for r in r1_hat.rows] == [r[:-1] for r in r1.rows]


@pytest.mark.parametrize("mode", [ALL_WAY, MODIFIED, NONE])
def test_marginal_modes_solve_running_example(mode):
    r1, r2, cs = running_instance()
    r1_hat, r2_hat, rep = solve_hybrid(r1, r2, cs, SolveConfig(marginal_mode=mode))
    assert naive_check(r1_hat, r2_hat, cs) == (0, [0, 0, 0, 0])


def test_empty_constraints_still_complete():
    r1, r2, _ = running_instance()
    r1_hat, r2_hat, rep = solve_hybrid(r1, r2, ConstraintSet((), ()), SolveConfig())
    assert not r1_hat.fk_missing() and rep.per_cc == [] and rep.ok
    assert set(r2_hat.keys) >= {r1_hat.value(k, "h_id") for k in r1_hat.keys}


def test_report_json_shape():
    r1, r2, cs = running_instance()
    _, _, rep = solve_hybrid(r1, r2, cs, SolveConfig())
    text = rep.to_json()
    doc = json.loads(text)
    assert doc["schemaVersion"] == 1
    assert set(doc["timings"]) == set(PHASES)
    assert "\"relativeError\": 0.000000" in text and "\"dcError\": 0.000000" in text
    t = doc["timings"]
    assert all(v >= 0 for v in t.values())
    assert sum(t[p] for p in PHASES if p != "total") <= t["total"] * 1.01 + 1e-3
    assert "timings" not in rep.to_dict(timings=False)


def test_same_seed_same_output():
    r1, r2, cs = running_instance()
    a = solve_hybrid(r1, r2, cs, SolveConfig(seed=5))
    b = solve_hybrid(r1, r2, cs, SolveConfig(seed=5))
    assert a[0].rows == b[0].rows and a[1].rows == b[1].rows
    assert a[2].to_json(False) == b[2].to_json(False)


def test_check_solution_scores_given_completion():
    r1, r2, cs = running_instance()
    oo = ConstraintSet(cs.ccs, tuple(d for d in cs.dcs if d.id == "DC_OO"))
    good = check_solution(r1.with_fk(COMPLETED_FK), r2, None, oo)
    assert good.ok and good.dc_error == 0
    bad_fk = r1.with_fk(CORRUPTED_FK)
    bad = check_solution(bad_fk, r2, None, oo)
    assert not bad.ok and bad.dc_error * 9 == 2
    ref = materialize_join(r1.with_fk(COMPLETED_FK), r2)
    assert check_solution(r1.with_fk(COMPLETED_FK), r2, ref, oo).join_equal
    moved = r1.with_fk({**COMPLETED_FK, 9: 1})
    assert not check_solution(moved, r2, ref, oo).join_equal


@settings(max_examples=80, deadline=None)
@given(st.integers(0, 10**6))
def test_random_instances_are_dc_valid_and_scored_right(seed):
    r1, r2, cs = tiny_instance(seed, max_r1=10, max_r2=4, max_dcs=3, max_ccs=4)
    r1_hat, r2_hat, rep = solve_hybrid(r1, r2, cs, SolveConfig(seed=random.Random(seed).randint(0, 9)))
    dc_err, errs = naive_check(r1_hat, r2_hat, cs)
    assert dc_err == 0 and rep.dc_error == 0
    assert [c.relative_error for c in rep.per_cc] == errs
    assert rep.join_equal and r2_hat.rows[: len(r2)] == r2.rows
