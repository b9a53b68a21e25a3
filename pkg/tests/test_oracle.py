import itertools

import pytest

from helpers import COMPLETED_FK, naive_check, running_instance, running_schemas, tiny_instance
from linksynth.constraints import ConstraintSet
from linksynth.errors import InstanceTooLarge, LinksynthError
from linksynth.model import Relation
from linksynth.oracle import (
    CnfFormula,
    all_formulas,
    brute_force_decide,
    canonical_formulas,
    nae_satisfiable,
    parse_dimacs,
    reduce_nae3sat,
    write_instance,
)


def naive_decide(r1, r2, cs) -> bool:
    """Every FK assignment, scored by the naive evaluators."""
    for choice in itertools.product(r2.keys, repeat=len(r1)):
        r1_hat = r1.with_fk(dict(zip(r1.keys, choice)))
        dc_err, errs = naive_check(r1_hat, r2, cs)
        if dc_err == 0 and not any(errs):
            return True
    return False


def test_two_owners_one_household_unsat():
    r1, r2, cs = running_instance()
    s1, s2 = running_schemas()
    owners = Relation(s1, [(1, 40, "Owner", "0", None), (2, 41, "Owner", "0", None)])
    one = Relation(s2, [(1, "Chicago")])
    oo = ConstraintSet((), tuple(d for d in cs.dcs if d.id == "DC_OO"))
    assert brute_force_decide(owners, one, oo) == (False, None)
    sat, witness = brute_force_decide(owners, Relation(s2, [(1, "Chicago"), (2, "Chicago")]), oo)
    assert sat and witness == {1: 1, 2: 2}


def test_running_example_is_satisfiable():
    r1, r2, cs = running_instance()
    sat, witness = brute_force_decide(r1, r2, cs, limit=10**8)
    assert sat
    assert naive_check(r1.with_fk(witness), r2, cs) == (0, [0, 0, 0, 0])
    # the reference completion breaks DC_OS_low, so it is not the witness
    assert witness != COMPLETED_FK


def test_trivial_and_empty():
    s1, s2 = running_schemas()
    empty = ConstraintSet((), ())
    assert brute_force_decide(Relation(s1, []), Relation(s2, []), empty) == (True, {})
    assert brute_force_decide(Relation(s1, [(1, 3, "Child", "0", None)]), Relation(s2, []), empty) == (False, None)


def test_too_large():
    r1, r2, cs = running_instance()
    with pytest.raises(InstanceTooLarge):
        brute_force_decide(r1, r2, cs, limit=1000)


@pytest.mark.parametrize("seed", range(60))
def test_matches_naive_enumeration(seed):
    r1, r2, cs = tiny_instance(seed, max_r1=5, max_r2=3)
    sat, witness = brute_force_decide(r1, r2, cs)
    assert sat == naive_decide(r1, r2, cs)
    if sat:
        dc_err, errs = naive_check(r1.with_fk(witness), r2, cs)
        assert dc_err == 0 and not any(errs)


def test_parse_dimacs():
    f = parse_dimacs("c demo\np cnf 3 2\n1 -2 3 0\n-1 2\n 3 0\n")
    assert f == CnfFormula(3, ((1, -2, 3), (-1, 2, 3)))
    with pytest.raises(LinksynthError):
        parse_dimacs("1 2 3 0\n")
    with pytest.raises(LinksynthError):
        parse_dimacs("p cnf 2 1\n1 2 3 0\n")
    with pytest.raises(LinksynthError):
        parse_dimacs("p cnf 3 1\n1 2 0\n")


def test_nae_examples():
    assert nae_satisfiable(CnfFormula(1, ()))
    assert not nae_satisfiable(CnfFormula(1, ((1, 1, 1),)))
    assert nae_satisfiable(CnfFormula(2, ((1, 1, 2),)))
    assert not nae_satisfiable(CnfFormula(2, ((1, 1, 2), (1, 1, -2))))


def test_reduction_shape(tmp_path):
    r1, r2, cs = reduce_nae3sat(CnfFormula(2, ((1, 1, 2),)))
    assert len(r2) == 2 and len(cs.dcs) == 2 and cs.ccs == ()
    # three occurrences plus a pivot row for x1, which only appears positively
    assert len(r1) == 4
    write_instance(tmp_path, r1, r2, cs)
    assert sorted(p.name for p in tmp_path.iterdir()) == [
        "constraints.json", "r1.csv", "r1.schema.json", "r2.csv", "r2.schema.json"]


def _canon(num_vars, clauses):
    best = None
    for perm in itertools.permutations(range(1, num_vars + 1)):
        for flips in itertools.product((1, -1), repeat=num_vars):
            def m(lit):
                return (1 if lit > 0 else -1) * flips[abs(lit) - 1] * perm[abs(lit) - 1]

            key = tuple(sorted(tuple(sorted(m(l) for l in c)) for c in clauses))
            best = key if best is None or key < best else best
    return best


def test_canonical_set_covers_every_orbit():
    raw = {_canon(3, f.clauses) for f in all_formulas(3, 3) if f.num_vars == 3}
    reps = canonical_formulas(3, 3)
    assert {_canon(3, f.clauses) for f in reps} == raw
    assert len(reps) == len(raw)


def test_reduction_exhaustive_small():
    # every raw formula, no orbit reduction
    for f in all_formulas(3, 2):
        r1, r2, cs = reduce_nae3sat(f)
        assert brute_force_decide(r1, r2, cs)[0] == nae_satisfiable(f), f
