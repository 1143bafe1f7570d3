import random

import pytest

from chrconf.confluence import (CANNOT_PROVE, CONFLUENT, LOCALLY_CONFLUENT, NOT_CONFLUENT, Limits, MetaCorner,
                                ModeError, check, covers, critical_alpha_corners_classical,
                                critical_alpha_corners_meta, critical_beta_corners, critical_pre_corners,
                                join_objects, joinable, split_joinable)
from chrconf.meta import INT, MetaState, Sampler, TypeOf, new_meta_var
from chrconf.semantics import ObjectCorner, canon
from chrconf.specs import parse_spec
from chrconf.syntax import parse_program
from conftest import load, load_spec

ABC = parse_program("a <=> b.\na <=> c.\n")
ABC_SPEC = """
invariant state <{a}, true>.
invariant state <{b}, true>.
invariant state <{c}, true>.
equiv <{b}, true> ~ <{c}, true>.
"""

# p steps to q; the equivalence relates any two p states but no q states
PQ = parse_program("p(X) <=> q(X).\n")
PQ_INV = """
invariant state <{p(N)}, true> where type(int, N).
invariant state <{q(N)}, true> where type(int, N).
equiv <{p(N)}, true> ~ <{p(M)}, true> where type(int, N), type(int, M).
"""


def test_corner_counts():
    assert len(critical_alpha_corners_classical(load("set"))) == 2
    assert len(critical_alpha_corners_classical(load("zigzag"))) == 1
    assert critical_alpha_corners_classical(parse_program("p <=> a.\nq <=> b.\n")) == []
    assert critical_alpha_corners_classical(parse_program("")) == []


def test_pre_corner_describe_names_rules():
    (pc,) = critical_alpha_corners_classical(load("zigzag"))
    assert pc.describe(load("zigzag")).startswith("r1 and r2 overlapping on p(")
    assert str(pc.left).startswith("<{q(") and str(pc.right).startswith("<{r(")


def test_corners_independent_of_rule_order():
    prog = load("set")
    flipped = parse_program("\n".join(reversed(open(prog.path).read().strip().splitlines())))
    keys = lambda p: sorted(pc.key() for pc in critical_alpha_corners_classical(p))
    assert keys(prog) == keys(flipped)
    zig = load("zigzag")
    rev = parse_program("r4 @ r(X) <=> X =< 0 | q(X).\nr3 @ q(X) <=> X > 0 | r(X).\n"
                        "r2 @ p(X) <=> r(X).\nr1 @ p(X) <=> q(X).\n")
    assert keys(zig) == keys(rev)


def test_non_critical_pre_corners_are_dropped():
    # propagation rules with no removed overlap yield no critical corner
    prog = parse_program("p(X) ==> q(X).\np(X) ==> r(X).\n")
    assert critical_alpha_corners_classical(prog) == []
    assert critical_pre_corners(prog) == []


def test_join_objects():
    prog = load("zigzag")
    j = join_objects(canon("q(1)"), canon("r(1)"), prog)
    assert j.status == "joinable" and len(j.left_path) == 2 and len(j.right_path) == 1
    assert join_objects(canon("q(X)"), canon("r(X)"), prog).status == "non-joinable"


def test_meta_alpha_corner_for_zigzag():
    (c,) = critical_alpha_corners_meta(load("zigzag"), load_spec("zigzag").invariant)
    assert c.kind == "alpha"
    assert [a.functor for a in c.ancestor.atoms] == ["p"]
    assert not c.ancestor.rest
    assert any(isinstance(x, TypeOf) and x.type == INT for x in c.where)


def test_set_beta_corners():
    spec = load_spec("set")
    rejected = []
    cs = critical_beta_corners(load("set"), spec.invariant, spec.equiv, rejected=rejected)
    kinds = sorted(c.kind for c in cs)
    assert kinds == ["beta-rule"]
    assert all(joinable(c, load("set"), spec.equiv).proof is not None for c in cs)


def test_identity_equivalence_gives_trivially_joinable_beta_corners():
    spec = parse_spec(PQ_INV.split("equiv")[0] + "equiv <{p(N)}, true> ~ <{p(N)}, true> where type(int, N).\n")
    cs = critical_beta_corners(PQ, spec.invariant, spec.equiv)
    assert cs
    for c in cs:
        assert joinable(c, PQ, spec.equiv).proof is not None


def test_equal_wings_join_without_steps():
    n = new_meta_var("N")
    ms = MetaState((), (), (), None)
    c = MetaCorner("alpha", ms, ms, ms, (TypeOf(INT, n),))
    proof = joinable(c, load("zigzag")).proof
    assert proof.steps() == (0, 0) and proof.closing == "identical"


def test_inconsistent_corner_is_an_inconsistent_leaf():
    from chrconf.meta import Sat
    from chrconf.terms import Compound, Int
    c = MetaCorner("alpha", MetaState((), ()), MetaState((), ()), MetaState((), ()),
                   (Sat((Compound(">", (Int(0), Int(1))),)),))
    tree = split_joinable(c, load("zigzag"))
    assert tree.status == "inconsistent" and tree.ok


def test_abc_joins_modulo_equivalence_without_split():
    v = check(ABC, "mod-equiv", parse_spec(ABC_SPEC), assume_terminating=True)
    assert v.verdict == CONFLUENT
    alpha = [c for c in v.corners if c.meta.kind == "alpha"]
    assert len(alpha) == 1 and alpha[0].tree.status == "joinable"
    assert alpha[0].tree.proof.steps() == (0, 0)
    assert check(ABC).verdict == NOT_CONFLUENT


def test_beta_corners_are_needed():
    # without beta corners nothing overlaps, but p(1) ~ p(2) -> q(2) cannot rejoin p(1)
    spec = parse_spec(PQ_INV)
    assert critical_alpha_corners_meta(PQ, spec.invariant) == []
    v = check(PQ, "mod-equiv", spec, assume_terminating=True)
    assert v.verdict in (NOT_CONFLUENT, CANNOT_PROVE)
    fixed = parse_spec(PQ_INV + "equiv <{q(N)}, true> ~ <{q(M)}, true> where type(int, N), type(int, M).\n")
    assert check(PQ, "mod-equiv", fixed, assume_terminating=True).verdict == CONFLUENT


def test_broken_equivalence_flips_set_verdict():
    # dropping perm makes the equivalence the identity on sets
    text = open(load_spec("set").path).read().replace(", perm(L1, L2)", ", L1 = L2")
    v = check(load("set"), "mod-equiv", parse_spec(text), assume_terminating=True)
    assert v.verdict != CONFLUENT


def test_verdicts_on_shipped_programs():
    assert check(load("set")).verdict == NOT_CONFLUENT
    assert check(load("zigzag")).verdict == NOT_CONFLUENT
    assert check(load("min")).verdict == LOCALLY_CONFLUENT
    assert check(load("min"), assume_terminating=True).verdict == CONFLUENT
    assert check(load("zigzag"), "invariant", load_spec("zigzag"), True).verdict == CONFLUENT
    v = check(load("set"), "invariant", load_spec("set"), True)
    assert v.verdict == NOT_CONFLUENT and v.witness is not None


def test_locally_confluent_carries_termination_note():
    v = check(load("min"))
    assert v.exit_code == 0 and any("termination" in n for n in v.notes)


def test_mode_errors():
    with pytest.raises(ModeError):
        check(load("set"), "invariant")
    with pytest.raises(ModeError):
        check(load("zigzag"), "mod-equiv", load_spec("zigzag"))
    with pytest.raises(ModeError):
        check(load("set"), "bogus")


def test_zigzag_split_tree():
    v = check(load("zigzag"), "invariant", load_spec("zigzag"), True)
    (r,) = v.corners
    assert r.tree.status == "split"
    assert [c.status for c in r.tree.children] == ["joinable", "joinable"]
    assert sorted(c.proof.steps() for c in r.tree.children) == [(0, 1), (1, 0)]
    assert r.tree.probe.passed


def test_covers():
    prog = load("zigzag")
    (pc,) = critical_alpha_corners_classical(prog)
    hit = ObjectCorner("alpha", canon("p(1), r(5)"), canon("q(1), r(5)"), canon("r(1), r(5)"))
    miss = ObjectCorner("alpha", canon("p(1)"), canon("q(1)"), canon("q(1)"))
    assert covers(pc, hit)
    assert not covers(pc, miss)


def test_split_limits_respected():
    v = check(load("zigzag"), "invariant", load_spec("zigzag"), True, Limits(split_depth=0))
    assert v.verdict in (CANNOT_PROVE, NOT_CONFLUENT)
