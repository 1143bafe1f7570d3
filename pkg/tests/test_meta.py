import random

import pytest

from chrconf.meta import (CONST, INT, VARTYPE, Entails, Eq, FreshVars, MetaState, NotGround, Perm, Refutes, Sampler,
                          TypeOf, drop, drop_state, evaluate, lift, list_of, m_solve, meta_successors, name_of,
                          sample_concretizations, split, strengthen_for_builtin, strengthen_for_rule)
from chrconf.semantics import canon, successors
from chrconf.syntax import parse_conjunction, parse_term
from chrconf.terms import Compound, Const, Int, Name, Var, mklist, var_set
from conftest import load

N = Var("N")


def gt(a, b):
    return Compound(">", (a, b))


def le(a, b):
    return Compound("=<", (a, b))


def state(functor, *where):
    return MetaState((Compound(functor, (N,)),), (), (), None, (TypeOf(INT, N),) + where)


def test_lift_consistently_renames_variables():
    (p, c), mapping = lift(tuple(parse_conjunction("p(A), A > 2")))
    m = mapping["A"]
    assert p == Compound("p", (m,)) and c == gt(m, Int(2))
    ground, mapping = lift(Const("c"))
    assert ground == Const("c") and not mapping


def test_drop_inverts_naming():
    assert drop(Compound("p", (Name("A"),))) == parse_term("p(A)")
    assert drop(Name("X")) == Var("X")
    t = parse_term("f(X, g(Y), a)")
    assert drop(name_of(t)) == t
    with pytest.raises(NotGround):
        drop(Compound("p", (N,)))


def test_m_solve_modal_constraints():
    res = m_solve([TypeOf(INT, N), Entails((), (), (gt(N, Int(0)),))])
    assert res.status == "consistent"
    # the witness is checked directly
    assert isinstance(res.witness["N"], Int) and res.witness["N"].value > 0
    assert m_solve([TypeOf(INT, N), Entails((), (), (gt(N, Int(0)),)),
                    Entails((), (), (le(N, Int(0)),))]).inconsistent


def test_m_solve_types():
    assert m_solve([TypeOf(VARTYPE, N), Eq(N, Const("a"))]).inconsistent
    assert m_solve([TypeOf(CONST, N), Eq(N, Const("a"))]).status == "consistent"
    assert m_solve([TypeOf(list_of(CONST), N), Eq(N, mklist([Var("A"), Int(1)]))]).status == "consistent"


def test_perm_and_freshness_evaluation():
    l1, l2 = mklist([Const("a"), Const("b")]), mklist([Const("b"), Const("a")])
    assert evaluate(Perm(l1, l2), {})
    assert not evaluate(Perm(l1, mklist([Const("a")])), {})
    assert evaluate(FreshVars((Name("V1"),), (Compound("p", (Name("V2"),)),)), {})
    assert not evaluate(FreshVars((Name("V1"),), (Compound("p", (Name("V1"),)),)), {})


def test_meta_transitions_follow_guards():
    zig = load("zigzag")
    p = state("p")
    labels = sorted(t.label.text(zig) for t in meta_successors(p, zig))
    assert labels == ["r1", "r2"]
    q = state("q")
    assert meta_successors(q, zig) == []
    q_pos = state("q", Entails((), (), (gt(N, Int(0)),)))
    (t,) = meta_successors(q_pos, zig)
    assert t.to.atoms == (Compound("r", (N,)),) and t.to.where == q_pos.where


def test_strengthen_for_rule():
    zig = load("zigzag")
    q = state("q")
    s = strengthen_for_rule(q, zig.rules[2])
    assert s is not None and [t.label.text(zig) for t in meta_successors(s, zig)] == ["r3"]
    neg = state("q", Entails((), (), (le(N, Int(0)),)))
    assert strengthen_for_rule(neg, zig.rules[2]) is None
    with pytest.raises(ValueError):
        strengthen_for_rule(q, zig.rules[0])


def test_strengthen_for_rule_is_greatest():
    # every sampled instance to which r3 applies satisfies the strengthened WHERE
    zig = load("zigzag")
    q = state("q")
    s = strengthen_for_rule(q, zig.rules[2])
    sampler = Sampler(random.Random(3), int_window=12)
    applied = 0
    for sigma in sampler.groundings(list(q.where), 40, extra_vars={"N"}):
        obj = drop_state(q, sigma)
        if any(t.label.text(zig) == "r3" for t in successors(obj, zig)):
            applied += 1
            assert all(evaluate(c, sigma) for c in s.where)
    assert applied >= 10


def test_strengthen_for_builtin():
    x = Var("X")
    eq0 = Compound("=", (x, Int(0)))
    ms = MetaState((eq0,), ("S",), (), None, (TypeOf(INT, x),))
    ok, bad = strengthen_for_builtin(ms, eq0)
    assert ok is not None and bad is not None
    # witnesses for each branch, checked directly
    assert evaluate(ok.where[-1], {"X": Int(0)})
    assert evaluate(bad.where[-1], {"X": Int(2)})
    entailed = MetaState((eq0,), (), (eq0,), None, (TypeOf(INT, x),))
    assert strengthen_for_builtin(entailed, eq0)[1] is None
    contra = MetaState((eq0,), (), (Compound(">", (x, Int(0))),), None, (TypeOf(INT, x),))
    assert strengthen_for_builtin(contra, eq0)[0] is None


def test_split_halves():
    p = state("p")
    pos, nonpos = split(p, Entails((), (), (gt(N, Int(0)),)))
    assert pos.where[-1] == Entails((), (), (gt(N, Int(0)),))
    assert nonpos.where[-1] == Entails((), (), (le(N, Int(0)),))
    one_sided = state("p", Entails((), (), (gt(N, Int(3)),)))
    a, b = split(one_sided, Entails((), (), (gt(N, Int(0)),)))
    assert a is not None and b is None


def test_split_of_ground_state():
    g = MetaState((Compound("p", (Int(1),)),), (), (), None, ())
    a, b = split(g, Entails((), (), (gt(Int(1), Int(0)),)))
    assert b is None and sample_concretizations(a, 5) == sample_concretizations(g, 5)


def test_split_rejects_non_exhaustive_case():
    ms = MetaState((Compound("p", (N,)),), (), (), None, (TypeOf(VARTYPE, N),))
    with pytest.raises(ValueError):
        split(ms, Entails((), (), (Compound("=", (N, Const("a"))),)))


def test_sample_concretizations():
    p = state("p")
    samples = sample_concretizations(p, 3)
    assert len(samples) == 3
    for s in samples:
        (atom,) = s.atoms
        assert atom.functor == "p" and isinstance(atom.args[0], Int)
    bad = state("p", Entails((), (), (gt(N, Int(0)),)), Entails((), (), (le(N, Int(0)),)))
    assert sample_concretizations(bad, 3) == []
    ground = MetaState((Compound("p", (Int(1),)),))
    assert sample_concretizations(ground, 3) == [canon("p(1)")]


def test_drop_state_with_rest():
    ms = MetaState((Compound("set", (N,)),), ("S",), (), None, ())
    from chrconf.meta import multiset
    obj = drop_state(ms, {"N": mklist([Const("a")]), "S": multiset([Compound("item", (Const("b"),))])})
    assert obj == canon("set([a]), item(b)")
