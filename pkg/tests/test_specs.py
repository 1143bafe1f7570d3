import random

import pytest

from chrconf.meta import INT, MetaState, Perm, TypeOf, list_of, CONST, multiset
from chrconf.semantics import canon
from chrconf.specs import (SpecEquivalence, expand_equiv, expand_inv, invariant_holds, match_template, parse_spec)
from chrconf.syntax import ParseError
from chrconf.terms import Compound, Const, Var, mklist
from chrconf.validate import sample_invariant_states
from conftest import load_spec


def test_zigzag_spec_templates():
    spec = load_spec("zigzag")
    assert len(spec.invariant.templates) == 3
    assert spec.equiv is None
    t = spec.invariant.templates[0]
    assert t.state.atoms == (Compound("p", (Var("N"),)),) and t.where == (TypeOf(INT, Var("N")),)


def test_set_spec_types_and_equiv():
    spec = load_spec("set")
    assert spec.types["constList"].kind == "list"
    (eq,) = spec.equiv.templates
    assert Perm(Var("L1"), Var("L2")) in eq.where
    assert eq.left.rest == eq.right.rest == "S"


def test_case_declaration():
    spec = parse_spec("invariant state <{p(N)}, true> where type(int, N).\n"
                      "case succeeds(N > 0), succeeds(N =< 0).")
    (case,) = spec.cases
    assert str(case.constraint) == "succeeds(N > 0)"


@pytest.mark.parametrize("text, line", [
    ("type t = nosuch.", 1),
    ("invariant state <{p(N)}, true> where bogus(N).", 1),
    ("\nequiv <{p(N)}, true> <{q(N)}, true>.", 2),
    ("invariant state <{p(N)}, true>", 1),
])
def test_spec_errors(text, line):
    with pytest.raises(ParseError) as err:
        parse_spec(text, "s.cspec")
    assert err.value.line == line


def test_match_template_pulls_from_rest():
    spec = load_spec("set")
    tmpl = spec.invariant.templates[0].fresh()
    ms = MetaState((Compound("item", (Var("A"),)),), ("S0",), (), None)
    (m,) = list(match_template(tmpl.state, ms, "unify"))
    # the set constraint must come out of the rest S0
    assert "S0" in m.subst


def test_expand_inv_rejects_two_sets():
    spec = load_spec("set")
    ms = MetaState((Compound("set", (Var("L"),)), Compound("set", (Var("K"),))), ("S0",), (), None)
    assert list(expand_inv(ms, spec.invariant)) == []


def test_expand_equiv_produces_permuted_partner():
    spec = load_spec("set")
    ms = MetaState((Compound("set", (Var("L"),)),), ("S0",), (), None)
    alts = list(expand_equiv(ms, spec.equiv))
    assert alts
    subst, other, where = alts[0]
    assert other.atoms[0].functor == "set" and other.rest == ("S0",)
    assert any(isinstance(c, Perm) for c in where)


def test_invariant_holds_on_objects():
    zig, st = load_spec("zigzag"), load_spec("set")
    assert invariant_holds(canon("p(3)"), zig.invariant)
    assert not invariant_holds(canon("p(a)"), zig.invariant)
    assert not invariant_holds(canon("p(1), q(1)"), zig.invariant)
    assert invariant_holds(canon("set([a,b]), item(c)"), st.invariant)
    assert not invariant_holds(canon("set([a]), set([b])"), st.invariant)
    assert not invariant_holds(canon("set([X])"), st.invariant)


def test_spec_equivalence_on_objects():
    eq = SpecEquivalence(load_spec("set").equiv)
    assert eq(canon("set([a,b]), item(c)"), canon("set([b,a]), item(c)"))
    assert not eq(canon("set([a,b]), item(c)"), canon("set([a,c]), item(b)"))
    assert canon("set([b,a])") in set(eq.equivalents(canon("set([a,b])")))


def test_invariant_templates_sample_into_invariant():
    # every sampled concretization of a template satisfies the object-level invariant
    for name in ("zigzag", "set"):
        spec = load_spec(name)
        states = sample_invariant_states(spec.invariant, 20, random.Random(1))
        assert states
        assert all(invariant_holds(s, spec.invariant) for s in states)


def test_equiv_templates_relate_equivalent_objects():
    from chrconf.meta import Sampler, drop_state
    spec = load_spec("set")
    eq = SpecEquivalence(spec.equiv)
    sampler = Sampler(random.Random(4))
    (tmpl,) = spec.equiv.templates
    t = tmpl.fresh()
    left = MetaState(t.left.atoms, (t.left.rest,))
    right = MetaState(t.right.atoms, (t.right.rest,))
    vs = left.meta_vars() | right.meta_vars()
    checked = 0
    for sigma in sampler.groundings(list(t.where), 20, extra_vars=vs, rest_vars=[t.left.rest]):
        assert eq(drop_state(left, sigma), drop_state(right, sigma))
        checked += 1
    assert checked >= 10
