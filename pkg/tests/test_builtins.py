import pytest
from hypothesis import given, settings, strategies as st

from chrconf.builtins import BuiltinStore, Entailment, UnsupportedBuiltin, is_builtin, negate
from chrconf.syntax import parse_conjunction, parse_term
from chrconf.terms import Const, Var
from strategies import builtin_property, comparison_lists, comparisons


def store(text):
    return BuiltinStore.of(parse_conjunction(text)) if text else BuiltinStore.empty()


def test_equation_solved_form():
    s = store("X = a")
    assert s.satisfiable()
    assert s.apply(Var("X")) == Const("a")


def test_occurs_check_contradiction():
    assert not store("X = Y, Y = f(X)").satisfiable()


def test_satisfiability():
    assert not store("X > 0, X =< 0").satisfiable()
    assert store("").satisfiable()
    assert not store("fail").satisfiable()
    assert not store("X = a, X > 0").satisfiable()


def test_entailment():
    assert store("X = 1").entails([], parse_conjunction("X > 0")) == Entailment.YES
    assert store("X = 0").entails([], parse_conjunction("X > 0")) == Entailment.NO
    assert store("").entails([], parse_conjunction("X >= X")) == Entailment.UNKNOWN
    # a local variable is existentially quantified
    assert store("X > 0").entails(["Y"], parse_conjunction("Y > X")) == Entailment.YES


def test_equivalence_up_to_renaming_and_normalization():
    assert store("X = a").equivalent(store("Y = a"), {"X": Var("Y")})
    assert store("X > 0").equivalent(store("0 < X"))
    assert not store("X > 0").equivalent(store("X > 1"))


def test_linear_arithmetic():
    # '=' is syntactic, but comparisons evaluate the bound expression
    s = store("X = 2, Y = X + 1")
    assert s.apply(Var("Y")) == parse_term("2 + 1")
    assert s.entails([], parse_conjunction("Y > 2")) == Entailment.YES
    assert s.entails([], parse_conjunction("Y >= 4")) == Entailment.NO
    assert not store("X - Y > 0, Y >= X").satisfiable()


def test_unsupported_builtin():
    with pytest.raises(UnsupportedBuiltin):
        BuiltinStore.of([parse_term("X \\= Y")]).satisfiable()


def test_negate_comparisons():
    assert negate(parse_term("X > 0")) == parse_term("X =< 0")
    assert negate(parse_term("X < Y")) == parse_term("X >= Y")
    assert is_builtin(parse_term("X =< 0")) and not is_builtin(parse_term("p(X)"))


@settings(max_examples=1000)
@given(comparison_lists, comparisons(), st.integers(0, 1000))
def test_store_matches_brute_force_and_is_monotone(atoms, extra, seed):
    builtin_property(atoms, extra, seed)
