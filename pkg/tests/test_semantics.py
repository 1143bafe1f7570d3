from hypothesis import given, settings, strategies as st

from chrconf.semantics import (FAILURE, StateRepr, canon, canonicalize, enumerate_reachable, joinable_in,
                               oracle_global_confluence, oracle_local_confluence, successors)
from chrconf.syntax import parse_program
from chrconf.builtins import BuiltinStore
from conftest import load
from strategies import canonical_property, state_builtins, user_atoms

EMPTY = parse_program("")


def test_unsatisfiable_store_is_failure():
    assert canon("| X > 0, X =< 0") == FAILURE


def test_variant_states_coincide():
    assert canon("p(X), q(Y) | X > 0") == canon("q(B), p(A) | 0 < A")
    assert canon("p(X), p(Y)") != canon("p(X), p(X)")


def test_builtin_transition_solves_equation():
    s = canon("X = a, p(X)")
    steps = successors(s, EMPTY)
    assert [t.to for t in steps] == [canon("p(a)")]


def test_rule_transition_and_guard():
    zig = load("zigzag")
    assert {t.to for t in successors(canon("q(1)"), zig)} == {canon("r(1)")}
    assert successors(canon("q(0)"), zig) == []
    assert {t.to for t in successors(canon("r(0)"), zig)} == {canon("q(0)")}
    assert successors(canon("q(X)"), zig) == []  # guard X > 0 is not entailed
    assert {t.to for t in successors(canon("q(X) | X > 3"), zig)} == {canon("r(X) | X > 3")}


def test_empty_program_single_node():
    g = enumerate_reachable(canon("p(a), q"), EMPTY)
    assert len(g.nodes) == 1 and not g.truncated


def test_single_rule_trivially_locally_confluent():
    prog = parse_program("p <=> q.")
    res = oracle_local_confluence([canon("p")], prog)
    assert res.ok and res.corners_checked == 0


def test_set_finals_differ():
    g = enumerate_reachable(canon("item(a), item(b), set([])"), load("set"))
    assert set(g.finals()) == {canon("set([a,b])"), canon("set([b,a])")}
    res = oracle_local_confluence([canon("item(a), item(b), set([])")], load("set"))
    assert res.verdict == "not-locally-confluent"


def test_zigzag_ground_instances_are_joinable():
    zig = load("zigzag")
    inits = [canon(f"p({n})") for n in range(-1, 3)]
    assert oracle_local_confluence(inits, zig).ok
    assert oracle_global_confluence(inits, zig).ok


def test_joinable_in_graph():
    zig = load("zigzag")
    g = enumerate_reachable(canon("p(1)"), zig)
    assert joinable_in(g, canon("q(1)"), canon("r(1)"))


def test_truncation_is_reported():
    loop = parse_program("p(X) <=> p(f(X)).")
    g = enumerate_reachable(canon("p(a)"), loop, max_states=20)
    assert g.truncated
    assert oracle_local_confluence([canon("p(a)")], loop, max_states=20).verdict == "inconclusive"


def test_canonical_form_is_a_fixpoint():
    c = canon("q(X, Y), p(Y) | X = a")
    assert canonicalize(StateRepr(c.atoms, BuiltinStore.of(c.constraints))) == c


PROP_PROG = parse_program("""
s1 @ p(X), p(X) <=> p(X).
s2 @ q(X, Y) <=> X = Y | p(X).
s3 @ p(X) \\ q(X, Y) <=> p(Y).
""")


@settings(max_examples=1000)
@given(st.lists(user_atoms, min_size=1, max_size=4), state_builtins, st.integers(0, 10_000), st.integers(0, 6))
def test_canonicalize_compatible_with_transitions(atoms, builtins, seed, shift):
    canonical_property(PROP_PROG, atoms, builtins, seed, shift)
