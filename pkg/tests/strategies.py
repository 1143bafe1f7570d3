"""Hypothesis strategies and property bodies shared by the unit and acceptance suites."""

from hypothesis import strategies as st

from chrconf.builtins import BuiltinStore, Entailment
from chrconf.semantics import StateRepr, canonicalize, successors
from chrconf.terms import Compound, Const, Int, Var, apply, unify

VARS = ["X", "Y", "Z", "W"]

leaves = st.one_of(st.sampled_from([Var(v) for v in VARS]),
                   st.sampled_from([Const("a"), Const("b")]),
                   st.sampled_from([Int(0), Int(1)]))

terms = st.recursive(
    leaves,
    lambda sub: st.one_of(st.builds(lambda x: Compound("f", (x,)), sub),
                          st.builds(lambda x, y: Compound("g", (x, y)), sub, sub)),
    max_leaves=6)

ground_terms = st.recursive(
    st.sampled_from([Const("a"), Const("b"), Int(0), Int(1)]),
    lambda sub: st.one_of(st.builds(lambda x: Compound("f", (x,)), sub),
                          st.builds(lambda x, y: Compound("g", (x, y)), sub, sub)),
    max_leaves=4)

ground_substs = st.fixed_dictionaries({v: ground_terms for v in VARS})


def unifier_property(t1, t2, g):
    """Soundness and generality of the computed unifier against a ground one."""
    s = unify(t1, t2)
    if s is not None:
        assert apply(t1, s) == apply(t2, s)
        # idempotent
        assert all(apply(apply(Var(v), s), s) == apply(Var(v), s) for v in s)
    if apply(t1, g) == apply(t2, g):
        assert s is not None, "a ground unifier exists, so unification must succeed"
        # every unifier factors through the most general one
        for v in VARS:
            assert apply(apply(Var(v), s), g) == apply(Var(v), g)


# -- integer comparison stores ---------------------------------------------------------------

INT_VARS = ["X", "Y", "Z"]
ops = st.sampled_from(["<", "=<", ">", ">="])
operand = st.one_of(st.sampled_from([Var(v) for v in INT_VARS]), st.integers(-3, 3).map(Int))


@st.composite
def comparisons(draw):
    a = draw(st.sampled_from([Var(v) for v in INT_VARS]))
    b = draw(operand)
    if draw(st.booleans()) and isinstance(b, Var):
        b = Compound("+", (b, Int(draw(st.integers(-3, 3)))))
    return Compound(draw(ops), (a, b))


comparison_lists = st.lists(comparisons(), max_size=4)

GRID = range(-12, 13)  # potentials of these systems stay within 3 edges of weight <= 4


def _value(t, env):
    if isinstance(t, Int):
        return t.value
    if isinstance(t, Var):
        return env[t.id]
    a, b = (_value(x, env) for x in t.args)
    return a + b if t.functor == "+" else a - b


def holds(atom, env):
    a, b = (_value(x, env) for x in atom.args)
    return {"<": a < b, "=<": a <= b, ">": a > b, ">=": a >= b}[atom.functor]


def brute_sat(atoms):
    """Independent oracle: search a grid wide enough for these small systems."""
    vs = sorted({v for a in atoms for v in _vars(a)})
    if not vs:
        return all(holds(a, {}) for a in atoms)
    import itertools
    for vals in itertools.product(GRID, repeat=len(vs)):
        env = dict(zip(vs, vals))
        if all(holds(a, env) for a in atoms):
            return True
    return False


def _vars(t):
    if isinstance(t, Var):
        return {t.id}
    if isinstance(t, Compound):
        return set().union(*(_vars(a) for a in t.args))
    return set()


def builtin_property(atoms, extra, perm_seed):
    """Satisfiability matches brute force; adding is monotone and order-independent."""
    import random
    store = BuiltinStore.of(atoms)
    assert store.satisfiable() == brute_sat(atoms)
    shuffled = list(atoms)
    random.Random(perm_seed).shuffle(shuffled)
    other = BuiltinStore.of(shuffled)
    assert other.satisfiable() == store.satisfiable()
    if store.satisfiable():
        assert store.equivalent(other)
    bigger = store.add(extra)
    if store.satisfiable():
        # whatever is entailed stays entailed once more is known
        for goal in atoms:
            if store.entails((), [goal]) == Entailment.YES and bigger.satisfiable():
                assert bigger.entails((), [goal]) == Entailment.YES
    else:
        assert not bigger.satisfiable()


# -- states -------------------------------------------------------------------------------------

state_args = st.one_of(st.sampled_from([Var(v) for v in VARS]), st.sampled_from([Const("a"), Int(1)]))
user_atoms = st.one_of(st.builds(lambda x: Compound("p", (x,)), state_args),
                       st.builds(lambda x, y: Compound("q", (x, y)), state_args, state_args))
state_builtins = st.lists(st.one_of(
    st.builds(lambda x, y: Compound("=", (x, y)), state_args, state_args),
    st.builds(lambda x: Compound(">", (x, Int(0))), st.sampled_from([Var(v) for v in VARS]))), max_size=2)


def canonical_property(prog, atoms, builtins, perm_seed, shift):
    """Canonical forms ignore variable names and atom order, and commute with transitions."""
    import random
    s = StateRepr(tuple(atoms), BuiltinStore.of(builtins))
    ren = {v: Var(f"V{(i + shift) % 7}_{i}") for i, v in enumerate(VARS)}
    atoms2 = [apply(a, ren) for a in atoms]
    random.Random(perm_seed).shuffle(atoms2)
    b2 = [apply(b, ren) for b in builtins]
    random.Random(perm_seed + 1).shuffle(b2)
    t = StateRepr(tuple(atoms2), BuiltinStore.of(b2))
    c1, c2 = canonicalize(s), canonicalize(t)
    assert c1 == c2
    assert canonicalize(StateRepr(c1.atoms, BuiltinStore.of(c1.constraints), c1.failed)) == c1
    succ1 = {x.to for x in successors(c1, prog)}
    succ2 = {x.to for x in successors(c2, prog)}
    assert succ1 == succ2
