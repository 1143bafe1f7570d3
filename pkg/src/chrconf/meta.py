"""Meta level: ground representation, constrained meta states and the
meta constraint theory.

Object variables are named by :class:`~chrconf.terms.Name` leaves; meta
variables are ordinary :class:`~chrconf.terms.Var` leaves.  A meta state
has explicit atoms, *store rest* variables standing for unknown multisets
of constraints, explicit built-ins and an optional *built-in rest*
variable, all constrained by a conjunction of meta constraints.

Store-valued and conjunction-valued meta variables are bound to terms
built with :func:`multiset`; element variables inside such a value are
again rest variables.
"""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

from .builtins import BuiltinStore, Entailment, is_builtin, is_comparison, negate
from .semantics import CanonState, FAILURE, StateRepr, canonicalize, head_matchings
from .syntax import Program, format_conj, format_term
from .terms import (NIL, Compound, Const, Int, Name, Subst, Term, Var, apply, fresh_var,
                    is_ground, list_parts, match, mklist, unify, var_set, variables)

STORE_FUNCTOR = "{}"
AND = " /\\ "
EMPTY = Const(STORE_FUNCTOR)


def multiset(items: Iterable[Term]) -> Term:
    items = tuple(items)
    return Compound(STORE_FUNCTOR, items) if items else EMPTY


def multiset_items(t: Term) -> Tuple[Term, ...]:
    if t == EMPTY:
        return ()
    if isinstance(t, Compound) and t.functor == STORE_FUNCTOR:
        return t.args
    raise ValueError(f"not a multiset value: {t}")


def is_multiset(t: Term) -> bool:
    return t == EMPTY or (isinstance(t, Compound) and t.functor == STORE_FUNCTOR)


# -- types ----------------------------------------------------------------------------

@dataclass(frozen=True)
class MType:
    """Meta-level type.

    ``kind`` is one of ``int``, ``const``, ``var``, ``any``, ``list`` (one
    element type in ``args``) or ``store`` (``args`` holds alternative
    atom patterns as ``(functor, argument types)`` pairs).
    """

    kind: str
    args: tuple = ()
    name: Optional[str] = field(default=None, compare=False)

    def __str__(self) -> str:
        if self.name:
            return self.name
        if self.kind == "list":
            return f"list({self.args[0]})"
        if self.kind == "store":
            return "store(" + ", ".join(_pattern_text(p) for p in self.args) + ")"
        return self.kind


def _pattern_text(p) -> str:
    functor, arg_types = p
    if not arg_types:
        return str(Const(functor))
    return f"{Const(functor)}(" + ", ".join(map(str, arg_types)) + ")"


INT = MType("int")
CONST = MType("const")
VARTYPE = MType("var")
ANY = MType("any")
BASE_TYPES = {"int": INT, "const": CONST, "var": VARTYPE, "any": ANY}


def list_of(t: MType) -> MType:
    return MType("list", (t,))


def store_of(*patterns: Tuple[str, Tuple[MType, ...]]) -> MType:
    return MType("store", tuple(patterns))


def subtype(a: MType, b: MType) -> bool:
    if a == b or b.kind == "any" and a.kind not in ("store",):
        return True
    if a.kind == "int" and b.kind == "const":
        return True
    if a.kind == "list" and b.kind == "list":
        return subtype(a.args[0], b.args[0])
    if a.kind == "store" and b.kind == "store":
        return all(any(_pattern_sub(p, q) for q in b.args) for p in a.args)
    return False


def _pattern_sub(p, q) -> bool:
    return p[0] == q[0] and len(p[1]) == len(q[1]) and all(subtype(x, y) for x, y in zip(p[1], q[1]))


def disjoint(a: MType, b: MType) -> bool:
    """Conservative: True only when no ground term has both types."""
    kinds = {a.kind, b.kind}
    if "any" in kinds:
        return False
    if "store" in kinds:
        return kinds != {"store"}
    if "var" in kinds:
        return kinds != {"var"}
    if kinds == {"int", "list"}:
        return True
    if a.kind == "list" and b.kind == "list":
        return False  # [] is in both
    return False


def member(t: Term, ty: MType) -> bool:
    """Ground membership."""
    k = ty.kind
    if k == "int":
        return isinstance(t, Int)
    if k == "const":
        return isinstance(t, (Const, Int)) and not is_multiset(t)
    if k == "var":
        return isinstance(t, Name)
    if k == "any":
        return is_ground(t) and not is_multiset(t)
    if k == "list":
        items, tail = list_parts(t)
        return tail == NIL and all(member(i, ty.args[0]) for i in items)
    if k == "store":
        if not is_multiset(t):
            return False
        return all(any(_pattern_member(a, p) for p in ty.args) for a in multiset_items(t))
    raise ValueError(f"unknown type {ty}")


def _pattern_member(atom: Term, pattern) -> bool:
    functor, arg_types = pattern
    if not arg_types:
        return atom == Const(functor)
    return (isinstance(atom, Compound) and atom.functor == functor and atom.arity == len(arg_types)
            and all(member(a, at) for a, at in zip(atom.args, arg_types)))


class TypeClash(Exception):
    pass


def decompose_type(ty: MType, t: Term) -> List[Tuple[MType, str]]:
    """Reduce ``type(ty, t)`` to requirements on meta variables.

    Raises :class:`TypeClash` when no grounding can satisfy it.  Store
    atoms matching several alternatives are not decomposed further; the
    returned list then holds ``(ty, "")`` as a marker of an undecided part.
    """
    if isinstance(t, Var):
        return [(ty, t.id)]
    k = ty.kind
    if k == "any":
        out = []
        for v in var_set(t):
            out.append((ANY, v))
        return out
    if k == "int":
        if isinstance(t, Int):
            return []
        raise TypeClash
    if k == "const":
        if isinstance(t, (Const, Int)) and not is_multiset(t):
            return []
        raise TypeClash
    if k == "var":
        if isinstance(t, Name):
            return []
        raise TypeClash
    if k == "list":
        if t == NIL:
            return []
        if isinstance(t, Compound) and t.functor == "." and t.arity == 2:
            return decompose_type(ty.args[0], t.args[0]) + decompose_type(ty, t.args[1])
        raise TypeClash
    if k == "store":
        if not is_multiset(t):
            raise TypeClash
        out = []
        for a in multiset_items(t):
            if isinstance(a, Var):
                out.append((ty, a.id))
                continue
            options = [p for p in ty.args if _pattern_shape(a, p)]
            if not options:
                raise TypeClash
            if len(options) > 1:
                out.append((ty, ""))
                continue
            functor, arg_types = options[0]
            for sub, at in zip(a.args if isinstance(a, Compound) else (), arg_types):
                out.extend(decompose_type(at, sub))
        return out
    raise ValueError(f"unknown type {ty}")


def _pattern_shape(atom: Term, pattern) -> bool:
    functor, arg_types = pattern
    if not arg_types:
        return atom == Const(functor)
    return isinstance(atom, Compound) and atom.functor == functor and atom.arity == len(arg_types)


# -- meta constraints ---------------------------------------------------------------------

Conj = Tuple[Term, ...]


def _conj_text(ts: Conj) -> str:
    return format_conj(ts) if len(ts) <= 1 else "(" + format_conj(ts) + ")"


@dataclass(frozen=True)
class Eq:
    left: Term
    right: Term

    def __str__(self) -> str:
        return f"{format_term(self.left)} = {format_term(self.right)}"


@dataclass(frozen=True)
class TypeOf:
    type: MType
    term: Term

    def __str__(self) -> str:
        return f"type({self.type}, {format_term(self.term)})"


@dataclass(frozen=True)
class Sat:
    """``B`` is satisfiable."""

    formula: Conj

    def __str__(self) -> str:
        return f"sat({format_conj(self.formula)})"


@dataclass(frozen=True)
class Entails:
    """``forall (hyp -> exists locals goal)`` holds in the built-in theory."""

    hyp: Conj
    locals: Tuple[Term, ...]
    goal: Conj

    def __str__(self) -> str:
        body = format_conj(self.goal)
        if self.locals:
            body = f"exists {', '.join(map(format_term, self.locals))}: {body}"
        if self.hyp:
            body = f"{_conj_text(self.hyp)} -> {body}"
        return f"succeeds({body})"


@dataclass(frozen=True)
class Refutes:
    """``hyp /\\ goal`` is unsatisfiable."""

    hyp: Conj
    goal: Conj

    def __str__(self) -> str:
        body = format_conj(self.goal)
        if self.hyp:
            body = f"{_conj_text(self.hyp)} -> {body}"
        return f"fails({body})"


@dataclass(frozen=True)
class FreshVars:
    names: Tuple[Term, ...]
    context: Tuple[Term, ...]

    def __str__(self) -> str:
        return f"freshVars([{', '.join(map(format_term, self.names))}], ...)"


@dataclass(frozen=True)
class Perm:
    left: Term
    right: Term

    def __str__(self) -> str:
        return f"perm({format_term(self.left)}, {format_term(self.right)})"


@dataclass(frozen=True)
class Inv:
    state: "MetaState"

    def __str__(self) -> str:
        return f"inv({self.state.template_text()})"


@dataclass(frozen=True)
class Equiv:
    left: "MetaState"
    right: "MetaState"

    def __str__(self) -> str:
        return f"equiv({self.left.template_text()}, {self.right.template_text()})"


MetaConstraint = Union[Eq, TypeOf, Sat, Entails, Refutes, FreshVars, Perm, Inv, Equiv]


def constraint_terms(c) -> Tuple[Term, ...]:
    if isinstance(c, (Eq, Perm)):
        return (c.left, c.right)
    if isinstance(c, TypeOf):
        return (c.term,)
    if isinstance(c, Sat):
        return c.formula
    if isinstance(c, Entails):
        return c.hyp + c.locals + c.goal
    if isinstance(c, Refutes):
        return c.hyp + c.goal
    if isinstance(c, FreshVars):
        return c.names + c.context
    if isinstance(c, Inv):
        return c.state.terms()
    if isinstance(c, Equiv):
        return c.left.terms() + c.right.terms()
    raise TypeError(c)


def substitute_constraint(c, s: Subst):
    if not s:
        return c
    ap = lambda t: expand_apply(t, s)
    conj = lambda ts: flatten_conj(tuple(ap(t) for t in ts), s)
    if isinstance(c, Eq):
        return Eq(ap(c.left), ap(c.right))
    if isinstance(c, Perm):
        return Perm(ap(c.left), ap(c.right))
    if isinstance(c, TypeOf):
        return TypeOf(c.type, ap(c.term))
    if isinstance(c, Sat):
        return Sat(conj(c.formula))
    if isinstance(c, Entails):
        return Entails(conj(c.hyp), tuple(ap(t) for t in c.locals), conj(c.goal))
    if isinstance(c, Refutes):
        return Refutes(conj(c.hyp), conj(c.goal))
    if isinstance(c, FreshVars):
        return FreshVars(tuple(ap(t) for t in c.names), tuple(ap(t) for t in c.context))
    if isinstance(c, Inv):
        return Inv(c.state.substitute(s))
    if isinstance(c, Equiv):
        return Equiv(c.left.substitute(s), c.right.substitute(s))
    raise TypeError(c)


def expand_apply(t: Term, s: Subst) -> Term:
    """Apply ``s``, flattening multiset values nested as multiset elements."""
    r = apply(t, s)
    if is_multiset(r):
        return multiset(_flat_items(r))
    return r


def _flat_items(t: Term) -> List[Term]:
    out = []
    for a in multiset_items(t):
        if is_multiset(a):
            out.extend(_flat_items(a))
        else:
            out.append(a)
    return out


def flatten_conj(ts: Conj, s: Subst = None) -> Conj:
    """Expand bound built-in rest variables inside a conjunction."""
    out = []
    for t in ts:
        if is_multiset(t):
            out.extend(flatten_conj(multiset_items(t)))
        elif t == Const("true"):
            continue
        else:
            out.append(t)
    return tuple(out)


def constraint_text(M: Iterable) -> str:
    M = list(M)
    return AND.join(map(str, M)) if M else "true"


# -- meta states ----------------------------------------------------------------------------

@dataclass(frozen=True)
class MetaState:
    atoms: Tuple[Term, ...] = ()
    rest: Tuple[str, ...] = ()
    builtins: Tuple[Term, ...] = ()
    brest: Optional[str] = None
    where: Tuple = ()
    failed: bool = False

    def terms(self) -> Tuple[Term, ...]:
        return self.atoms + tuple(Var(r) for r in self.rest) + self.builtins + (
            (Var(self.brest),) if self.brest else ())

    def meta_vars(self) -> set:
        return var_set(*self.terms())

    def template_text(self) -> str:
        if self.failed:
            return "failure"
        store = "{" + ", ".join(format_term(a) for a in self.atoms) + "}"
        if self.rest:
            store = " + ".join([store] + list(self.rest)) if self.atoms else " + ".join(self.rest)
        b = list(map(format_term, self.builtins)) + ([self.brest] if self.brest else [])
        btext = AND.join(b) if b else "true"
        return f"<{store}, {btext}>"

    def __str__(self) -> str:
        return f"{self.template_text()} WHERE {constraint_text(self.where)}"

    def key(self) -> tuple:
        """Template identity with fresh local meta variables canonically renamed."""
        if self.failed:
            return ("failure",)
        local = [v for v in _ordered(self.terms()) if v.startswith("_L")]
        ren = {v: Var(f"_L#{i}") for i, v in enumerate(local)}
        atoms = tuple(sorted(format_term(apply(a, ren)) for a in self.atoms))
        bs = tuple(sorted(format_term(apply(b, ren)) for b in self.builtins))
        return atoms, tuple(sorted(self.rest)), bs, self.brest

    def with_where(self, where: Iterable) -> "MetaState":
        return replace(self, where=tuple(where))

    def substitute(self, s: Subst) -> "MetaState":
        if not s or self.failed:
            return self
        atoms, rest = [], []
        for a in self.atoms:
            atoms.append(expand_apply(a, s))
        for r in self.rest:
            if r in s:
                for x in _flat_items(expand_apply(Var(r), s)) if is_multiset(expand_apply(Var(r), s)) else [expand_apply(Var(r), s)]:
                    if isinstance(x, Var):
                        rest.append(x.id)
                    else:
                        atoms.append(x)
            else:
                rest.append(r)
        builtins = list(flatten_conj(tuple(expand_apply(b, s) for b in self.builtins)))
        brest = self.brest
        if brest and brest in s:
            val = expand_apply(Var(brest), s)
            brest = None
            items = _flat_items(val) if is_multiset(val) else ([] if val == Const("true") else [val])
            for x in items:
                if isinstance(x, Var):
                    brest = x.id
                else:
                    builtins.append(x)
        return MetaState(tuple(atoms), tuple(rest), tuple(builtins), brest,
                         tuple(substitute_constraint(c, s) for c in self.where), self.failed)


def _ordered(ts) -> List[str]:
    seen = {}
    for t in ts:
        for v in variables(t):
            seen.setdefault(v, None)
    return list(seen)


FAILED_META = MetaState(failed=True)


def new_meta_var(base: str = "M") -> Var:
    return fresh_var(base)


# -- lifting and dropping ----------------------------------------------------------------

def lift(entity, mapping: Optional[Dict[str, Var]] = None):
    """Name an object entity at the meta level, replacing each object variable
    consistently by a fresh meta variable.  Returns ``(lifted, mapping)``."""
    mapping = {} if mapping is None else mapping

    def go(t: Term) -> Term:
        if isinstance(t, Var):
            if t.id not in mapping:
                mapping[t.id] = new_meta_var("M")
            return mapping[t.id]
        if isinstance(t, Compound):
            return Compound(t.functor, tuple(go(a) for a in t.args))
        return t

    if isinstance(entity, (list, tuple)):
        return type(entity)(go(t) for t in entity), mapping
    return go(entity), mapping


def name_of(t: Term) -> Term:
    """Ground name of an object term: variables become :class:`Name` leaves."""
    if isinstance(t, Var):
        return Name(t.id)
    if isinstance(t, Compound):
        return Compound(t.functor, tuple(name_of(a) for a in t.args))
    return t


class NotGround(ValueError):
    pass


def drop(mt: Term) -> Term:
    """The object entity named by a ground meta term."""
    if isinstance(mt, Var):
        raise NotGround(f"meta variable {mt.id} in {mt}")
    if isinstance(mt, Name):
        return Var(mt.var)
    if isinstance(mt, Compound):
        return Compound(mt.functor, tuple(drop(a) for a in mt.args))
    return mt


def drop_state(ms: MetaState, sigma: Subst) -> CanonState:
    """Object state named by ``ms`` under the grounding ``sigma``."""
    if ms.failed:
        return FAILURE
    g = ms.substitute(sigma)
    if g.rest or g.brest:
        raise NotGround("unbound rest variable")
    store = tuple(drop(a) for a in g.atoms)
    b = BuiltinStore.of(drop(x) for x in g.builtins)
    return canonicalize(StateRepr(store, b, b.failed))


# -- symbolic reasoning about M ----------------------------------------------------------

def translate(t: Term) -> Term:
    """Object formula in which meta variables stand for object values.

    Names become object variables with a quote prefix, so they never clash
    with meta variable ids.
    """
    if isinstance(t, Name):
        return Var("'" + t.var)
    if isinstance(t, Compound):
        return Compound(t.functor, tuple(translate(a) for a in t.args))
    return t


def _meta_vars(ts: Iterable[Term]) -> set:
    return var_set(*ts)


def _has_names(t: Term) -> bool:
    if isinstance(t, Name):
        return True
    return isinstance(t, Compound) and any(_has_names(a) for a in t.args)


class Context:
    """Facts derivable from a conjunction ``M`` of meta constraints.

    All answers are sound: ``entails`` returns True only when every
    grounding in ``[M]`` satisfies the constraint.
    """

    def __init__(self, M: Iterable):
        self.M = tuple(M)
        self.members = set(self.M)
        self.clash: Optional[str] = None
        self.types: Dict[str, List[MType]] = {}
        self.perms: List[Tuple[Term, Term]] = []
        for c in self.M:
            if isinstance(c, TypeOf):
                try:
                    for ty, v in decompose_type(c.type, c.term):
                        if v:
                            self.types.setdefault(v, []).append(ty)
                except TypeClash:
                    self.clash = f"type clash in {c}"
            elif isinstance(c, Perm):
                self.perms.append((c.left, c.right))
        for v, tys in self.types.items():
            for a, b in itertools.combinations(tys, 2):
                if disjoint(a, b):
                    self.clash = f"{v} cannot have types {a} and {b}"
        self.int_vars = frozenset(v for v, tys in self.types.items() if any(subtype(t, INT) for t in tys))
        store = BuiltinStore.empty()
        for v in sorted(self.int_vars):
            store = store.declare_int(v)
        for c in self.M:
            for atom in self._int_facts(c):
                store = store.add(atom)
        self.int_store = store
        if store.failed and self.clash is None:
            self.clash = "integer constraints are unsatisfiable"

    def _pure_int(self, ts: Iterable[Term]) -> bool:
        ts = list(ts)
        return not any(_has_names(t) for t in ts) and _meta_vars(ts) <= self.int_vars

    def _int_facts(self, c) -> List[Term]:
        try:
            if isinstance(c, (Entails, Sat)):
                hyp = c.hyp if isinstance(c, Entails) else ()
                goal = c.goal if isinstance(c, Entails) else c.formula
                if not hyp and not getattr(c, "locals", ()) and self._pure_int(goal):
                    return [translate(g) for g in goal if is_builtin(g)]
            if isinstance(c, Refutes) and not c.hyp and len(c.goal) == 1 and is_comparison(c.goal[0]) \
                    and self._pure_int(c.goal):
                return [negate(translate(c.goal[0]))]
        except Exception:
            return []
        return []

    @property
    def consistent_so_far(self) -> bool:
        return self.clash is None

    def type_of(self, v: str) -> Optional[MType]:
        tys = self.types.get(v)
        if not tys:
            return None
        for t in tys:
            if all(subtype(t, u) for u in tys):
                return t
        return tys[0]

    def has_type(self, v: str, ty: MType) -> bool:
        return any(subtype(t, ty) for t in self.types.get(v, ()))

    def _store_for(self, ts: Iterable[Term]) -> BuiltinStore:
        store = self.int_store
        for t in ts:
            store = store.add(translate(t))
        return store

    def entails(self, c) -> bool:
        if c in self.members:
            return True
        try:
            return self._entails(c)
        except Exception:
            return False

    def _entails(self, c) -> bool:
        if isinstance(c, Eq):
            return c.left == c.right
        if isinstance(c, TypeOf):
            try:
                reqs = decompose_type(c.type, c.term)
            except TypeClash:
                return False
            return all(v and self.has_type(v, ty) for ty, v in reqs)
        if isinstance(c, Sat):
            if not c.formula:
                return True
            if any(isinstance(t, Var) for t in c.formula):
                return False
            if not _meta_vars(c.formula):
                return BuiltinStore.of(translate(t) for t in c.formula).satisfiable()
            return all(self.entails(Entails((), (), (g,))) for g in c.formula)
        if isinstance(c, Entails):
            if not c.goal:
                return True
            if any(isinstance(t, Var) for t in c.hyp + c.goal):
                return False
            store = self._store_for(c.hyp)
            if store.failed:
                return True
            locals_ = [translate(v).id for v in c.locals if isinstance(translate(v), Var)]
            return store.entails(locals_, [translate(g) for g in c.goal]) is Entailment.YES
        if isinstance(c, Refutes):
            if any(isinstance(t, Var) for t in c.hyp + c.goal):
                return False
            return self._store_for(c.hyp + c.goal).failed
        if isinstance(c, Perm):
            return self.perm_entailed(c.left, c.right)
        if isinstance(c, FreshVars):
            if not c.names:
                return True
            return any(isinstance(d, FreshVars) and set(c.names) <= set(d.names)
                       and set(var_set(*c.context)) <= set(var_set(*d.context)) | set(var_set(*d.names))
                       for d in self.M)
        return False

    def perm_entailed(self, a: Term, b: Term) -> bool:
        if _perm_cancel(a, b):
            return True
        seen = {a}
        todo = [a]
        while todo:
            x = todo.pop()
            for l, r in self.perms:
                for u, w in ((l, r), (r, l)):
                    y = _perm_step(x, u, w)
                    if y is not None and y not in seen:
                        if _perm_cancel(y, b):
                            return True
                        seen.add(y)
                        todo.append(y)
        return False


def _perm_cancel(a: Term, b: Term) -> bool:
    """``a`` and ``b`` are permutations of each other for every grounding."""
    ia, ta = list_parts(a)
    ib, tb = list_parts(b)
    if ta != tb:
        return False
    rest = list(ib)
    for x in ia:
        if x in rest:
            rest.remove(x)
        else:
            return False
    return not rest


def _perm_step(x: Term, u: Term, w: Term) -> Optional[Term]:
    """Rewrite ``x`` using ``perm(u, w)``: if ``x`` is a permutation of
    ``elems ++ u`` then it is one of ``elems ++ w``."""
    ix, tx = list_parts(x)
    iu, tu = list_parts(u)
    if tu != tx and not (iu == [] and u == tx):
        # u must be a suffix-compatible list sharing x's tail
        if u != tx:
            return None
    if u == tx:
        return mklist(ix, w)
    rest = list(ix)
    for e in iu:
        if e in rest:
            rest.remove(e)
        else:
            return None
    iw, tw = list_parts(w)
    return mklist(rest + iw, tw)


# -- ground evaluation -----------------------------------------------------------------------

def _drop_conj(ts: Iterable[Term]) -> List[Term]:
    return [drop(t) for t in ts]


def evaluate(c, sigma: Subst) -> bool:
    """Truth of a meta constraint under a grounding of all its meta variables."""
    c = substitute_constraint(c, sigma)
    try:
        if isinstance(c, Eq):
            return c.left == c.right
        if isinstance(c, TypeOf):
            return member(c.term, c.type)
        if isinstance(c, Sat):
            return BuiltinStore.of(_drop_conj(c.formula)).satisfiable()
        if isinstance(c, Entails):
            store = BuiltinStore.of(_drop_conj(c.hyp))
            if store.failed:
                return True
            locs = [drop(l).id for l in c.locals]
            return store.entails(locs, _drop_conj(c.goal)) is Entailment.YES
        if isinstance(c, Refutes):
            return not BuiltinStore.of(_drop_conj(c.hyp + c.goal)).satisfiable()
        if isinstance(c, Perm):
            ia, ta = list_parts(c.left)
            ib, tb = list_parts(c.right)
            return ta == NIL and tb == NIL and sorted(map(format_term, ia)) == sorted(map(format_term, ib))
        if isinstance(c, FreshVars):
            if not all(isinstance(n, Name) for n in c.names) or len(set(c.names)) != len(c.names):
                return False
            used = set()
            for t in c.context:
                used |= _names_in(t)
            return not (set(c.names) & used)
    except NotGround:
        raise
    except Exception:
        return False
    raise TypeError(f"cannot evaluate {c}")


def _names_in(t: Term) -> set:
    if isinstance(t, Name):
        return {t}
    if isinstance(t, Compound):
        out = set()
        for a in t.args:
            out |= _names_in(a)
        return out
    return set()


# -- sampling -------------------------------------------------------------------------------------

CONST_POOL = ("a", "b", "c")


class Sampler:
    """Random groundings of meta variables drawn from bounded typed domains."""

    def __init__(self, rng: Optional[random.Random] = None, int_window: int = 3, max_len: int = 3,
                 max_store: int = 2):
        self.rng = rng or random.Random(0)
        self.int_window = int_window
        self.max_len = max_len
        self.max_store = max_store
        self._names = itertools.count(1)

    def value(self, ty: Optional[MType], ctx: Optional[Context] = None, vid: str = "") -> Term:
        rng = self.rng
        k = ty.kind if ty else "const"
        if k == "int":
            w = self.int_window
            lo, hi = -w, w
            if ctx is not None and vid in ctx.int_store.int_vars:
                blo, bhi = ctx.int_store.value_range(vid)
                inf = float("inf")
                if blo > -inf and bhi < inf:
                    lo, hi = int(blo), min(int(bhi), int(blo) + 2 * w)
                elif blo > -inf:
                    lo, hi = int(blo), int(blo) + 2 * w
                elif bhi < inf:
                    lo, hi = int(bhi) - 2 * w, int(bhi)
            return Int(rng.randint(lo, hi))
        if k in ("const", "any"):
            if rng.random() < 0.7:
                return Const(rng.choice(CONST_POOL))
            return Int(rng.randint(-self.int_window, self.int_window))
        if k == "var":
            return Name(f"V{next(self._names)}")
        if k == "list":
            return mklist(self.value(ty.args[0]) for _ in range(rng.randint(0, self.max_len)))
        if k == "store":
            atoms = []
            for _ in range(rng.randint(0, self.max_store)):
                functor, arg_types = rng.choice(ty.args)
                atoms.append(Compound(functor, tuple(self.value(a) for a in arg_types)) if arg_types
                             else Const(functor))
            return multiset(atoms)
        raise ValueError(f"cannot sample type {ty}")

    def ground(self, M: Sequence, extra_vars: Iterable[str] = (), rest_vars: Iterable[str] = (),
               brest_vars: Iterable[str] = ()) -> Optional[Subst]:
        """One attempt at a grounding; None when the drawn values violate ``M``."""
        ctx = Context(M)
        if ctx.clash:
            return None
        rest_vars, brest_vars = set(rest_vars), set(brest_vars)
        vs = set(extra_vars) | rest_vars | brest_vars
        for c in M:
            if not isinstance(c, (Inv, Equiv)):
                vs |= var_set(*constraint_terms(c))
        perm_targets = {}
        for l, r in ctx.perms:
            for u, w in ((l, r), (r, l)):
                if isinstance(w, Var) and w.id not in perm_targets and not (isinstance(u, Var) and u.id in perm_targets):
                    perm_targets[w.id] = u
                    break
        sigma: Subst = {}
        for v in sorted(vs):
            if v in perm_targets:
                continue
            ty = ctx.type_of(v)
            if ty is None and v in rest_vars:
                sigma[v] = EMPTY
            elif ty is None and v in brest_vars:
                sigma[v] = Const("true")
            else:
                sigma[v] = self.value(ty, ctx, v)
        pending = dict(perm_targets)
        while pending:
            progressed = False
            for v, src in list(pending.items()):
                val = apply(src, sigma)
                if not var_set(val):
                    items, tail = list_parts(val)
                    self.rng.shuffle(items)
                    sigma[v] = mklist(items, tail)
                    del pending[v]
                    progressed = True
            if not progressed:
                for v in pending:
                    sigma[v] = self.value(ctx.type_of(v), ctx, v)
                break
        for c in M:
            if isinstance(c, (Inv, Equiv)):
                continue
            if not evaluate(c, sigma):
                return None
        return sigma

    def groundings(self, M: Sequence, n: int, tries: int = 400, **kw) -> List[Subst]:
        out, keys = [], set()
        for _ in range(tries):
            s = self.ground(M, **kw)
            if s is None:
                continue
            k = tuple(sorted((v, format_term(t)) for v, t in s.items()))
            if k not in keys:
                keys.add(k)
                out.append(s)
                if len(out) >= n:
                    break
        return out


@dataclass
class SolveResult:
    status: str  # "consistent", "inconsistent", "unknown"
    witness: Optional[Subst] = None
    reason: str = ""

    @property
    def inconsistent(self) -> bool:
        return self.status == "inconsistent"


def solve_equalities(M: Iterable) -> Optional[Tuple[Subst, tuple]]:
    """Eliminate ``Eq`` constraints by unification; None if they clash."""
    s: Subst = {}
    rest = []
    for c in M:
        if isinstance(c, Eq):
            s = unify(c.left, c.right, s)
            if s is None:
                return None
        else:
            rest.append(c)
    return s, tuple(substitute_constraint(c, s) for c in rest)


def m_solve(M: Iterable, sampler: Optional[Sampler] = None, tries: int = 300) -> SolveResult:
    M = tuple(M)
    solved = solve_equalities(M)
    if solved is None:
        return SolveResult("inconsistent", reason="equalities do not unify")
    s, rest = solved
    ctx = Context(rest)
    if ctx.clash:
        return SolveResult("inconsistent", reason=ctx.clash)
    for c in rest:
        if isinstance(c, (Inv, Equiv)):
            continue
        if isinstance(c, TypeOf) and not var_set(c.term) and not member(c.term, c.type):
            return SolveResult("inconsistent", reason=f"{c} is false")
        if isinstance(c, (Sat, Entails, Refutes, FreshVars, Perm)) and not var_set(*constraint_terms(c)):
            if not evaluate(c, {}):
                return SolveResult("inconsistent", reason=f"{c} is false")
    for c in rest:
        # with a satisfiable hypothesis, succeeding and failing exclude each other
        if isinstance(c, Entails) and ctx.entails(Refutes(c.hyp, c.goal)) and (
                not c.hyp or ctx.entails(Sat(c.hyp))):
            return SolveResult("inconsistent", reason=f"{c} contradicts the other constraints")
        if isinstance(c, Refutes) and ctx.entails(Entails(c.hyp, (), c.goal)) and (
                not c.hyp or ctx.entails(Sat(c.hyp))):
            return SolveResult("inconsistent", reason=f"{c} contradicts the other constraints")
    sampler = sampler or Sampler(random.Random(0))
    for _ in range(tries):
        w = sampler.ground(rest)
        if w is not None:
            full = {**{k: apply(v, w) for k, v in s.items()}, **w}
            return SolveResult("consistent", full)
    return SolveResult("unknown", reason="no witness found by bounded sampling")


# -- meta transitions -------------------------------------------------------------------------------

@dataclass(frozen=True)
class MetaRuleApp:
    rule_index: int
    positions: Tuple[int, ...]

    def text(self, prog: Optional[Program] = None) -> str:
        return prog.rule_label(self.rule_index) if prog else f"rule{self.rule_index + 1}"


@dataclass(frozen=True)
class MetaBuiltin:
    atom: Term

    def text(self, prog: Optional[Program] = None) -> str:
        return format_term(self.atom)


@dataclass(frozen=True)
class MetaTransition:
    frm: MetaState
    to: MetaState
    label: object


def builtin_part(ms: MetaState) -> Conj:
    return ms.builtins + ((Var(ms.brest),) if ms.brest else ())


def normalize(ms: MetaState, ctx: Optional[Context] = None) -> MetaState:
    """Drop explicit built-ins valid under ``M``; detect certain failure."""
    if ms.failed:
        return ms
    ctx = ctx or Context(ms.where)
    kept = []
    for b in ms.builtins:
        if ctx.entails(Entails((), (), (b,))):
            continue
        kept.append(b)
    if kept and ctx.entails(Refutes((), tuple(kept))):
        return FAILED_META
    if len(kept) == len(ms.builtins):
        return ms
    return replace(ms, builtins=tuple(kept))


def applicable(ms: MetaState, rule, ctx: Context) -> Iterator[Tuple[Subst, Tuple[int, ...], Conj, Tuple[Var, ...]]]:
    """Head matchings of a renamed rule into the explicit atoms of ``ms``,
    with the instantiated guard and fresh local meta variables."""
    users = [(i, a) for i, a in enumerate(ms.atoms) if not is_builtin(a)]
    heads = rule.kept + rule.removed
    local_ids = sorted(rule.local_vars())
    for sigma, positions in head_matchings(heads, users):
        locs = tuple(new_meta_var("L") for _ in local_ids)
        full = dict(sigma)
        full.update({v: l for v, l in zip(local_ids, locs)})
        guard = tuple(apply(g, full) for g in rule.guard)
        yield full, positions, guard, locs


def rule_conditions(ms: MetaState, guard: Conj, locs: Tuple[Var, ...]) -> Tuple:
    """The meta constraints a rule application requires of ``ms`` (besides inv)."""
    conds = [Sat(builtin_part(ms)), Entails(ms.builtins, tuple(l for l in locs if _occurs_in(l, guard)), guard)]
    if locs:
        conds.append(FreshVars(locs, ms.terms()))
    return tuple(conds)


def _occurs_in(v: Var, ts: Iterable[Term]) -> bool:
    return v.id in var_set(*ts)


def apply_rule(ms: MetaState, rule, sigma: Subst, positions: Tuple[int, ...], guard: Conj,
               locs: Tuple[Var, ...], extra_where: Tuple = ()) -> MetaState:
    removed = set(positions[len(rule.kept):])
    atoms = [a for i, a in enumerate(ms.atoms) if i not in removed]
    atoms += [apply(c, sigma) for c in rule.body]
    builtins = ms.builtins
    if any(_occurs_in(l, guard) for l in locs):
        builtins = builtins + guard
    where = ms.where + extra_where
    if locs:
        where += tuple(TypeOf(VARTYPE, l) for l in locs) + (FreshVars(locs, ms.terms()),)
    return MetaState(tuple(atoms), ms.rest, builtins, ms.brest, where)


def meta_successors(ms: MetaState, prog: Program, ctx: Optional[Context] = None) -> List[MetaTransition]:
    """Meta transitions whose side conditions are entailed by ``ms.where``.

    The invariant conjunct is taken for granted: states handled here are
    built from invariant templates or reached from such states.
    """
    if ms.failed:
        return []
    ctx = ctx or Context(ms.where)
    if ctx.clash or not ctx.entails(Sat(builtin_part(ms))):
        return []
    out = []
    seen = set()
    for ri, rule in enumerate(prog.rules):
        r = rule.renamed()
        for sigma, positions, guard, locs in applicable(ms, r, ctx):
            conds = rule_conditions(ms, guard, locs)
            if not all(ctx.entails(c) for c in conds if not isinstance(c, FreshVars)):
                continue
            to = normalize(apply_rule(ms, r, sigma, positions, guard, locs))
            key = (ri, to.key())
            if key in seen:
                continue
            seen.add(key)
            out.append(MetaTransition(ms, to, MetaRuleApp(ri, positions)))
    for i, b in enumerate(ms.atoms):
        if not is_builtin(b):
            continue
        rest = ms.atoms[:i] + ms.atoms[i + 1:]
        to = normalize(replace(ms, atoms=rest, builtins=ms.builtins + (b,)), ctx)
        key = ("b", to.key())
        if key not in seen:
            seen.add(key)
            out.append(MetaTransition(ms, to, MetaBuiltin(b)))
    return out


def strengthen_for_rule(ms: MetaState, rule, positions: Optional[Sequence[int]] = None,
                        sampler: Optional[Sampler] = None) -> Optional[MetaState]:
    """Greatest substate of ``ms`` to which the (renamed) ``rule`` applies at
    the given head positions; None when that substate is inconsistent."""
    r = rule.renamed()
    users = [(i, a) for i, a in enumerate(ms.atoms) if not is_builtin(a)]
    heads = r.kept + r.removed
    found = False
    for sigma, pos in head_matchings(heads, users):
        if positions is not None and tuple(pos) != tuple(positions):
            continue
        found = True
        local_ids = sorted(r.local_vars())
        locs = tuple(new_meta_var("L") for _ in local_ids)
        sigma.update({v: l for v, l in zip(local_ids, locs)})
        guard = tuple(apply(g, sigma) for g in r.guard)
        conds = rule_conditions(ms, guard, locs) + tuple(TypeOf(VARTYPE, l) for l in locs)
        strengthened = ms.with_where(ms.where + tuple(c for c in conds if not Context(ms.where).entails(c)))
        if not m_solve(strengthened.where, sampler).inconsistent:
            return strengthened
    if not found:
        raise ValueError("rule heads do not occur in the meta state")
    return None


def strengthen_for_builtin(ms: MetaState, b: Term, sampler: Optional[Sampler] = None
                           ) -> Tuple[Optional[MetaState], Optional[MetaState]]:
    if b not in ms.atoms:
        raise ValueError(f"{format_term(b)} does not occur in the meta state")
    base = ms.where + ((Sat(builtin_part(ms)),) if builtin_part(ms) else ())
    ok = ms.with_where(base + (Entails(ms.builtins, (), (b,)),))
    bad = ms.with_where(base + (Refutes(ms.builtins, (b,)),))
    return (None if m_solve(ok.where, sampler).inconsistent else ok,
            None if m_solve(bad.where, sampler).inconsistent else bad)


def complement(c):
    """The case constraint covering exactly the groundings ``c`` misses."""
    if isinstance(c, Entails) and not c.hyp and not c.locals and len(c.goal) == 1 and is_comparison(c.goal[0]):
        return Entails((), (), (negate(c.goal[0]),))
    if isinstance(c, Entails) and not c.hyp and not c.locals:
        return Refutes((), c.goal)
    if isinstance(c, Refutes) and not c.hyp:
        return Entails((), (), c.goal)
    raise ValueError(f"no expressible complement for {c}")


def ground_typed(t: Term, ctx: Context, locals_: Iterable[str] = ()) -> bool:
    """Every grounding in ``ctx`` makes ``t`` name a term without object variables."""
    if _has_names(t):
        return False
    locals_ = set(locals_)
    for v in var_set(t):
        if v in locals_:
            return False
        ty = ctx.type_of(v)
        if ty is None or not (subtype(ty, CONST) or ty.kind == "list" and subtype(ty.args[0], CONST)):
            return False
    return True


def split(ms: MetaState, c, comp=None, sampler: Optional[Sampler] = None
          ) -> Tuple[Optional[MetaState], Optional[MetaState]]:
    """The two halves of ``ms`` under ``c`` and its complement; None for an inconsistent half.

    A complement given explicitly (a user case) is trusted to cover the rest.
    Otherwise the goal must become ground under every grounding, so that it
    is either valid or unsatisfiable and the two halves are exhaustive.
    """
    if comp is None:
        comp = complement(c)
        ctx = Context(ms.where)
        if not all(ground_typed(g, ctx) for g in constraint_terms(c)):
            raise ValueError(f"{c} and {comp} need not cover every grounding")
    halves = []
    for half in (c, comp):
        sub = ms.with_where(ms.where + (half,))
        halves.append(None if m_solve(sub.where, sampler).inconsistent else sub)
    return halves[0], halves[1]


def sample_concretizations(ms: MetaState, n: int, sampler: Optional[Sampler] = None,
                           extra: Sequence = ()) -> List[CanonState]:
    """Up to ``n`` distinct object states in the concretization of ``ms``."""
    sampler = sampler or Sampler(random.Random(0))
    M = tuple(ms.where) + tuple(extra)
    solved = solve_equalities(M)
    if solved is None:
        return []
    s, rest = solved
    ms = ms.substitute(s)
    out = []
    for sigma in sampler.groundings(rest, n * 3, extra_vars=ms.meta_vars(), rest_vars=ms.rest,
                                    brest_vars=[ms.brest] if ms.brest else []):
        st = drop_state(ms, sigma)
        if st not in out:
            out.append(st)
        if len(out) >= n:
            break
    return out
