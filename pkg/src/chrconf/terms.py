"""First-order terms, substitutions, unification and matching.

Terms are immutable.  A substitution is a plain ``dict`` from variable id
to term, kept idempotent by the functions in this module.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass
from typing import Dict, Iterable, Iterator, Optional, Tuple, Union


@dataclass(frozen=True)
class Var:
    id: str

    def __str__(self) -> str:
        return self.id


@dataclass(frozen=True)
class Const:
    name: str

    def __str__(self) -> str:
        return _atom_text(self.name)


@dataclass(frozen=True)
class Int:
    value: int

    def __str__(self) -> str:
        return str(self.value)


@dataclass(frozen=True)
class Name:
    """Ground-representation name of an object variable (``'X'``)."""

    var: str

    def __str__(self) -> str:
        return "'" + self.var + "'"


@dataclass(frozen=True)
class Compound:
    functor: str
    args: Tuple["Term", ...]

    def __post_init__(self):
        if not self.args:
            raise ValueError("compound terms need at least one argument; use Const")

    @property
    def arity(self) -> int:
        return len(self.args)

    def __str__(self) -> str:
        from .syntax import format_term

        return format_term(self)


Term = Union[Var, Const, Int, Name, Compound]
Subst = Dict[str, Term]

NIL = Const("[]")
TRUE = Const("true")


def mk(functor: str, *args: Term) -> Term:
    """Build ``functor(args...)``, or a constant when there are no args."""
    if not args:
        return Const(functor)
    return Compound(functor, tuple(args))


def mklist(items: Iterable[Term], tail: Term = NIL) -> Term:
    items = list(items)
    out = tail
    for item in reversed(items):
        out = Compound(".", (item, out))
    return out


def list_parts(t: Term) -> Tuple[list, Term]:
    """Split a (possibly partial) list into its elements and its tail."""
    items = []
    while isinstance(t, Compound) and t.functor == "." and t.arity == 2:
        items.append(t.args[0])
        t = t.args[1]
    return items, t


def _atom_text(name: str) -> str:
    if name == "[]" or (name[:1].islower() and name.replace("_", "a").isalnum()):
        return name
    if name and all(c in "+-*/\\^<>=~:.?@#&$" for c in name):
        return name
    return "'" + name.replace("'", "\\'") + "'"


# -- fresh variables -------------------------------------------------------

_fresh_counter = itertools.count(1)


def fresh_var(base: str = "G") -> Var:
    # itertools.count.__next__ is atomic under the GIL
    return Var(f"_{base}{next(_fresh_counter)}")


def is_fresh_id(ident: str) -> bool:
    return ident.startswith("_") and len(ident) > 2 and ident[1].isupper() and ident[2:].isdigit()


# -- traversal -------------------------------------------------------------

def variables(t: Term) -> Iterator[str]:
    """Variable ids of ``t`` in left-to-right order (with repetitions)."""
    stack = [t]
    while stack:
        s = stack.pop()
        if isinstance(s, Var):
            yield s.id
        elif isinstance(s, Compound):
            stack.extend(reversed(s.args))


def var_set(*ts: Term) -> set:
    out = set()
    for t in ts:
        out.update(variables(t))
    return out


def ordered_vars(ts: Iterable[Term]) -> list:
    seen = {}
    for t in ts:
        for v in variables(t):
            seen.setdefault(v, None)
    return list(seen)


def is_ground(t: Term) -> bool:
    return next(variables(t), None) is None


def occurs(vid: str, t: Term) -> bool:
    return any(v == vid for v in variables(t))


def subterms(t: Term) -> Iterator[Term]:
    yield t
    if isinstance(t, Compound):
        for a in t.args:
            yield from subterms(a)


def skeleton(t: Term) -> Term:
    """``t`` with every variable replaced by the same placeholder."""
    if isinstance(t, Var):
        return Var("_")
    if isinstance(t, Compound):
        return Compound(t.functor, tuple(skeleton(a) for a in t.args))
    return t


# -- substitution ----------------------------------------------------------

def apply(t: Term, s: Subst) -> Term:
    if not s:
        return t
    if isinstance(t, Var):
        r = s.get(t.id)
        if r is None:
            return t
        # substitutions built here are idempotent, but callers may hand in
        # triangular ones
        return apply(r, s) if r != t and any(v in s for v in variables(r)) else r
    if isinstance(t, Compound):
        new_args = tuple(apply(a, s) for a in t.args)
        if new_args == t.args:
            return t
        return Compound(t.functor, new_args)
    return t


def rename(t: Term, s: Subst) -> Term:
    """Simultaneous one-pass substitution; safe for renamings that permute names."""
    if isinstance(t, Var):
        return s.get(t.id, t)
    if isinstance(t, Compound):
        return Compound(t.functor, tuple(rename(a, s) for a in t.args))
    return t


def compose(s1: Subst, s2: Subst) -> Subst:
    """The substitution applying ``s1`` then ``s2``."""
    out = {}
    for k, v in s1.items():
        v2 = apply(v, s2)
        if not (isinstance(v2, Var) and v2.id == k):
            out[k] = v2
    for k, v in s2.items():
        if k not in s1:
            out[k] = v
    return out


def _bind(s: Subst, vid: str, t: Term) -> Subst:
    single = {vid: t}
    out = {k: apply(v, single) for k, v in s.items()}
    out[vid] = t
    return out


def unify(t1: Term, t2: Term, subst: Optional[Subst] = None,
          prefer: frozenset = frozenset()) -> Optional[Subst]:
    """Most general unifier with occurs-check, extending ``subst``.

    When two variables meet, a variable listed in ``prefer`` is the one that
    gets bound.  Returns ``None`` if the terms do not unify.
    """
    s = dict(subst) if subst else {}
    stack = [(t1, t2)]
    while stack:
        a, b = stack.pop()
        a = apply(a, s)
        b = apply(b, s)
        if a == b:
            continue
        if isinstance(b, Var) and (not isinstance(a, Var) or (b.id in prefer and a.id not in prefer)):
            a, b = b, a
        if isinstance(a, Var):
            if occurs(a.id, b):
                return None
            s = _bind(s, a.id, b)
        elif isinstance(a, Compound) and isinstance(b, Compound):
            if a.functor != b.functor or a.arity != b.arity:
                return None
            stack.extend(zip(a.args, b.args))
        else:
            return None
    return s


def unify_all(pairs: Iterable[Tuple[Term, Term]], subst: Optional[Subst] = None) -> Optional[Subst]:
    s = dict(subst) if subst else {}
    for a, b in pairs:
        s = unify(a, b, s)
        if s is None:
            return None
    return s


def match(pattern: Term, target: Term, subst: Optional[Subst] = None) -> Optional[Subst]:
    """One-way unification: bind only variables of ``pattern``.

    Variables of ``target`` are treated as constants.  ``subst`` holds
    bindings already made for pattern variables.
    """
    s = dict(subst) if subst else {}
    stack = [(pattern, target)]
    while stack:
        p, t = stack.pop()
        if isinstance(p, Var):
            bound = s.get(p.id)
            if bound is None:
                s[p.id] = t
            elif bound != t:
                return None
        elif isinstance(p, Compound):
            if not isinstance(t, Compound) or p.functor != t.functor or p.arity != t.arity:
                return None
            stack.extend(zip(p.args, t.args))
        elif p != t:
            return None
    return s


def match_all(pairs: Iterable[Tuple[Term, Term]], subst: Optional[Subst] = None) -> Optional[Subst]:
    s = dict(subst) if subst else {}
    for p, t in pairs:
        s = match(p, t, s)
        if s is None:
            return None
    return s


def renaming_for(ts: Iterable[Term], avoid: Iterable[str] = (), base: str = "G") -> Subst:
    """Fresh renaming for all variables of ``ts``.

    ``avoid`` is accepted for interface clarity only: fresh names never
    collide with parsed or previously issued names.
    """
    del avoid
    return {v: fresh_var(base) for v in ordered_vars(ts)}


def rename_apart(t: Term, avoid: Iterable[str] = ()) -> Term:
    return apply(t, renaming_for([t], avoid))


def is_renaming(s: Subst) -> bool:
    targets = list(s.values())
    return all(isinstance(v, Var) for v in targets) and len({v.id for v in targets}) == len(targets)
