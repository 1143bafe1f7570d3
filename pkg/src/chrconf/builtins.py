"""Decidable built-in theory: Herbrand equality plus integer difference bounds.

Equalities are solved by unification (with occurs-check).  Comparisons
``<, =<, >, >=`` are read arithmetically over terms built from integers,
variables, ``+`` and ``-``; after normalisation every comparison must have
the shape ``x - y =< k``, ``x =< k`` or ``-x =< k``, which is kept in a
closed difference-bound matrix.  A variable occurring in a comparison is
integer-valued; binding it to anything that is not arithmetic fails.
"""

from __future__ import annotations

import enum
import math
from typing import Dict, FrozenSet, Iterable, List, Mapping, Optional, Tuple

from .terms import Compound, Const, Int, Name, Subst, Term, Var, apply, rename, unify, var_set

BUILTIN_PREDICATES = frozenset({
    ("true", 0), ("fail", 0),
    ("=", 2), ("==", 2),
    ("<", 2), ("=<", 2), (">", 2), (">=", 2),
})
COMPARISONS = ("<", "=<", ">", ">=")
NEGATION = {"<": ">=", ">=": "<", ">": "=<", "=<": ">"}

ZERO = ""  # the distinguished node of the bound graph

Lin = Tuple[Dict[str, int], int]


class UnsupportedBuiltin(Exception):
    pass


class NonArithmetic(Exception):
    """A comparison argument is not an integer expression."""


class Entailment(enum.Enum):
    YES = "yes"
    NO = "no"
    UNKNOWN = "unknown"


def is_builtin(t: Term) -> bool:
    if isinstance(t, Compound):
        return (t.functor, t.arity) in BUILTIN_PREDICATES
    if isinstance(t, Const):
        return (t.name, 0) in BUILTIN_PREDICATES
    return False


def is_comparison(t: Term) -> bool:
    return isinstance(t, Compound) and t.arity == 2 and t.functor in COMPARISONS


def negate(t: Term) -> Term:
    """Complement of a single comparison atom."""
    if not is_comparison(t):
        raise ValueError(f"cannot negate {t}")
    return Compound(NEGATION[t.functor], t.args)


def linearize(t: Term) -> Lin:
    if isinstance(t, Int):
        return {}, t.value
    if isinstance(t, Var):
        return {t.id: 1}, 0
    if isinstance(t, Compound):
        if t.arity == 2 and t.functor in ("+", "-"):
            (ca, ka), (cb, kb) = linearize(t.args[0]), linearize(t.args[1])
            sign = 1 if t.functor == "+" else -1
            out = dict(ca)
            for v, c in cb.items():
                out[v] = out.get(v, 0) + sign * c
            return out, ka + sign * kb
        if t.arity == 1 and t.functor == "-":
            c, k = linearize(t.args[0])
            return {v: -x for v, x in c.items()}, -k
        if t.arity == 2 and t.functor == "*":
            (ca, ka), (cb, kb) = linearize(t.args[0]), linearize(t.args[1])
            if ca and cb:
                raise UnsupportedBuiltin(f"nonlinear arithmetic in {t}")
            if not ca:
                return {v: ka * x for v, x in cb.items()}, ka * kb
            return {v: kb * x for v, x in ca.items()}, ka * kb
        if t.functor in ("+", "-", "*", "/"):
            raise UnsupportedBuiltin(f"unsupported arithmetic {t}")
    raise NonArithmetic(str(t))


def comparison_constraint(atom: Compound) -> Lin:
    """``sum(coef*var) =< k`` equivalent to the comparison atom."""
    (cl, kl), (cr, kr) = linearize(atom.args[0]), linearize(atom.args[1])
    coeffs = dict(cl)
    for v, c in cr.items():
        coeffs[v] = coeffs.get(v, 0) - c
    k = kr - kl
    op = atom.functor
    if op in (">", ">="):
        coeffs = {v: -c for v, c in coeffs.items()}
        k = -k
    if op in ("<", ">"):
        k -= 1
    return coeffs, k


def _edge(coeffs: Dict[str, int], k: int) -> Optional[Tuple[str, str, int]]:
    """(u, v, k) for ``u - v =< k``; None for a variable-free constraint."""
    nz = {v: c for v, c in coeffs.items() if c}
    if not nz:
        return None
    pos = [v for v, c in nz.items() if c == 1]
    neg = [v for v, c in nz.items() if c == -1]
    if len(pos) + len(neg) != len(nz) or len(pos) > 1 or len(neg) > 1:
        raise UnsupportedBuiltin("comparison outside the difference-bound fragment")
    return (pos[0] if pos else ZERO), (neg[0] if neg else ZERO), k


def check_builtin_atom(atom: Term) -> None:
    if not is_builtin(atom):
        raise UnsupportedBuiltin(f"unsupported built-in {atom}")
    if is_comparison(atom):
        try:
            coeffs, _ = comparison_constraint(atom)
        except NonArithmetic:
            return
        _edge(coeffs, 0)


def _vars_of_lin(coeffs: Mapping[str, int]) -> set:
    return {v for v, c in coeffs.items() if c}


class BuiltinStore:
    """Conjunction of built-ins in solved form.  Instances are never mutated."""

    __slots__ = ("subst", "int_vars", "bounds", "failed")

    def __init__(self, subst: Optional[Subst] = None, int_vars: FrozenSet[str] = frozenset(),
                 bounds: Optional[Dict[Tuple[str, str], int]] = None, failed: bool = False):
        self.subst: Subst = subst or {}
        self.int_vars = frozenset(int_vars)
        self.bounds: Dict[Tuple[str, str], int] = bounds or {}
        self.failed = failed

    # construction ----------------------------------------------------------

    @classmethod
    def empty(cls) -> "BuiltinStore":
        return cls()

    @classmethod
    def of(cls, atoms: Iterable[Term]) -> "BuiltinStore":
        return cls().add_all(atoms)

    def add(self, atom: Term) -> "BuiltinStore":
        if self.failed:
            return self
        if isinstance(atom, Const):
            if atom.name == "true":
                return self
            if atom.name == "fail":
                return FAILED
        if not is_builtin(atom):
            raise UnsupportedBuiltin(f"unsupported built-in {atom}")
        if atom.functor in ("=", "=="):
            s = unify(atom.args[0], atom.args[1], self.subst)
            if s is None:
                return FAILED
            return _rebuild(s, self._constraints(), self.int_vars)
        inst = apply(atom, self.subst)
        try:
            coeffs, k = comparison_constraint(inst)
        except NonArithmetic:
            return FAILED
        cons = self._constraints() + [(coeffs, k)]
        return _rebuild(self.subst, cons, self.int_vars | var_set(inst))

    def add_all(self, atoms: Iterable[Term]) -> "BuiltinStore":
        s = self
        for a in atoms:
            s = s.add(a)
            if s.failed:
                return s
        return s

    def declare_int(self, vid: str) -> "BuiltinStore":
        if self.failed:
            return self
        return _rebuild(self.subst, self._constraints(), self.int_vars | {vid})

    def _constraints(self) -> List[Lin]:
        out = []
        for (u, v), k in self.bounds.items():
            c = {}
            if u != ZERO:
                c[u] = 1
            if v != ZERO:
                c[v] = c.get(v, 0) - 1
            out.append((c, k))
        return out

    # queries ---------------------------------------------------------------

    def satisfiable(self) -> bool:
        return not self.failed

    def apply(self, t: Term) -> Term:
        return apply(t, self.subst)

    def bound(self, u: str, v: str) -> float:
        if u == v:
            return 0
        return self.bounds.get((u, v), math.inf)

    def value_range(self, vid: str) -> Tuple[float, float]:
        return -self.bound(ZERO, vid), self.bound(vid, ZERO)

    def _lin_entailed(self, coeffs: Dict[str, int], k: int) -> bool:
        e = _edge(coeffs, k)
        if e is None:
            return k >= 0
        return self._edge_entailed(e)

    def _edge_entailed(self, e) -> bool:
        u, v, k = e
        for x in (u, v):
            if x != ZERO and x not in self.int_vars:
                return False
        return self.bound(u, v) <= k

    def entails(self, locals_: Iterable[str], goal: Iterable[Term]) -> Entailment:
        if self.failed:
            return Entailment.YES
        goal = list(goal)
        local = frozenset(locals_)
        try:
            verdict = self._entails(local, goal)
        except UnsupportedBuiltin:
            return Entailment.UNKNOWN
        if verdict:
            return Entailment.YES
        try:
            combined = self.add_all(goal)
        except UnsupportedBuiltin:
            return Entailment.UNKNOWN
        return Entailment.NO if combined.failed else Entailment.UNKNOWN

    def _entails(self, local: FrozenSet[str], goal: List[Term]) -> bool:
        eqs, comps = [], []
        for g in goal:
            if g == Const("true"):
                continue
            if g == Const("fail"):
                return False
            if not is_builtin(g):
                raise UnsupportedBuiltin(f"unsupported built-in {g}")
            (eqs if g.functor in ("=", "==") else comps).append(g)
        delta = dict(self.subst)
        for e in eqs:
            delta = unify(e.args[0], e.args[1], delta, prefer=local)
            if delta is None:
                return False
        for v, t in delta.items():
            if v in local:
                continue
            if apply(Var(v), self.subst) != t:
                return False
        local_cons = []
        for c in comps:
            inst = apply(c, delta)
            try:
                coeffs, k = comparison_constraint(inst)
            except NonArithmetic:
                return False
            vs = var_set(inst)
            if not (vs - local) <= self.int_vars:
                return False
            if vs & local:
                local_cons.append((coeffs, k))
            elif not self._lin_entailed(coeffs, k):
                return False
        if local_cons:
            proj = _rebuild({}, local_cons, frozenset().union(*(_vars_of_lin(c) for c, _ in local_cons)))
            if proj.failed:
                return False
            for (u, v), k in proj.bounds.items():
                if u in local or v in local:
                    continue
                if not self._edge_entailed((u, v, k)):
                    return False
            for v, t in proj.subst.items():
                # a pinned value or an identification forced among non-locals
                if v in local:
                    continue
                if isinstance(t, Var) and t.id in local:
                    continue
                if not self._lin_entailed(*_eq_as_lin(v, t)) or not self._lin_entailed(
                        *_neg_lin(*_eq_as_lin(v, t))):
                    return False
        return True

    # canonical views -----------------------------------------------------

    def key(self) -> tuple:
        if self.failed:
            return ("failure",)
        return (tuple(sorted((k, str(v)) for k, v in self.subst.items())),
                tuple(sorted(self.int_vars)),
                tuple(sorted(self.bounds.items())))

    def equivalent(self, other: "BuiltinStore", renaming: Optional[Subst] = None) -> bool:
        if self.failed or other.failed:
            return self.failed and other.failed
        a = self.renamed(renaming) if renaming else self
        return a.key() == other.key()

    def renamed(self, renaming: Subst) -> "BuiltinStore":
        if self.failed:
            return self
        ren = {k: v.id for k, v in renaming.items() if isinstance(v, Var)}
        r = lambda x: ren.get(x, x)
        subst = {r(k): rename(v, renaming) for k, v in self.subst.items()}
        return BuiltinStore(subst, frozenset(r(v) for v in self.int_vars),
                            {(r(u), r(v)): k for (u, v), k in self.bounds.items()})

    def comparison_atoms(self, keep: Optional[Iterable[str]] = None) -> List[Term]:
        """Closed bounds (projected on ``keep``) rendered as comparison atoms."""
        if self.failed:
            return [Const("fail")]
        keep = set(self.int_vars if keep is None else keep)
        atoms = []
        mentioned = set()
        for (u, v), k in sorted(self.bounds.items()):
            if (u != ZERO and u not in keep) or (v != ZERO and v not in keep):
                continue
            mentioned.update(x for x in (u, v) if x != ZERO)
            atoms.append(_edge_atom(u, v, k))
        for v in sorted(self.int_vars & keep - mentioned):
            atoms.append(Compound("=<", (Var(v), Var(v))))
        return atoms

    def atoms(self, keep: Optional[Iterable[str]] = None) -> List[Term]:
        out = [Compound("=", (Var(k), v)) for k, v in sorted(self.subst.items(), key=lambda kv: kv[0])
               if keep is None or k in keep]
        return out + self.comparison_atoms(keep)

    def __repr__(self) -> str:
        if self.failed:
            return "BuiltinStore(fail)"
        from .syntax import format_conj
        return f"BuiltinStore({format_conj(self.atoms())})"


FAILED = BuiltinStore(failed=True)


def _eq_as_lin(v: str, t: Term) -> Lin:
    c, k = linearize(t)
    c = {x: -y for x, y in c.items()}
    c[v] = c.get(v, 0) + 1
    return c, k


def _neg_lin(c: Dict[str, int], k: int) -> Lin:
    return {x: -y for x, y in c.items()}, -k


def _edge_atom(u: str, v: str, k: int) -> Term:
    if v == ZERO:
        return Compound("=<", (Var(u), Int(k)))
    if u == ZERO:
        return Compound(">=", (Var(v), Int(-k)))
    rhs = Int(k)
    return Compound("=<", (Compound("-", (Var(u), Var(v))), rhs))


def _substitute_lin(coeffs: Dict[str, int], k: int, lin_of: Dict[str, Lin]) -> Lin:
    out: Dict[str, int] = {}
    for v, c in coeffs.items():
        if v in lin_of:
            sub_c, sub_k = lin_of[v]
            for w, d in sub_c.items():
                out[w] = out.get(w, 0) + c * d
            k -= c * sub_k
        else:
            out[v] = out.get(v, 0) + c
    return {v: c for v, c in out.items() if c}, k


def _rebuild(subst: Subst, cons: List[Lin], ints: FrozenSet[str]) -> BuiltinStore:
    while True:
        lin_of = {}
        for v in ints:
            if v in subst:
                try:
                    lin_of[v] = linearize(subst[v])
                except NonArithmetic:
                    return FAILED
        new_ints = set()
        for v in ints:
            if v in lin_of:
                new_ints |= _vars_of_lin(lin_of[v][0])
            else:
                new_ints.add(v)
        cons = [_substitute_lin(c, k, lin_of) for c, k in cons]
        nodes = sorted(new_ints) + [ZERO]
        dist: Dict[Tuple[str, str], float] = {}
        for c, k in cons:
            e = _edge(c, k)
            if e is None:
                if k < 0:
                    return FAILED
                continue
            u, v, w = e
            if u == v:
                if w < 0:
                    return FAILED
                continue
            if w < dist.get((u, v), math.inf):
                dist[(u, v)] = w
        for m in nodes:
            for i in nodes:
                dim = dist.get((i, m))
                if dim is None or i == m:
                    continue
                for j in nodes:
                    if j == m:
                        continue
                    dmj = dist.get((m, j))
                    if dmj is None:
                        continue
                    if i == j:
                        if dim + dmj < 0:
                            return FAILED
                        continue
                    if dim + dmj < dist.get((i, j), math.inf):
                        dist[(i, j)] = dim + dmj
        # integer solutions: pinned variables and identified pairs become bindings
        binding = None
        for x in sorted(new_ints):
            hi, lo = dist.get((x, ZERO)), dist.get((ZERO, x))
            if hi is not None and lo is not None and hi == -lo:
                binding = (x, Int(int(hi)))
                break
        if binding is None:
            xs = sorted(new_ints)
            for i, x in enumerate(xs):
                for y in xs[i + 1:]:
                    if dist.get((x, y)) == 0 and dist.get((y, x)) == 0:
                        binding = (y, Var(x))
                        break
                if binding:
                    break
        if binding is None:
            bounds = {(u, v): int(w) for (u, v), w in dist.items() if u != v}
            return BuiltinStore(subst, frozenset(new_ints), bounds)
        s2 = unify(Var(binding[0]), binding[1], subst)
        if s2 is None:
            return FAILED
        subst = s2
        ints = frozenset(new_ints)
        cons = [(_edge_lin(u, v), w) for (u, v), w in dist.items() if u != v]


def _edge_lin(u: str, v: str) -> Dict[str, int]:
    c = {}
    if u != ZERO:
        c[u] = 1
    if v != ZERO:
        c[v] = c.get(v, 0) - 1
    return c


# -- functional surface ------------------------------------------------------

def add(store: BuiltinStore, atom: Term) -> BuiltinStore:
    return store.add(atom)


def satisfiable(store: BuiltinStore) -> bool:
    return store.satisfiable()


def entails(store: BuiltinStore, locals_: Iterable[str], goal: Iterable[Term]) -> Entailment:
    return store.entails(locals_, goal)


def equivalent(b1: BuiltinStore, b2: BuiltinStore, renaming: Optional[Subst] = None) -> bool:
    return b1.equivalent(b2, renaming)
