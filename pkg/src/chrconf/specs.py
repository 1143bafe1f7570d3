"""Invariant and state-equivalence specifications (``.cspec`` files) and
matching of meta states against their templates.

A template is a meta state pattern ``<{atoms} + S, B>`` whose variables are
meta variables.  Quoted names that look like variables (``'X'``) name
object variables.
"""

from __future__ import annotations

import itertools
from dataclasses import dataclass, field
from typing import Dict, Iterable, Iterator, List, Optional, Sequence, Tuple

from .builtins import is_builtin
from .meta import (BASE_TYPES, EMPTY, Context, Entails, Eq, FreshVars, MetaState, MType, Perm, Refutes,
                   Sat, TypeClash, TypeOf, decompose_type, evaluate, is_multiset, list_of, multiset,
                   multiset_items, name_of, new_meta_var, store_of, substitute_constraint, drop)
from .semantics import CanonState, StateEquivalence, StateRepr, canonicalize
from .builtins import BuiltinStore
from .syntax import ParseError, TermParser, Token, format_term, tokenize
from .terms import Compound, Const, Name, Subst, Term, Var, apply, list_parts, match, mklist, unify, var_set


# -- data ------------------------------------------------------------------------------------

@dataclass(frozen=True)
class StateTemplate:
    atoms: Tuple[Term, ...]
    rest: Optional[str] = None
    builtins: Tuple[Term, ...] = ()
    brest: Optional[str] = None

    def vars(self) -> set:
        out = var_set(*self.atoms, *self.builtins)
        if self.rest:
            out.add(self.rest)
        if self.brest:
            out.add(self.brest)
        return out

    def __str__(self) -> str:
        store = "{" + ", ".join(map(format_term, self.atoms)) + "}"
        if self.rest:
            store += f" + {self.rest}"
        b = [format_term(x) for x in self.builtins] + ([self.brest] if self.brest else [])
        return f"<{store}, {', '.join(b) if b else 'true'}>"


def _rename_template(t: StateTemplate, ren: Dict[str, Var]) -> StateTemplate:
    return StateTemplate(tuple(apply(a, ren) for a in t.atoms), ren[t.rest].id if t.rest else None,
                         tuple(apply(b, ren) for b in t.builtins), ren[t.brest].id if t.brest else None)


@dataclass(frozen=True)
class InvariantTemplate:
    state: StateTemplate
    where: Tuple = ()

    def fresh(self) -> "InvariantTemplate":
        ren = {v: new_meta_var("T") for v in sorted(self.state.vars() | _where_vars(self.where))}
        return InvariantTemplate(_rename_template(self.state, ren),
                                 tuple(substitute_constraint(c, ren) for c in self.where))

    def __str__(self) -> str:
        return f"invariant state {self.state} where {', '.join(map(str, self.where)) or 'true'}"


@dataclass(frozen=True)
class EquivTemplate:
    left: StateTemplate
    right: StateTemplate
    where: Tuple = ()

    def fresh(self) -> "EquivTemplate":
        vs = self.left.vars() | self.right.vars() | _where_vars(self.where)
        ren = {v: new_meta_var("T") for v in sorted(vs)}
        return EquivTemplate(_rename_template(self.left, ren), _rename_template(self.right, ren),
                             tuple(substitute_constraint(c, ren) for c in self.where))

    def flipped(self) -> "EquivTemplate":
        return EquivTemplate(self.right, self.left, self.where)

    def __str__(self) -> str:
        return f"equiv {self.left} ~ {self.right} where {', '.join(map(str, self.where)) or 'true'}"


def _where_vars(where) -> set:
    from .meta import constraint_terms
    return var_set(*[t for c in where for t in constraint_terms(c)])


@dataclass
class InvariantSpec:
    templates: List[InvariantTemplate] = field(default_factory=list)


@dataclass
class EquivSpec:
    templates: List[EquivTemplate] = field(default_factory=list)

    def oriented(self) -> List[EquivTemplate]:
        out = []
        for t in self.templates:
            out.append(t)
            if t.left != t.right:
                out.append(t.flipped())
        return out


@dataclass
class CaseSpec:
    """A user split: the constraint and its complement must cover every state."""

    constraint: object
    complement: object


@dataclass
class Spec:
    types: Dict[str, MType] = field(default_factory=dict)
    invariant: Optional[InvariantSpec] = None
    equiv: Optional[EquivSpec] = None
    cases: List[CaseSpec] = field(default_factory=list)
    path: str = "<input>"


# -- parsing ---------------------------------------------------------------------------------

def _namify(t: Term) -> Term:
    if isinstance(t, Const) and t.name[:1].isupper() and t.name.replace("_", "a").isalnum():
        return Name(t.name)
    if isinstance(t, Compound):
        return Compound(t.functor, tuple(_namify(a) for a in t.args))
    return t


class _SpecParser(TermParser):
    def __init__(self, toks: List[Token], path: str, types: Dict[str, MType]):
        super().__init__(toks, path)
        self.types = types

    def term(self, prec: int = 999) -> Term:
        return _namify(self.parse(prec))

    def type_expr(self, t: Term, tok: Token) -> MType:
        if isinstance(t, Const):
            if t.name in BASE_TYPES:
                return BASE_TYPES[t.name]
            if t.name in self.types:
                return self.types[t.name]
            self.error(f"undeclared type {t.name}", tok)
        if isinstance(t, Compound) and t.functor == "list" and t.arity == 1:
            return list_of(self.type_expr(t.args[0], tok))
        if isinstance(t, Compound) and t.functor == "store":
            pats = []
            for p in t.args:
                if isinstance(p, Const):
                    pats.append((p.name, ()))
                elif isinstance(p, Compound):
                    pats.append((p.functor, tuple(self.type_expr(a, tok) for a in p.args)))
                else:
                    self.error("store patterns are atoms with type arguments", tok)
            return store_of(*pats)
        self.error(f"not a type: {format_term(t)}", tok)

    def template(self) -> StateTemplate:
        self.expect("sym", "<")
        self.expect("punct", "{")
        atoms = []
        if not self.at("punct", "}"):
            atoms.append(self.term())
            while self.at("punct", ","):
                self.next()
                atoms.append(self.term())
        self.expect("punct", "}")
        rest = None
        if self.at("sym", "+"):
            self.next()
            tok = self.expect("var")
            rest = self.variable(tok.text, tok).id
        self.expect("punct", ",")
        builtins, brest = [], None
        while True:
            # comparisons inside a template need parentheses: '>' closes it
            t = self.term(699)
            if isinstance(t, Var):
                brest = t.id
            elif t != Const("true"):
                builtins.append(t)
            if self.at("sym", "/\\") or self.at("punct", ","):
                self.next()
                continue
            break
        self.expect("sym", ">")
        for a in atoms:
            if isinstance(a, Var) or is_builtin(a):
                self.error("template stores hold user constraints; use '+ S' for a rest")
        return StateTemplate(tuple(atoms), rest, tuple(builtins), brest)

    def constraints(self) -> Tuple:
        out = [self.constraint()]
        while self.at("punct", ","):
            self.next()
            out.append(self.constraint())
        return tuple(out)

    def constraint(self):
        tok = self.tok
        t = self.term()
        if isinstance(t, Compound):
            f, args = t.functor, t.args
            if f == "type" and len(args) == 2:
                return TypeOf(self.type_expr(args[0], tok), args[1])
            if f == "perm" and len(args) == 2:
                return Perm(args[0], args[1])
            if f == "succeeds":
                return Entails((), (), tuple(args))
            if f == "fails":
                return Refutes((), tuple(args))
            if f == "sat":
                return Sat(tuple(args))
            if f == "freshVars" and len(args) == 2:
                items, _ = list_parts(args[0])
                return FreshVars(tuple(items), (args[1],))
            if f == "=" and len(args) == 2:
                return Eq(args[0], args[1])
        self.error(f"unknown meta constraint {format_term(t)}", tok)


def parse_spec(text: str, path: str = "<input>") -> Spec:
    toks = tokenize(text, path)
    spec = Spec(path=path)
    # split into declarations at clause ends
    decls, cur = [], []
    for t in toks:
        if t.kind == "eof":
            break
        cur.append(t)
        if t.kind == "end":
            decls.append(cur)
            cur = []
    if cur:
        last = cur[-1]
        raise ParseError("declaration not terminated by '.'", last.line, last.col, path)
    for d in decls:
        eof = Token("eof", "", d[-1].line, d[-1].col)
        p = _SpecParser(d + [eof], path, spec.types)
        kw = p.next()
        if kw.kind != "atom":
            p.error("expected a declaration keyword", kw)
        if kw.text == "type":
            name_tok = p.expect("atom")
            p.expect("sym", "=")
            tok = p.tok
            ty = p.type_expr(p.parse(1200), tok)
            spec.types[name_tok.text] = MType(ty.kind, ty.args, name_tok.text)
        elif kw.text == "invariant":
            if p.at("atom", "state"):
                p.next()
            tmpl = p.template()
            where = ()
            if p.at("atom", "where"):
                p.next()
                where = p.constraints()
            spec.invariant = spec.invariant or InvariantSpec()
            spec.invariant.templates.append(InvariantTemplate(tmpl, where))
        elif kw.text == "equiv":
            left = p.template()
            p.expect("sym", "~")
            right = p.template()
            where = ()
            if p.at("atom", "where"):
                p.next()
                where = p.constraints()
            spec.equiv = spec.equiv or EquivSpec()
            spec.equiv.templates.append(EquivTemplate(left, right, where))
        elif kw.text == "case":
            cs = p.constraints()
            if len(cs) != 2:
                p.error("a case declaration lists a constraint and its complement", kw)
            spec.cases.append(CaseSpec(cs[0], cs[1]))
        else:
            p.error(f"unknown declaration {kw.text!r}", kw)
        p.expect("end")
    return spec


def parse_spec_file(path) -> Spec:
    with open(path, encoding="utf-8") as f:
        return parse_spec(f.read(), str(path))


# -- matching ------------------------------------------------------------------------------------

@dataclass
class TemplateMatch:
    subst: Subst
    conditions: Tuple  # meta constraints the match relies on


def _pair(mode: str, pattern: Term, target: Term, s: Subst) -> Optional[Subst]:
    if mode == "match":
        return match(pattern, target, s)
    return unify(pattern, target, s)


def match_template(tmpl: StateTemplate, ms: MetaState, mode: str = "unify",
                   subst: Optional[Subst] = None) -> Iterator[TemplateMatch]:
    """Ways in which ``ms`` is an instance of ``tmpl``.

    In ``unify`` mode, variables on both sides may be bound and missing
    template atoms may be drawn from a store rest variable of ``ms``; the
    result constrains ``ms``.  In ``match`` mode only template variables
    are bound, so the answer holds for ``ms`` as it is.
    """
    base = dict(subst or {})
    users = list(enumerate(ms.atoms))

    def atoms_rec(i: int, s: Subst, used: Tuple[int, ...], pulled: Tuple[Term, ...]):
        if i == len(tmpl.atoms):
            yield s, used, pulled
            return
        ta = tmpl.atoms[i]
        for pos, a in users:
            if pos in used:
                continue
            s2 = _pair(mode, ta, a, s)
            if s2 is not None:
                yield from atoms_rec(i + 1, s2, used + (pos,), pulled)
        if mode == "unify" and ms.rest:
            yield from atoms_rec(i + 1, s, used, pulled + (ta,))

    for s, used, pulled in atoms_rec(0, base, (), ()):
        s = dict(s)
        rest_vars = list(ms.rest)
        if pulled:
            donor = rest_vars[0]
            new_rest = new_meta_var("S")
            s[donor] = multiset(list(pulled) + [new_rest])
            rest_vars[0] = new_rest.id
        remainder = [a for pos, a in users if pos not in used]
        conds: List = []
        if tmpl.rest:
            val = multiset(remainder + [Var(r) for r in rest_vars])
            if mode == "match" and tmpl.rest in s:
                if _multiset_key(apply(Var(tmpl.rest), s)) != _multiset_key(val):
                    continue
            s[tmpl.rest] = val
        else:
            if remainder:
                continue
            if rest_vars:
                if mode == "match":
                    continue
                for r in rest_vars:
                    s[r] = EMPTY
        # built-in side
        b_ok = True
        if tmpl.brest:
            val = multiset(list(ms.builtins) + ([Var(ms.brest)] if ms.brest else []))
            if tmpl.builtins:
                b_ok = False  # explicit template built-ins together with a rest are not supported
            s[tmpl.brest] = val
        else:
            remaining = list(ms.builtins)
            for tb in tmpl.builtins:
                hit = None
                for j, b in enumerate(remaining):
                    s2 = _pair(mode, tb, b, s)
                    if s2 is not None:
                        hit = (j, s2)
                        break
                if hit is None:
                    b_ok = False
                    break
                s = hit[1]
                remaining.pop(hit[0])
            conds.extend(Entails((), (), (b,)) for b in remaining)
            if ms.brest:
                if mode == "match":
                    b_ok = False
                else:
                    s[ms.brest] = Const("true")
        if not b_ok:
            continue
        yield TemplateMatch(s, tuple(conds))


def _multiset_key(t: Term) -> tuple:
    if is_multiset(t):
        return tuple(sorted(format_term(a) for a in multiset_items(t)))
    return (format_term(t),)


def instantiate(tmpl: StateTemplate, s: Subst, where: Tuple = ()) -> MetaState:
    ms = MetaState(tmpl.atoms, (tmpl.rest,) if tmpl.rest else (), tmpl.builtins, tmpl.brest, where)
    return ms.substitute(s)


def expand_inv(ms: MetaState, inv: InvariantSpec) -> Iterator[Tuple[Subst, Tuple]]:
    """Alternatives ``(binding, constraints)`` whose disjunction is ``inv(ms)``.

    A template with no viable alternative contributes nothing, so an empty
    result means the invariant cannot hold.
    """
    for t in inv.templates:
        t = t.fresh()
        for m in match_template(t.state, ms, "unify"):
            where = tuple(substitute_constraint(c, m.subst) for c in t.where)
            conds = tuple(substitute_constraint(c, m.subst) for c in m.conditions)
            if _quick_clash(where + conds):
                continue
            yield m.subst, where + conds


def _quick_clash(M) -> bool:
    for c in M:
        if isinstance(c, TypeOf):
            try:
                decompose_type(c.type, c.term)
            except TypeClash:
                return True
    return Context(M).clash is not None


def expand_equiv(ms: MetaState, eq: EquivSpec) -> Iterator[Tuple[Subst, MetaState, Tuple]]:
    """Alternatives ``(binding, other, constraints)`` for ``equiv(ms, other)``."""
    for t in eq.oriented():
        t = t.fresh()
        for m in match_template(t.left, ms, "unify"):
            where = tuple(substitute_constraint(c, m.subst) for c in t.where) + m.conditions
            if _quick_clash(where):
                continue
            other = instantiate(t.right, m.subst)
            yield m.subst, other, where


def equiv_entailed(u: MetaState, v: MetaState, eq: EquivSpec, ctx: Context) -> Optional[EquivTemplate]:
    """A template pair showing ``u ~ v`` for every grounding in ``ctx``."""
    if u.failed or v.failed:
        return None
    for t0 in eq.oriented():
        t = t0.fresh()
        for m in match_template(t.left, u, "match"):
            for m2 in match_template(t.right, v, "match", m.subst):
                conds = tuple(substitute_constraint(c, m2.subst) for c in t.where) + m.conditions + m2.conditions
                if any(var_set(*_terms(c)) & (t.left.vars() | t.right.vars()) for c in conds):
                    continue
                if all(ctx.entails(c) for c in conds):
                    return t0
    return None


def _terms(c):
    from .meta import constraint_terms
    return constraint_terms(c)


# -- object level ----------------------------------------------------------------------------------

def ground_meta(state: CanonState) -> MetaState:
    """The ground meta state naming an object state."""
    return MetaState(tuple(name_of(a) for a in state.atoms), (), tuple(name_of(b) for b in state.constraints))


def _holds(conds, s: Subst = None) -> bool:
    try:
        return all(evaluate(c, s or {}) for c in conds)
    except Exception:
        return False


def invariant_holds(state: CanonState, inv: InvariantSpec) -> bool:
    if state.failed:
        return False
    ms = ground_meta(state)
    for t in inv.templates:
        t = t.fresh()
        for m in match_template(t.state, ms, "match"):
            conds = tuple(substitute_constraint(c, m.subst) for c in t.where) + m.conditions
            if _holds(conds):
                return True
    return False


def _ground_state(ms: MetaState) -> CanonState:
    store = tuple(drop(a) for a in ms.atoms)
    b = BuiltinStore.of(drop(x) for x in ms.builtins)
    return canonicalize(StateRepr(store, b, b.failed))


class SpecEquivalence(StateEquivalence):
    """Object-level equivalence given by the templates of an :class:`EquivSpec`,
    closed under reflexivity and symmetry."""

    def __init__(self, eq: EquivSpec, max_equivalents: int = 720):
        self.eq = eq
        self.max_equivalents = max_equivalents

    def __call__(self, a: CanonState, b: CanonState) -> bool:
        if a == b:
            return True
        if a.failed or b.failed:
            return False
        u, v = ground_meta(a), ground_meta(b)
        for t in self.eq.oriented():
            t = t.fresh()
            for m in match_template(t.left, u, "match"):
                for m2 in match_template(t.right, v, "match", m.subst):
                    conds = tuple(substitute_constraint(c, m2.subst) for c in t.where) + m.conditions + m2.conditions
                    if _holds(conds):
                        return True
        return False

    def equivalents(self, s: CanonState) -> Iterator[CanonState]:
        if s.failed:
            return
        u = ground_meta(s)
        seen = {s}
        for t in self.eq.oriented():
            t = t.fresh()
            for m in match_template(t.left, u, "match"):
                for sub in _complete(t, m.subst):
                    conds = tuple(substitute_constraint(c, sub) for c in t.where) + m.conditions
                    if not _holds(conds):
                        continue
                    other = instantiate(t.right, sub)
                    if other.meta_vars():
                        continue
                    st = _ground_state(other)
                    if st not in seen:
                        seen.add(st)
                        yield st
                        if len(seen) > self.max_equivalents:
                            return

    def key(self, s: CanonState):
        return None


def _complete(t: EquivTemplate, s: Subst) -> Iterator[Subst]:
    """Bind right-hand template variables that the left match left open,
    using permutation constraints as generators."""
    missing = [v for v in sorted(t.right.vars()) if v not in s]
    if not missing:
        yield s
        return
    gens = {}
    for c in t.where:
        if isinstance(c, Perm):
            for a, b in ((c.left, c.right), (c.right, c.left)):
                if isinstance(b, Var) and b.id in missing and not var_set(apply(a, s)):
                    gens[b.id] = apply(a, s)
    if set(missing) - set(gens):
        return
    options = []
    for v in missing:
        items, tail = list_parts(gens[v])
        perms = sorted({tuple(format_term(x) for x in p): p for p in itertools.permutations(items)}.values(),
                       key=lambda p: tuple(map(format_term, p)))
        options.append([(v, mklist(p, tail)) for p in perms])
    for combo in itertools.product(*options):
        s2 = dict(s)
        s2.update(dict(combo))
        yield s2
