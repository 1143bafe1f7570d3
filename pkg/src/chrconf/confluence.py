"""Critical corners, joinability, split-joinability and verdicts."""

from __future__ import annotations

import itertools
import random
import time
from collections import deque
from dataclasses import dataclass, field, replace
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from .builtins import BUILTIN_PREDICATES, BuiltinStore, is_builtin, is_comparison, negate
from .meta import (complement, ground_typed, constraint_text, INT, CONST, Context, Entails, FreshVars, Inv, Equiv, MetaState, MetaTransition, Refutes,
                   Sampler, Sat, TypeOf, VARTYPE, applicable, drop_state, evaluate, lift, m_solve,
                   meta_successors, new_meta_var, normalize, substitute_constraint, subtype, translate,
                   _has_names, NotGround)
from .semantics import (CanonState, StateRepr, canonicalize, enumerate_reachable, successors,
                        _canonical_naming, Graph, StateEquivalence, IDENTITY)
from .specs import (CaseSpec, EquivSpec, InvariantSpec, Spec, SpecEquivalence, equiv_entailed, expand_equiv,
                    expand_inv, invariant_holds)
from .syntax import Program, Rule, format_conj, format_term
from .terms import Compound, Const, Subst, Term, Var, apply, rename, unify_all, var_set, variables

CONFLUENT = "CONFLUENT"
LOCALLY_CONFLUENT = "LOCALLY_CONFLUENT"
NOT_CONFLUENT = "NOT_CONFLUENT"
CANNOT_PROVE = "CANNOT_PROVE"

MODES = ("classical", "invariant", "mod-equiv")


class ModeError(ValueError):
    pass


# -- classical critical corners ----------------------------------------------------------------

@dataclass
class PreCorner:
    """A critical alpha pre-corner built from an overlap of two rules.

    The unifier of the overlap is applied throughout, so the ancestor's
    built-in store holds just the two guards.
    """

    rules: Tuple[int, int]
    overlap: Tuple[Term, ...]
    ancestor_atoms: Tuple[Term, ...]
    left_atoms: Tuple[Term, ...]
    right_atoms: Tuple[Term, ...]
    guard_left: Tuple[Term, ...]
    guard_right: Tuple[Term, ...]
    locals_left: Tuple[str, ...]
    locals_right: Tuple[str, ...]
    ancestor: CanonState
    left: CanonState
    right: CanonState
    frozen: FrozenSet[str]

    @property
    def critical(self) -> bool:
        return not self.ancestor.failed

    def describe(self, prog: Optional[Program] = None) -> str:
        names = [prog.rule_label(i) if prog else f"rule{i + 1}" for i in self.rules]
        # name variables by first occurrence so the text does not depend on the fresh-name counter
        ren: Dict[str, Var] = {}
        for t in self.overlap:
            for v in variables(t):
                ren.setdefault(v, Var(f"X{len(ren) + 1}"))
        overlap = ", ".join(format_term(rename(t, ren)) for t in self.overlap)
        return f"{names[0]} and {names[1]} overlapping on {overlap}"

    def key(self) -> tuple:
        return _corner_key(self.ancestor, self.left, self.right)


def _tag(tag: str, s: CanonState) -> List[Term]:
    if s.failed:
        return [Const(tag + "fail")]
    return [Compound(tag, (a,)) for a in s.atoms] + [Compound(tag + "b", (b,)) for b in s.constraints]


def _corner_key(a: CanonState, l: CanonState, r: CanonState) -> tuple:
    def one(x, y):
        atoms = _tag("a", a) + _tag("l", x) + _tag("r", y)
        c = _canonical_naming(atoms, [], frozenset())
        return tuple(map(format_term, c.atoms))
    return min(one(l, r), one(r, l))


def critical_pre_corners(prog: Program) -> List[PreCorner]:
    out: List[PreCorner] = []
    keys = set()
    for i, j in itertools.product(range(len(prog.rules)), repeat=2):
        r = prog.rules[i].renamed()
        r2 = prog.rules[j].renamed()
        heads2 = r2.kept + r2.removed
        for k in range(1, len(r.removed) + 1):
            for a_idx in itertools.combinations(range(len(r.removed)), k):
                for a2_idx in itertools.permutations(range(len(heads2)), k):
                    pairs = [(r.removed[x], heads2[y]) for x, y in zip(a_idx, a2_idx)]
                    theta = unify_all(pairs)
                    if theta is None:
                        continue
                    pc = _build_pre_corner(i, j, r, r2, a_idx, a2_idx, theta)
                    if pc is None:
                        continue
                    key = pc.key()
                    if key in keys:
                        continue
                    keys.add(key)
                    out.append(pc)
    return out


def _build_pre_corner(i, j, r: Rule, r2: Rule, a_idx, a2_idx, theta) -> Optional[PreCorner]:
    heads2 = r2.kept + r2.removed
    n_kept2 = len(r2.kept)
    rest_removed = [r.removed[x] for x in range(len(r.removed)) if x not in a_idx]
    ancestor = list(r.kept) + rest_removed + list(heads2)
    left = list(r.kept) + [heads2[y] for y in range(len(heads2)) if y not in a2_idx] + list(r.body)
    right = list(r.kept) + rest_removed + list(r2.kept) + list(r2.body)
    th = lambda ts: tuple(apply(t, theta) for t in ts)
    anc_atoms, left_atoms, right_atoms = th(ancestor), th(left), th(right)
    g1, g2 = th(r.guard), th(r2.guard)
    del n_kept2
    b = BuiltinStore.of(g1 + g2)
    frozen = frozenset(var_set(*anc_atoms, *g1, *g2))
    s0 = canonicalize(StateRepr(anc_atoms, b), frozen)
    s1 = canonicalize(StateRepr(left_atoms, b), frozen)
    s2 = canonicalize(StateRepr(right_atoms, b), frozen)
    if s1 == s2:
        return None
    return PreCorner((i, j), th([r.removed[x] for x in a_idx]), anc_atoms, left_atoms, right_atoms, g1, g2,
                     tuple(sorted(r.local_vars())), tuple(sorted(r2.local_vars())), s0, s1, s2, frozen)


def critical_alpha_corners_classical(prog: Program) -> List[PreCorner]:
    return [pc for pc in critical_pre_corners(prog) if pc.critical]


# -- object-level joinability -----------------------------------------------------------------

@dataclass
class ObjectJoin:
    status: str  # "joinable", "non-joinable", "unknown"
    left_path: List[CanonState] = field(default_factory=list)
    right_path: List[CanonState] = field(default_factory=list)
    left_reach: int = 0
    right_reach: int = 0
    reason: str = ""


def _path(graph: Graph, goal: CanonState) -> List[CanonState]:
    parents = {r: None for r in graph.roots}
    todo = deque(graph.roots)
    while todo:
        s = todo.popleft()
        if s == goal:
            break
        for t in graph.succ(s):
            if t not in parents:
                parents[t] = s
                todo.append(t)
    path = [goal]
    while parents.get(path[-1]) is not None:
        path.append(parents[path[-1]])
    return path[::-1]


def join_objects(left: CanonState, right: CanonState, prog: Program, frozen: FrozenSet[str] = frozenset(),
                 depth: int = 8, max_states: int = 10_000,
                 equiv: StateEquivalence = IDENTITY) -> ObjectJoin:
    g1 = enumerate_reachable(left, prog, max_states, depth, frozen)
    g2 = enumerate_reachable(right, prog, max_states, depth, frozen)
    best = None
    for a in g1.nodes:
        for b in g2.nodes:
            if a == b or (equiv is not IDENTITY and equiv(a, b)):
                cost = g1.nodes[a] + g2.nodes[b]
                if best is None or cost < best[0]:
                    best = (cost, a, b)
    if best:
        return ObjectJoin("joinable", _path(g1, best[1]), _path(g2, best[2]), len(g1.nodes), len(g2.nodes))
    if g1.truncated or g2.truncated:
        return ObjectJoin("unknown", left_reach=len(g1.nodes), right_reach=len(g2.nodes),
                          reason="reachable sets not fully enumerated within limits")
    return ObjectJoin("non-joinable", left_reach=len(g1.nodes), right_reach=len(g2.nodes),
                      reason="finite reachable sets are disjoint")


# -- meta corners -------------------------------------------------------------------------------------

@dataclass
class MetaCorner:
    kind: str  # "alpha", "beta-rule", "beta-builtin"
    ancestor: MetaState
    left: MetaState
    right: MetaState
    where: Tuple
    provenance: str = ""

    def with_where(self, where: Tuple) -> "MetaCorner":
        extra = tuple(where[len(self.where):]) if where[:len(self.where)] == self.where else ()
        def upd(ms: MetaState) -> MetaState:
            if extra:
                return ms.with_where(ms.where + extra)
            return ms.with_where(where)
        return MetaCorner(self.kind, upd(self.ancestor), upd(self.left), upd(self.right), tuple(where),
                          self.provenance)

    def meta_vars(self) -> set:
        return self.ancestor.meta_vars() | self.left.meta_vars() | self.right.meta_vars()

    def __str__(self) -> str:
        rel = "<-" if self.kind == "alpha" else "~"
        return (f"{self.left.template_text()} {rel} {self.ancestor.template_text()} -> "
                f"{self.right.template_text()} WHERE {constraint_text(self.where)}")


@dataclass
class RejectedCorner:
    provenance: str
    reason: str


def _lift_pre_corner(pc: PreCorner, prog: Program):
    mapping: Dict[str, Var] = {v: new_meta_var("L") for v in pc.locals_left + pc.locals_right}
    lf = lambda ts: lift(tuple(ts), mapping)[0]
    anc, left, right = lf(pc.ancestor_atoms), lf(pc.left_atoms), lf(pc.right_atoms)
    g1, g2 = lf(pc.guard_left), lf(pc.guard_right)
    locals_ = tuple(mapping[v] for v in pc.locals_left + pc.locals_right)
    l1 = tuple(mapping[v] for v in pc.locals_left)
    l2 = tuple(mapping[v] for v in pc.locals_right)
    return anc, left, right, g1, g2, l1, l2, locals_


def critical_alpha_corners_meta(prog: Program, inv: InvariantSpec, sampler: Optional[Sampler] = None,
                                rejected: Optional[List[RejectedCorner]] = None) -> List[MetaCorner]:
    out = []
    for pc in critical_pre_corners(prog):
        anc, left, right, g1, g2, l1, l2, locals_ = _lift_pre_corner(pc, prog)
        s_plus, b_plus = new_meta_var("S"), new_meta_var("B")
        b0 = g1 + g2
        sig0 = MetaState(anc, (s_plus.id,), b0, b_plus.id)
        sig1 = MetaState(left, (s_plus.id,), b0, b_plus.id)
        sig2 = MetaState(right, (s_plus.id,), b0, b_plus.id)
        bb = b0 + (b_plus,)
        M = (Sat(bb), Entails(bb, l1, g1), Entails(bb, l2, g2))
        M += tuple(TypeOf(VARTYPE, l) for l in locals_)
        if locals_:
            M += (FreshVars(locals_, sig0.terms()),)
        prov = pc.describe(prog)
        found = _eliminate_inv("alpha", sig0, sig1, sig2, M, inv, prov, sampler)
        if not found and rejected is not None:
            rejected.append(RejectedCorner(prov, "invariant cannot hold for the common ancestor"))
        out.extend(found)
    return _dedup(out)


def _eliminate_inv(kind, sig0, sig1, sig2, M, inv, prov, sampler, extra=None) -> List[MetaCorner]:
    out = []
    for subst, conds in expand_inv(sig0, inv):
        where = tuple(substitute_constraint(c, subst) for c in M) + conds
        a, l, r = (x.substitute(subst) for x in (sig0, sig1, sig2))
        if extra is not None:
            out.extend(extra(a, l, r, where))
            continue
        corner = _finish(kind, a, l, r, where, prov, sampler)
        if corner is not None:
            out.append(corner)
    return out


def _trivial(c) -> bool:
    from .meta import constraint_terms
    if isinstance(c, (Inv, Equiv, TypeOf)) or var_set(*constraint_terms(c)):
        return False
    return evaluate(c, {})


def _finish(kind, a, l, r, where, prov, sampler) -> Optional[MetaCorner]:
    if m_solve(where, sampler).inconsistent:
        return None
    where = tuple(dict.fromkeys(c for c in where if not _trivial(c)))
    ctx = Context(where)
    a, l, r = (normalize(x.with_where(where), ctx) for x in (a, l, r))
    if a.failed:
        return None
    return MetaCorner(kind, a, l, r, tuple(where), prov)


def _corner_meta_key(c: MetaCorner) -> tuple:
    from .meta import Perm, constraint_terms
    order: Dict[str, Var] = {}
    states = (c.ancestor, c.left, c.right)
    for t in [t for st in states for t in st.terms()] + [t for x in c.where for t in constraint_terms(x)]:
        for v in variables(t):
            order.setdefault(v, Var(f"#{len(order)}"))
    ren = lambda x: x.substitute(order) if isinstance(x, MetaState) else substitute_constraint(x, order)
    cons = set()
    for x in c.where:
        x = ren(x)
        if isinstance(x, Perm):
            x = Perm(*sorted((x.left, x.right), key=format_term))
        cons.add(str(x))
    return (c.kind,) + tuple(ren(st).template_text() for st in states) + tuple(sorted(cons))


def _dedup(corners: List[MetaCorner]) -> List[MetaCorner]:
    seen, out = set(), []
    for c in corners:
        key = _corner_meta_key(c)
        if key not in seen:
            seen.add(key)
            out.append(c)
    return out


def critical_beta_corners(prog: Program, inv: InvariantSpec, eq: EquivSpec,
                          sampler: Optional[Sampler] = None,
                          rejected: Optional[List[RejectedCorner]] = None) -> List[MetaCorner]:
    out: List[MetaCorner] = []

    def with_equiv(kind, prov):
        def extra(a, l, r, where):
            res = []
            for subst, other, conds in expand_equiv(a, eq):
                w = tuple(substitute_constraint(c, subst) for c in where) + conds
                a2 = a.substitute(subst)
                r2 = r.substitute(subst)
                corner = _finish(kind, a2, other, r2, w, prov, sampler)
                if corner is not None:
                    res.append(corner)
            return res
        return extra

    for i, rule in enumerate(prog.rules):
        r = rule.renamed()
        mapping = {v: new_meta_var("L") for v in sorted(r.local_vars())}
        locs = tuple(mapping.values())
        lf = lambda ts: lift(tuple(ts), mapping)[0]
        heads, body, guard = lf(r.kept + r.removed), lf(r.body), lf(r.guard)
        kept = lf(r.kept)
        s_plus, b_plus = new_meta_var("S"), new_meta_var("B")
        sig0 = MetaState(heads, (s_plus.id,), (), b_plus.id)
        sig2 = MetaState(kept + body, (s_plus.id,), guard, b_plus.id)
        M = (Sat((b_plus,)), Entails((b_plus,), locs, guard)) + tuple(TypeOf(VARTYPE, l) for l in locs)
        if locs:
            M += (FreshVars(locs, sig0.terms()),)
        prov = f"{prog.rule_label(i)} beside an equivalence step"
        found = _eliminate_inv("beta-rule", sig0, sig0, sig2, M, inv, prov, sampler, with_equiv("beta-rule", prov))
        if not found and rejected is not None:
            rejected.append(RejectedCorner(prov, "no equivalence template applies to an invariant state"))
        out.extend(found)
    for name, arity in sorted(BUILTIN_PREDICATES):
        args = tuple(new_meta_var("M") for _ in range(arity))
        b = Compound(name, args) if arity else Const(name)
        s_plus, b_plus = new_meta_var("S"), new_meta_var("B")
        sig0 = MetaState((b,), (s_plus.id,), (), b_plus.id)
        sig2 = MetaState((), (s_plus.id,), (b,), b_plus.id)
        M = (Sat((b_plus,)),)
        prov = f"built-in {name}/{arity} beside an equivalence step"
        found = _eliminate_inv("beta-builtin", sig0, sig0, sig2, M, inv, prov, sampler,
                               with_equiv("beta-builtin", prov))
        if not found and rejected is not None:
            rejected.append(RejectedCorner(prov, "invariant cannot hold for the common ancestor"))
        out.extend(found)
    return _dedup(out)


# -- meta joinability ----------------------------------------------------------------------------------

@dataclass
class JoinProof:
    left_path: List[MetaTransition]
    right_path: List[MetaTransition]
    closing: str  # "identical" or the equivalence template used

    def steps(self) -> Tuple[int, int]:
        return len(self.left_path), len(self.right_path)


@dataclass
class JoinSearch:
    proof: Optional[JoinProof]
    left_states: List[MetaState]
    right_states: List[MetaState]
    transitions: List[MetaTransition]
    exhausted: bool  # both closures fully explored within the depth bound


def _explore(start: MetaState, prog: Program, depth: int, max_states: int):
    paths = {start.key(): (start, [])}
    frontier = [start]
    transitions = []
    complete = True
    for _ in range(depth):
        nxt = []
        for s in frontier:
            for t in meta_successors(s, prog):
                transitions.append(t)
                k = t.to.key()
                if k not in paths:
                    if len(paths) >= max_states:
                        complete = False
                        continue
                    paths[k] = (t.to, paths[s.key()][1] + [t])
                    nxt.append(t.to)
        frontier = nxt
        if not frontier:
            break
    else:
        if frontier and any(meta_successors(s, prog) for s in frontier):
            complete = False
    return paths, transitions, complete


def joinable(corner: MetaCorner, prog: Program, eq: Optional[EquivSpec] = None, depth: int = 8,
             max_states: int = 2000) -> JoinSearch:
    p1, t1, c1 = _explore(corner.left, prog, depth, max_states)
    p2, t2, c2 = _explore(corner.right, prog, depth, max_states)
    best = None
    for k, (s, path) in p1.items():
        if k in p2:
            cand = (len(path) + len(p2[k][1]), path, p2[k][1], "identical")
            if best is None or cand[0] < best[0]:
                best = cand
    if best is None and eq is not None:
        ctx = Context(corner.where)
        pairs = sorted(((len(a[1]) + len(b[1]), ka, kb) for ka, a in p1.items() for kb, b in p2.items()),
                       key=lambda x: x[0])
        for cost, ka, kb in pairs:
            (sa, pa), (sb, pb) = p1[ka], p2[kb]
            local_ctx = ctx if not (len(sa.where) > len(corner.where) or len(sb.where) > len(corner.where)) \
                else Context(tuple(corner.where) + sa.where[len(corner.where):] + sb.where[len(corner.where):])
            tmpl = equiv_entailed(sa, sb, eq, local_ctx)
            if tmpl is not None:
                best = (cost, pa, pb, f"equivalence {tmpl}")
                break
    proof = JoinProof(best[1], best[2], best[3]) if best else None
    return JoinSearch(proof, [s for s, _ in p1.values()], [s for s, _ in p2.values()], t1 + t2, c1 and c2)


# -- splitting -----------------------------------------------------------------------------------------------

@dataclass
class CoverProbe:
    samples: int
    passed: bool
    detail: str = ""


@dataclass
class SplitTree:
    corner: MetaCorner
    status: str  # "joinable", "inconsistent", "split", "stuck"
    proof: Optional[JoinProof] = None
    case: Optional[Tuple[object, object]] = None
    children: List["SplitTree"] = field(default_factory=list)
    reason: str = ""
    probe: Optional[CoverProbe] = None
    transitions: List[MetaTransition] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        if self.status in ("joinable", "inconsistent"):
            return True
        if self.status == "split":
            return all(c.ok for c in self.children)
        return False

    def leaves(self) -> List["SplitTree"]:
        if self.status == "split":
            return [l for c in self.children for l in c.leaves()]
        return [self]

    def nodes(self) -> List["SplitTree"]:
        return [self] + [n for c in self.children for n in c.nodes()]


def split_candidates(corner: MetaCorner, states: Iterable[MetaState], prog: Program,
                     cases: Sequence[CaseSpec] = ()) -> List[Tuple[object, object]]:
    ctx = Context(corner.where)
    out, seen = [], set()

    def add(g: Term):
        c = Entails((), (), (g,))
        if str(c) in seen:
            return
        seen.add(str(c))
        comp = complement(c)
        if ctx.entails(c) or ctx.entails(comp):
            return
        out.append((c, comp))

    for s in states:
        if s.failed:
            continue
        local = {v for v in s.meta_vars() if v.startswith("_L")}
        for rule in prog.rules:
            r = rule.renamed()
            for sigma, positions, guard, locs in applicable(s, r, ctx):
                loc_ids = {l.id for l in locs} | local
                for g in guard:
                    if ground_typed(g, ctx, loc_ids):
                        add(g)
        for b in s.atoms:
            if is_builtin(b) and ground_typed(b, ctx, local):
                add(b)
    for case in cases:
        for c, comp in _instantiate_case(case, corner, ctx):
            if str(c) not in seen and not (ctx.entails(c) or ctx.entails(comp)):
                seen.add(str(c))
                out.append((c, comp))
    return out


def _instantiate_case(case: CaseSpec, corner: MetaCorner, ctx: Context):
    from .meta import constraint_terms
    cvars = sorted(var_set(*constraint_terms(case.constraint), *constraint_terms(case.complement)))
    pool = sorted(v for v in corner.meta_vars() if ctx.type_of(v) is not None
                  and subtype(ctx.type_of(v), CONST))
    for combo in itertools.product(pool, repeat=len(cvars)):
        s = {v: Var(w) for v, w in zip(cvars, combo)}
        yield substitute_constraint(case.constraint, s), substitute_constraint(case.complement, s)


def _rest_vars(corner: MetaCorner) -> Tuple[set, set]:
    states = (corner.ancestor, corner.left, corner.right)
    return ({r for s in states for r in s.rest}, {s.brest for s in states if s.brest})


PROBE_WINDOW = 12  # probes need more distinct integers than the search sampler draws


def cover_probe(corner: MetaCorner, case, samples: int = 20, seed: int = 0) -> CoverProbe:
    """Sampled check that the two halves of a split cover the original, both ways."""
    sampler = Sampler(random.Random(seed), int_window=PROBE_WINDOW)
    c, comp = case
    vs = corner.meta_vars()
    rest, brest = _rest_vars(corner)
    kw = dict(extra_vars=vs, rest_vars=rest, brest_vars=brest)
    base = [x for x in corner.where if not isinstance(x, (Inv, Equiv))]
    counts = []
    whole = sampler.groundings(base, samples, **kw)
    counts.append(len(whole))
    for sigma in whole:
        if not (evaluate(c, sigma) or evaluate(comp, sigma)):
            return CoverProbe(sum(counts), False, f"grounding {sigma} lies in neither half")
    for half in (c, comp):
        part = sampler.groundings(base + [half], samples, **kw)
        counts.append(len(part))
        for sigma in part:
            if not all(evaluate(x, sigma) for x in base):
                return CoverProbe(sum(counts), False, f"grounding {sigma} of a half is outside the original")
    # an empty half is fine when that half is inconsistent
    short = [n for n in counts if 0 < n < samples]
    if counts[0] < samples or short:
        return CoverProbe(sum(counts), False, f"too few samples per direction: {counts}")
    return CoverProbe(sum(counts), True, f"samples per direction: {counts}")


def split_joinable(corner: MetaCorner, prog: Program, eq: Optional[EquivSpec] = None, split_depth: int = 4,
                   join_depth: int = 8, cases: Sequence[CaseSpec] = (), sampler: Optional[Sampler] = None,
                   probe_samples: int = 20, _depth: int = 0, max_tries: int = 4) -> SplitTree:
    res = m_solve(corner.where, sampler)
    if res.inconsistent:
        return SplitTree(corner, "inconsistent", reason=res.reason)
    search = joinable(corner, prog, eq, join_depth)
    if search.proof is not None:
        return SplitTree(corner, "joinable", search.proof, transitions=search.transitions)
    if _depth >= split_depth:
        return SplitTree(corner, "stuck", reason="split depth exhausted", transitions=search.transitions)
    cands = split_candidates(corner, search.left_states + search.right_states, prog, cases)
    if not cands:
        return SplitTree(corner, "stuck", reason="not joinable and no split candidate",
                         transitions=search.transitions)
    first = None
    for case in cands[:max_tries]:
        kids = []
        for half in case:
            sub = corner.with_where(tuple(corner.where) + (half,))
            kids.append(split_joinable(sub, prog, eq, split_depth, join_depth, cases, sampler, probe_samples,
                                       _depth + 1, max_tries))
        tree = SplitTree(corner, "split", case=case, children=kids,
                         probe=cover_probe(corner, case, probe_samples, _depth), transitions=search.transitions)
        if tree.ok:
            return tree
        first = first or tree
    return first


# -- verdicts -----------------------------------------------------------------------------------------------

@dataclass
class CornerReport:
    classical: Optional[PreCorner] = None
    join: Optional[ObjectJoin] = None
    meta: Optional[MetaCorner] = None
    tree: Optional[SplitTree] = None

    @property
    def ok(self) -> bool:
        if self.tree is not None:
            return self.tree.ok
        return self.join is not None and self.join.status == "joinable"


@dataclass
class Witness:
    ancestor: CanonState
    left: CanonState
    right: CanonState
    source: str

    def __str__(self) -> str:
        return f"{self.left} <- {self.ancestor} -> {self.right}"


@dataclass
class Verdict:
    verdict: str
    mode: str
    corners: List[CornerReport]
    rejected: List[RejectedCorner] = field(default_factory=list)
    witness: Optional[Witness] = None
    notes: List[str] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def exit_code(self) -> int:
        return {CONFLUENT: 0, LOCALLY_CONFLUENT: 0, NOT_CONFLUENT: 1, CANNOT_PROVE: 2}[self.verdict]

    def meta_transitions(self) -> List[Tuple[MetaTransition, Tuple]]:
        out = []
        for c in self.corners:
            if c.tree is None:
                continue
            for node in c.tree.nodes():
                for t in node.transitions:
                    out.append((t, node.corner.where))
        return out

    def splits(self) -> List[SplitTree]:
        return [n for c in self.corners if c.tree for n in c.tree.nodes() if n.status == "split"]


@dataclass
class Limits:
    join_depth: int = 8
    split_depth: int = 4
    max_states: int = 10_000
    seed: int = 0
    probe_samples: int = 20


def check(prog: Program, mode: str = "classical", spec: Optional[Spec] = None, assume_terminating: bool = False,
          limits: Optional[Limits] = None) -> Verdict:
    limits = limits or Limits()
    start = time.perf_counter()
    if mode not in MODES:
        raise ModeError(f"unknown mode {mode!r}")
    if mode != "classical" and (spec is None or spec.invariant is None):
        raise ModeError(f"mode {mode} needs a spec with an invariant")
    if mode == "mod-equiv" and spec.equiv is None:
        raise ModeError("mode mod-equiv needs a spec with an equivalence")
    positive = CONFLUENT if assume_terminating else LOCALLY_CONFLUENT
    if mode == "classical":
        reports = []
        for pc in critical_alpha_corners_classical(prog):
            j = join_objects(pc.left, pc.right, prog, pc.frozen, limits.join_depth, limits.max_states)
            reports.append(CornerReport(classical=pc, join=j))
        bad = [r for r in reports if r.join.status == "non-joinable"]
        if bad:
            pc = bad[0].classical
            v = Verdict(NOT_CONFLUENT, mode, reports, witness=Witness(pc.ancestor, pc.left, pc.right,
                                                                        "critical corner"))
        elif all(r.ok for r in reports):
            v = Verdict(positive, mode, reports)
        else:
            v = Verdict(CANNOT_PROVE, mode, reports)
    else:
        sampler = Sampler(random.Random(limits.seed))
        rejected: List[RejectedCorner] = []
        eq = spec.equiv if mode == "mod-equiv" else None
        corners = critical_alpha_corners_meta(prog, spec.invariant, sampler, rejected)
        if eq is not None:
            corners += critical_beta_corners(prog, spec.invariant, eq, sampler, rejected)
        reports = []
        for c in corners:
            tree = split_joinable(c, prog, eq, limits.split_depth, limits.join_depth, spec.cases, sampler,
                                  limits.probe_samples)
            reports.append(CornerReport(meta=c, tree=tree))
        if all(r.ok for r in reports):
            v = Verdict(positive, mode, reports, rejected)
        else:
            w = _certify(reports, prog, spec, eq, limits, sampler)
            v = Verdict(NOT_CONFLUENT if w else CANNOT_PROVE, mode, reports, rejected, witness=w)
    if not assume_terminating and v.verdict == LOCALLY_CONFLUENT:
        v.notes.append("termination not asserted: local confluence only")
    v.seconds = time.perf_counter() - start
    return v


def _certify(reports, prog, spec, eq, limits, sampler, tries: int = 20) -> Optional[Witness]:
    """Look for a ground instance of a stuck corner that is provably not joinable."""
    equiv = SpecEquivalence(eq) if eq is not None else IDENTITY
    for r in reports:
        if r.tree is None or r.tree.ok:
            continue
        for leaf in r.tree.leaves():
            if leaf.status != "stuck":
                continue
            c = leaf.corner
            vs = c.meta_vars()
            rest, brest = _rest_vars(c)
            found = []
            for sigma in sampler.groundings([x for x in c.where if not isinstance(x, (Inv, Equiv))], tries,
                                            extra_vars=vs, rest_vars=rest, brest_vars=brest):
                try:
                    found.append(tuple(drop_state(x, sigma) for x in (c.ancestor, c.left, c.right)))
                except NotGround:
                    continue
            # smallest instances first, so the reported witness is easy to read
            for a, l, rr in sorted(found, key=lambda x: (len(x[0].atoms), str(x[0]))):
                if not invariant_holds(a, spec.invariant):
                    continue
                targets = {t.to for t in successors(a, prog)}
                if c.kind == "alpha" and not (l in targets and rr in targets):
                    continue
                if c.kind != "alpha" and not (rr in targets and equiv(a, l)):
                    continue
                j = join_objects(l, rr, prog, frozenset(), limits.join_depth, limits.max_states, equiv)
                if j.status == "non-joinable":
                    return Witness(a, l, rr, f"ground instance of {c.kind} corner")
    return None


# -- sampled soundness probes -------------------------------------------------------------------------

@dataclass
class SimulationProbe:
    transitions: int
    samples: int
    failures: List[str] = field(default_factory=list)

    @property
    def passed(self) -> bool:
        return not self.failures


def probe_transition(t: MetaTransition, where: Tuple, prog: Program, samples: int = 10,
                     sampler: Optional[Sampler] = None) -> Tuple[int, List[str]]:
    """Check sampled concretizations of one meta transition at the object level."""
    sampler = sampler or Sampler(random.Random(0))
    M = tuple(where) + tuple(t.to.where[len(where):]) if t.to.where[:len(where)] == tuple(where) \
        else tuple(where) + tuple(t.to.where)
    M = tuple(x for x in M if not isinstance(x, (Inv, Equiv)))
    states = (t.frm, t.to)
    vs = set().union(*(s.meta_vars() for s in states))
    rest = {r for s in states for r in s.rest}
    brest = {s.brest for s in states if s.brest}
    done, bad = 0, []
    for sigma in sampler.groundings(M, samples, extra_vars=vs, rest_vars=rest, brest_vars=brest):
        try:
            a, b = drop_state(t.frm, sigma), drop_state(t.to, sigma)
        except NotGround as e:
            bad.append(f"grounding left a meta variable unbound: {e}")
            continue
        done += 1
        if a == b or b in {x.to for x in successors(a, prog)}:
            continue
        bad.append(f"{a} does not step to {b}")
    if done < samples:
        bad.append(f"only {done} of {samples} concretizations found for {t.frm.template_text()}")
    return done, bad


def probe_simulation(verdict: Verdict, prog: Program, samples: int = 10, seed: int = 0) -> SimulationProbe:
    sampler = Sampler(random.Random(seed), int_window=PROBE_WINDOW)
    probe = SimulationProbe(0, 0)
    seen = set()
    for t, where in verdict.meta_transitions():
        key = (t.frm.key(), t.to.key(), str(where))
        if key in seen:
            continue
        seen.add(key)
        n, bad = probe_transition(t, where, prog, samples, sampler)
        probe.transitions += 1
        probe.samples += n
        probe.failures.extend(bad)
    return probe


def covers(pc: PreCorner, oc, frozen: FrozenSet[str] = frozenset()) -> bool:
    """Whether the object corner ``oc`` is an instance of ``pc`` in some context.

    The critical ancestor's atoms are matched injectively into ``oc``'s
    ancestor; the unmatched atoms and the ancestor's built-ins are carried
    along unchanged into both wings.
    """
    from .semantics import head_matchings, builtin_store_of
    anc = oc.ancestor
    if anc.failed or pc.ancestor.failed:
        return False
    cands = list(enumerate(anc.atoms))
    base = builtin_store_of(anc)
    for sigma, positions in head_matchings(pc.ancestor.atoms, cands):
        b = base
        for g in pc.ancestor.constraints:
            b = b.add(apply(g, sigma))
        if b.failed or not base.equivalent(b):
            continue
        rest = tuple(a for i, a in enumerate(anc.atoms) if i not in positions)

        def wing(s: CanonState) -> CanonState:
            atoms = tuple(apply(a, sigma) for a in s.atoms) + rest
            return canonicalize(StateRepr(atoms, base), frozen)

        l, r = wing(pc.left), wing(pc.right)
        if {l, r} == {oc.left, oc.right}:
            return True
    return False
