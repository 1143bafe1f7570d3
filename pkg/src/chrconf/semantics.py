"""Object-level states, the logic-based transition relation, and the
ground-enumeration oracle.

States are variant classes of ``<S, B>`` pairs.  :func:`canonicalize`
maps a representation to a canonical value so that variants compare
equal.  Variables listed as *frozen* keep their identity; this is how the
variables shared by the three states of a corner are held fixed.

Equal canonical forms always mean variant states.  The converse holds
only for built-in stores inside the supported fragment.
"""

from __future__ import annotations

import functools
import itertools
import json
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Dict, FrozenSet, Iterable, Iterator, List, Optional, Sequence, Set, Tuple

from .builtins import BuiltinStore, Entailment, is_builtin
from .syntax import Program, format_conj, format_term, parse_conjunction
from .terms import Compound, Term, Var, apply, match, rename, skeleton, var_set

MAX_TIE_ORDERINGS = 720


@dataclass(frozen=True)
class StateRepr:
    store: Tuple[Term, ...]
    builtins: BuiltinStore = field(default_factory=BuiltinStore.empty, compare=False)
    failed: bool = False

    @classmethod
    def parse(cls, text: str) -> "StateRepr":
        """``"item(a), X = b | X > 0"``: constraints, then an optional built-in store."""
        varmap = {}
        if "|" in text and not _bar_in_list(text):
            store_txt, b_txt = text.split("|", 1)
        else:
            store_txt, b_txt = text, ""
        store = parse_conjunction(store_txt, varmap)
        b = BuiltinStore.of(parse_conjunction(b_txt, varmap)) if b_txt.strip() else BuiltinStore.empty()
        return cls(tuple(store), b, b.failed)


def _bar_in_list(text: str) -> bool:
    depth = 0
    for c in text:
        if c == "[":
            depth += 1
        elif c == "]":
            depth -= 1
        elif c == "|" and depth == 0:
            return False
    return True


@dataclass(frozen=True)
class CanonState:
    atoms: Tuple[Term, ...]
    constraints: Tuple[Term, ...] = ()
    failed: bool = False

    def __str__(self) -> str:
        if self.failed:
            return "failure"
        return f"<{{{', '.join(format_term(a) for a in self.atoms)}}}, {format_conj(self.constraints)}>"

    def variables(self) -> Set[str]:
        return var_set(*self.atoms, *self.constraints)

    def user_atoms(self) -> List[Tuple[int, Term]]:
        return [(i, a) for i, a in enumerate(self.atoms) if not is_builtin(a)]


FAILURE = CanonState((), (), True)


@functools.lru_cache(maxsize=65536)
def builtin_store_of(state: CanonState) -> BuiltinStore:
    return BuiltinStore.of(state.constraints)


def _render(t: Term, names: Dict[str, str]) -> str:
    return format_term(apply(t, {k: Var(v) for k, v in names.items()}))


def canonicalize(s: StateRepr, frozen: FrozenSet[str] = frozenset()) -> CanonState:
    b = s.builtins
    if s.failed or b.failed:
        return FAILURE
    atoms = [b.apply(a) for a in s.store]
    keep = var_set(*atoms) | set(frozen)
    b_atoms = [Compound("=", (Var(v), t)) for v, t in sorted(b.subst.items()) if v in frozen]
    b_atoms += b.comparison_atoms(keep & b.int_vars)
    return _canonical_naming(atoms, b_atoms, frozen)


def _canonical_naming(atoms: List[Term], b_atoms: List[Term], frozen: FrozenSet[str]) -> CanonState:
    def skel(t: Term) -> str:
        return format_term(skeleton(t) if not frozen else _frozen_skeleton(t, frozen))

    keyed = sorted(atoms, key=skel)
    groups = [list(g) for _, g in itertools.groupby(keyed, key=skel)]
    free_vars = [v for v in var_set(*atoms, *b_atoms) if v not in frozen]
    if not free_vars:
        return CanonState(tuple(sorted(atoms, key=format_term)), tuple(sorted(set(b_atoms), key=format_term)))

    def orderings():
        multi = [g for g in groups if len(g) > 1 and any(v not in frozen for v in var_set(*g))]
        total = 1
        for g in multi:
            total *= _factorial(len(g))
        if total > MAX_TIE_ORDERINGS:
            yield keyed
            return
        perms = [itertools.permutations(g) if g in multi else [tuple(g)] for g in groups]
        for combo in itertools.product(*perms):
            yield [a for grp in combo for a in grp]

    best = None
    for order in orderings():
        names: Dict[str, str] = {}
        for t in order:
            for v in _vars_in_order(t):
                if v not in frozen and v not in names:
                    names[v] = f"_C{len(names)}"
        for t in b_atoms:
            for v in _vars_in_order(t):
                if v not in frozen and v not in names:
                    names[v] = f"_C{len(names)}"
        ren = {k: Var(v) for k, v in names.items()}
        a2 = tuple(sorted((rename(t, ren) for t in atoms), key=format_term))
        b2 = tuple(sorted({rename(t, ren) for t in b_atoms}, key=format_term))
        key = (tuple(map(format_term, a2)), tuple(map(format_term, b2)))
        if best is None or key < best[0]:
            best = (key, a2, b2)
    return CanonState(best[1], best[2])


def _vars_in_order(t: Term) -> Iterator[str]:
    from .terms import variables
    return variables(t)


def _frozen_skeleton(t: Term, frozen: FrozenSet[str]) -> Term:
    if isinstance(t, Var):
        return t if t.id in frozen else Var("_")
    if isinstance(t, Compound):
        return Compound(t.functor, tuple(_frozen_skeleton(a, frozen) for a in t.args))
    return t


@functools.lru_cache(maxsize=None)
def _factorial(n: int) -> int:
    return 1 if n <= 1 else n * _factorial(n - 1)


def state_repr(c: CanonState) -> StateRepr:
    if c.failed:
        return StateRepr((), BuiltinStore.empty(), True)
    return StateRepr(c.atoms, builtin_store_of(c))


def canon(text: str) -> CanonState:
    return canonicalize(StateRepr.parse(text))


# -- transitions -----------------------------------------------------------------

@dataclass(frozen=True)
class RuleApp:
    rule_index: int
    positions: Tuple[int, ...]  # store positions matched by kept + removed heads

    def text(self, prog: Optional[Program] = None) -> str:
        return prog.rule_label(self.rule_index) if prog else f"rule{self.rule_index + 1}"


@dataclass(frozen=True)
class BuiltinStep:
    atom: Term

    def text(self, prog: Optional[Program] = None) -> str:
        return format_term(self.atom)


Label = object


@dataclass(frozen=True)
class Transition:
    frm: CanonState
    to: CanonState
    label: Label


def head_matchings(heads: Sequence[Term], candidates: Sequence[Tuple[int, Term]], subst=None) -> Iterator[Tuple[dict, Tuple[int, ...]]]:
    """All injective matchings of ``heads`` onto store atoms ``(position, atom)``."""
    def go(i, s, used):
        if i == len(heads):
            yield s, tuple(used)
            return
        for pos, atom in candidates:
            if pos in used:
                continue
            s2 = match(heads[i], atom, s)
            if s2 is not None:
                yield from go(i + 1, s2, used + [pos])
    yield from go(0, dict(subst or {}), [])


def rule_successors(state: CanonState, prog: Program, frozen: FrozenSet[str] = frozenset()) -> List[Transition]:
    if state.failed:
        return []
    b = builtin_store_of(state)
    users = state.user_atoms()
    out = []
    seen = set()
    for ri, rule in enumerate(prog.rules):
        r = rule.renamed()
        heads = r.kept + r.removed
        locals_ = r.local_vars()
        for sigma, positions in head_matchings(heads, users):
            guard = [apply(g, sigma) for g in r.guard]
            if b.entails(locals_, guard) is not Entailment.YES:
                continue
            removed = set(positions[len(r.kept):])
            rest = [a for i, a in enumerate(state.atoms) if i not in removed]
            body = [apply(c, sigma) for c in r.body]
            new = canonicalize(StateRepr(tuple(rest + body), b.add_all(guard)), frozen)
            key = (new, ri)
            if key in seen:
                continue
            seen.add(key)
            out.append(Transition(state, new, RuleApp(ri, positions)))
    return out


def builtin_successors(state: CanonState, frozen: FrozenSet[str] = frozenset()) -> List[Transition]:
    if state.failed:
        return []
    b = builtin_store_of(state)
    out = []
    seen = set()
    for i, a in enumerate(state.atoms):
        if not is_builtin(a) or a in seen:
            continue
        seen.add(a)
        rest = state.atoms[:i] + state.atoms[i + 1:]
        out.append(Transition(state, canonicalize(StateRepr(rest, b.add(a)), frozen), BuiltinStep(a)))
    return out


def successors(state: CanonState, prog: Program, frozen: FrozenSet[str] = frozenset()) -> List[Transition]:
    return rule_successors(state, prog, frozen) + builtin_successors(state, frozen)


# -- reachability --------------------------------------------------------------------

class LimitExceeded(Exception):
    pass


@dataclass
class Graph:
    nodes: Dict[CanonState, int]  # state -> BFS depth
    edges: Dict[CanonState, List[Transition]]
    roots: List[CanonState]
    truncated: bool = False

    def succ(self, s: CanonState) -> List[CanonState]:
        seen = []
        for t in self.edges.get(s, []):
            if t.to not in seen:
                seen.append(t.to)
        return seen

    def finals(self) -> List[CanonState]:
        return [s for s in self.nodes if not self.edges.get(s)]

    def reach(self, s: CanonState) -> Set[CanonState]:
        cache = self.__dict__.setdefault("_reach", {})
        if s in cache:
            return cache[s]
        out = {s}
        todo = [s]
        while todo:
            x = todo.pop()
            for y in self.succ(x):
                if y not in out:
                    out.add(y)
                    todo.append(y)
        cache[s] = out
        return out

    def to_json(self, prog: Optional[Program] = None) -> dict:
        ids = {s: i for i, s in enumerate(self.nodes)}
        return {
            "nodes": [{"id": ids[s], "state": str(s), "depth": d} for s, d in self.nodes.items()],
            "edges": [{"from": ids[t.frm], "to": ids[t.to], "label": t.label.text(prog)}
                      for ts in self.edges.values() for t in ts if t.to in ids],
            "truncated": self.truncated,
        }

    def to_dot(self, prog: Optional[Program] = None) -> str:
        ids = {s: i for i, s in enumerate(self.nodes)}
        lines = ["digraph transitions {", "  node [shape=box, fontname=monospace];"]
        for s, i in ids.items():
            lines.append(f"  n{i} [label={json.dumps(str(s))}];")
        for ts in self.edges.values():
            for t in ts:
                if t.to in ids:
                    lines.append(f"  n{ids[t.frm]} -> n{ids[t.to]} [label={json.dumps(t.label.text(prog))}];")
        lines.append("}")
        return "\n".join(lines) + "\n"


def enumerate_reachable(init, prog: Program, max_states: int = 10_000, max_depth: int = 200,
                        frozen: FrozenSet[str] = frozenset(),
                        expand: Optional[Callable[[CanonState], Iterable[CanonState]]] = None) -> Graph:
    """Breadth-first exploration from one or several initial states.

    ``expand`` adds extra states (e.g. equivalents) to the universe; they
    are explored like roots.
    """
    roots = [init] if isinstance(init, CanonState) else list(init)
    nodes: Dict[CanonState, int] = {}
    edges: Dict[CanonState, List[Transition]] = {}
    queue = deque()
    truncated = False

    def push(s, d):
        nonlocal truncated
        if s in nodes:
            return
        if len(nodes) >= max_states:
            truncated = True
            return
        nodes[s] = d
        queue.append(s)
        if expand is not None:
            for e in expand(s):
                push(e, d)

    for r in roots:
        push(r, 0)
    while queue:
        s = queue.popleft()
        d = nodes[s]
        if d >= max_depth:
            if successors(s, prog, frozen):
                truncated = True
            continue
        ts = successors(s, prog, frozen)
        edges[s] = ts
        for t in ts:
            push(t.to, d + 1)
    return Graph(nodes, edges, roots, truncated)


# -- oracle -------------------------------------------------------------------------------

class StateEquivalence:
    """Object-level state equivalence; the default is identity."""

    def __call__(self, a: CanonState, b: CanonState) -> bool:
        return a == b

    def equivalents(self, s: CanonState) -> Iterable[CanonState]:
        return ()

    def key(self, s: CanonState):
        """Class representative when cheaply available, else None."""
        return s


IDENTITY = StateEquivalence()


def joinable_in(graph: Graph, s1: CanonState, s2: CanonState, equiv: StateEquivalence = IDENTITY) -> bool:
    r1, r2 = graph.reach(s1), graph.reach(s2)
    if r1 & r2:
        return True
    if equiv is IDENTITY:
        return False
    k1 = {equiv.key(a) for a in r1}
    if None not in k1:
        k2 = {equiv.key(b) for b in r2}
        if None not in k2:
            return bool(k1 & k2)
    return any(equiv(a, b) for a in r1 for b in r2)


@dataclass
class ObjectCorner:
    kind: str  # "alpha" or "beta"
    ancestor: CanonState
    left: CanonState
    right: CanonState

    def __str__(self) -> str:
        rel = "<-" if self.kind == "alpha" else "~"
        return f"{self.left} {rel} {self.ancestor} -> {self.right}"


@dataclass
class OracleResult:
    verdict: str  # "locally-confluent", "not-locally-confluent", "inconclusive"
    witness: Optional[ObjectCorner]
    corners_checked: int
    graph: Graph
    non_joinable: List[ObjectCorner] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return self.verdict == "locally-confluent"


def object_corners(graph: Graph, equiv: StateEquivalence = IDENTITY, with_beta: bool = False) -> Iterator[ObjectCorner]:
    for s0 in graph.nodes:
        succ = graph.succ(s0)
        for i, s1 in enumerate(succ):
            for s2 in succ[i + 1:]:
                yield ObjectCorner("alpha", s0, s1, s2)
    if with_beta:
        classes = _classes(graph, equiv)
        for s0 in graph.nodes:
            succ = graph.succ(s0)
            if not succ:
                continue
            for s1 in classes(s0):
                if s1 == s0:
                    continue
                for s2 in succ:
                    yield ObjectCorner("beta", s0, s1, s2)


def _classes(graph: Graph, equiv: StateEquivalence):
    keyed = {}
    nodes = list(graph.nodes)
    if all(equiv.key(s) is not None for s in nodes):
        for s in nodes:
            keyed.setdefault(equiv.key(s), []).append(s)
        return lambda s: keyed[equiv.key(s)]
    return lambda s: [t for t in nodes if equiv(s, t)]


def oracle_local_confluence(inits: Iterable[CanonState], prog: Program, equiv: StateEquivalence = IDENTITY,
                            max_states: int = 10_000, max_depth: int = 200, all_witnesses: bool = False,
                            frozen: FrozenSet[str] = frozenset()) -> OracleResult:
    inits = list(inits)
    expand = equiv.equivalents if equiv is not IDENTITY else None
    graph = enumerate_reachable(inits, prog, max_states, max_depth, frozen, expand)
    checked = 0
    bad = []
    for c in object_corners(graph, equiv, with_beta=equiv is not IDENTITY):
        checked += 1
        if not joinable_in(graph, c.left, c.right, equiv):
            bad.append(c)
            if not all_witnesses:
                break
    if graph.truncated:
        verdict = "inconclusive"
    else:
        verdict = "not-locally-confluent" if bad else "locally-confluent"
    return OracleResult(verdict, bad[0] if bad else None, checked, graph, bad)


def oracle_global_confluence(inits: Iterable[CanonState], prog: Program, equiv: StateEquivalence = IDENTITY,
                             max_states: int = 10_000, max_depth: int = 200) -> OracleResult:
    """Exhaustive check of ``s1 *<- s0 (~ s0') ->* s2`` joinability."""
    inits = list(inits)
    expand = equiv.equivalents if equiv is not IDENTITY else None
    graph = enumerate_reachable(inits, prog, max_states, max_depth, expand=expand)
    classes = _classes(graph, equiv) if equiv is not IDENTITY else (lambda s: [s])
    checked = 0
    memo: Dict[Tuple[CanonState, CanonState], bool] = {}
    for s0 in graph.nodes:
        for s0b in classes(s0):
            for s1 in graph.reach(s0):
                for s2 in graph.reach(s0b):
                    key = (s1, s2)
                    if key not in memo:
                        memo[key] = joinable_in(graph, s1, s2, equiv)
                    checked += 1
                    if not memo[key]:
                        kind = "alpha" if s0b == s0 else "beta"
                        c = ObjectCorner(kind, s0, s1, s2)
                        verdict = "inconclusive" if graph.truncated else "not-locally-confluent"
                        return OracleResult(verdict, c, checked, graph, [c])
    verdict = "inconclusive" if graph.truncated else "locally-confluent"
    return OracleResult(verdict, None, checked, graph)
