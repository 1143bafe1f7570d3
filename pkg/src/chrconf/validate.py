"""Cross-validation of checker verdicts against the brute-force oracle, and
random ground systems for Newman/Huet probes."""

from __future__ import annotations

import itertools
import random
from dataclasses import dataclass, field
from typing import Dict, List, Optional, Sequence, Tuple

from .builtins import BuiltinStore, is_builtin
from .confluence import (CANNOT_PROVE, NOT_CONFLUENT, PreCorner, Verdict, covers, critical_alpha_corners_classical,
                         join_objects)
from .meta import Sampler, drop_state, multiset
from .semantics import (CanonState, ObjectCorner, StateEquivalence, StateRepr, IDENTITY, canonicalize,
                        oracle_global_confluence, oracle_local_confluence)
from .specs import InvariantSpec, Spec, SpecEquivalence, instantiate
from .syntax import Program, Rule
from .terms import Compound, Const, Int, Term, mklist

ATOMS = (Const("a"), Const("b"), Const("c"))


# -- random initial states ------------------------------------------------------------------------

def vocabulary(prog: Program) -> Dict[Tuple[str, int], Tuple[bool, ...]]:
    """User predicates of ``prog`` with, per argument, whether it holds lists."""
    out: Dict[Tuple[str, int], List[bool]] = {}
    for r in prog.rules:
        for a in r.kept + r.removed + r.body:
            if is_builtin(a):
                continue
            args = a.args if isinstance(a, Compound) else ()
            name = a.functor if isinstance(a, Compound) else a.name
            flags = out.setdefault((name, len(args)), [False] * len(args))
            for i, x in enumerate(args):
                if isinstance(x, Compound) and x.functor == "." or x == Const("[]"):
                    flags[i] = True
    return {k: tuple(v) for k, v in sorted(out.items())}


def random_value(rng: random.Random, is_list: bool, lo: int = -3, hi: int = 3) -> Term:
    def atom():
        return Int(rng.randint(lo, hi)) if rng.random() < 0.5 else rng.choice(ATOMS)
    if is_list:
        return mklist(atom() for _ in range(rng.randint(0, 2)))
    return atom()


def random_ground_state(prog: Program, rng: random.Random, max_atoms: int = 6) -> CanonState:
    vocab = list(vocabulary(prog).items())
    atoms = []
    for _ in range(rng.randint(1, max_atoms)):
        (name, arity), flags = rng.choice(vocab)
        atoms.append(Compound(name, tuple(random_value(rng, f) for f in flags)) if arity else Const(name))
    return canonicalize(StateRepr(tuple(atoms), BuiltinStore()))


def sample_invariant_states(inv: InvariantSpec, n: int, rng: random.Random, tries: int = 2000) -> List[CanonState]:
    """Distinct ground states drawn from the invariant's templates."""
    sampler = Sampler(rng)
    out, seen = [], set()
    for _ in range(tries):
        t = rng.choice(inv.templates).fresh()
        ms = instantiate(t.state, {}, t.where)
        sigma = sampler.ground(list(t.where), extra_vars=ms.meta_vars(), rest_vars=ms.rest,
                               brest_vars=[ms.brest] if ms.brest else [])
        if sigma is None:
            continue
        s = drop_state(ms, sigma)
        if s not in seen and len(s.atoms) <= 6:
            seen.add(s)
            out.append(s)
            if len(out) >= n:
                break
    return out


# -- agreement ------------------------------------------------------------------------------------------

@dataclass
class Agreement:
    instances: int = 0
    skipped: int = 0
    non_joinable_instances: int = 0
    disagreements: List[str] = field(default_factory=list)

    @property
    def ok(self) -> bool:
        return not self.disagreements


def flagged_corners(prog: Program, depth: int = 8, max_states: int = 10_000) -> List[PreCorner]:
    """Classical critical corners whose wings were not shown joinable."""
    out = []
    for pc in critical_alpha_corners_classical(prog):
        if join_objects(pc.left, pc.right, prog, pc.frozen, depth, max_states).status != "joinable":
            out.append(pc)
    return out


def cross_validate(prog: Program, verdict: Verdict, inits: Sequence[CanonState], spec: Optional[Spec] = None,
                   max_states: int = 5000) -> Agreement:
    """Compare the oracle on each initial state with what ``verdict`` claims.

    A positive verdict claims every corner is joinable.  NOT_CONFLUENT
    claims that each non-joinable corner is an instance of a flagged
    critical corner and that some instance exists.
    """
    equiv: StateEquivalence = IDENTITY
    if verdict.mode == "mod-equiv":
        equiv = SpecEquivalence(spec.equiv)
    flagged = flagged_corners(prog) if verdict.verdict == NOT_CONFLUENT else []
    ag = Agreement()
    for init in inits:
        res = oracle_local_confluence([init], prog, equiv, max_states=max_states, all_witnesses=True)
        if res.verdict == "inconclusive":
            ag.skipped += 1
            continue
        ag.instances += 1
        if res.non_joinable:
            ag.non_joinable_instances += 1
        if verdict.verdict == CANNOT_PROVE:
            continue
        if verdict.verdict != NOT_CONFLUENT:
            if res.non_joinable:
                ag.disagreements.append(f"{init}: oracle found non-joinable corner {res.non_joinable[0]}")
            continue
        for c in res.non_joinable:
            if c.kind != "alpha" or not any(covers(pc, c) for pc in flagged):
                ag.disagreements.append(f"{init}: non-joinable corner {c} is not covered by a critical corner")
                break
    if verdict.verdict == NOT_CONFLUENT and ag.instances and not ag.non_joinable_instances:
        ag.disagreements.append("no sampled instance exhibits a non-joinable corner")
    return ag


# -- random ground systems ---------------------------------------------------------------------------------

class ConstantRenaming(StateEquivalence):
    """States equal up to a permutation of the constants a, b, c."""

    def _images(self, s: CanonState) -> List[CanonState]:
        out = []
        for perm in itertools.permutations(ATOMS):
            ren = dict(zip(ATOMS, perm))
            atoms = tuple(_rename_consts(a, ren) for a in s.atoms)
            out.append(canonicalize(StateRepr(atoms, BuiltinStore(), s.failed)))
        return out

    def __call__(self, x: CanonState, y: CanonState) -> bool:
        return self.key(x) == self.key(y)

    def equivalents(self, s: CanonState):
        return set(self._images(s))

    def key(self, s: CanonState):
        return min(self._images(s), key=str)


def _rename_consts(t: Term, ren) -> Term:
    if isinstance(t, Const):
        return ren.get(t, t)
    if isinstance(t, Compound):
        return Compound(t.functor, tuple(_rename_consts(a, ren) for a in t.args))
    return t


def random_ground_system(rng: random.Random, n_rules: int = 3) -> Tuple[Program, List[CanonState]]:
    """A terminating ground program: every rule removes more atoms than it adds."""
    preds = ["p", "q", "r"]

    def atom():
        return Compound(rng.choice(preds), (rng.choice(ATOMS),))

    rules = []
    for i in range(n_rules):
        n_heads = rng.randint(1, 2)
        heads = tuple(atom() for _ in range(n_heads))
        n_kept = rng.randint(0, n_heads - 1)
        body = tuple(atom() for _ in range(rng.randint(0, n_heads - n_kept - 1)))
        rules.append(Rule(f"g{i + 1}", heads[:n_kept], heads[n_kept:], (), body))
    prog = Program(tuple(rules))
    inits = [canonicalize(StateRepr(tuple(atom() for _ in range(rng.randint(1, 4))), BuiltinStore()))
             for _ in range(3)]
    return prog, inits


@dataclass
class NewmanProbe:
    system: Program
    inits: List[CanonState]
    local: str
    global_: str
    states: int

    @property
    def agrees(self) -> bool:
        return self.local == self.global_


def newman_huet_probe(prog: Program, inits: Sequence[CanonState], equiv: StateEquivalence = IDENTITY,
                      max_states: int = 5000) -> NewmanProbe:
    loc = oracle_local_confluence(inits, prog, equiv, max_states=max_states)
    glob = oracle_global_confluence(inits, prog, equiv, max_states=max_states)
    return NewmanProbe(prog, list(inits), loc.verdict, glob.verdict, len(glob.graph.nodes))
