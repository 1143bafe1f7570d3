"""CHR source syntax: tokenizer, term/rule parser, pretty printer.

The accepted language is documented in ``docs/grammar.md``.  Every rule is
normalised to generalised simpagation form ``H1 \\ H2 <=> G | C``.
"""

from __future__ import annotations

import re
from dataclasses import dataclass, field
from typing import Dict, FrozenSet, Iterable, List, Optional, Sequence, Tuple

from .terms import (NIL, Compound, Const, Int, Name, Subst, Term, Var, apply,
                    fresh_var, is_fresh_id, list_parts, mk, mklist, var_set)
from .builtins import BUILTIN_PREDICATES, UnsupportedBuiltin, check_builtin_atom, is_builtin


class ParseError(Exception):
    def __init__(self, msg: str, line: int = 0, col: int = 0, path: str = "<input>"):
        self.msg, self.line, self.col, self.path = msg, line, col, path
        super().__init__(f"{path}:{line}:{col}: {msg}")


class PreApplicationError(Exception):
    pass


# -- tokens ------------------------------------------------------------------

@dataclass
class Token:
    kind: str  # var, atom, qatom, int, punct, sym, end, eof
    text: str
    line: int
    col: int
    start: int = 0
    stop: int = 0


_SYMBOL_CHARS = set("+-*/\\^<>=~:.?@#&$")
_PUNCT = set("()[],|{}")


def tokenize(text: str, path: str = "<input>") -> List[Token]:
    toks = []
    i, line, col = 0, 1, 1
    n = len(text)

    def adv(k):
        nonlocal i, line, col
        for _ in range(k):
            if text[i] == "\n":
                line += 1
                col = 1
            else:
                col += 1
            i += 1

    while i < n:
        c = text[i]
        if c.isspace():
            adv(1)
        elif c == "%":
            while i < n and text[i] != "\n":
                adv(1)
        elif text.startswith("/*", i):
            j = text.find("*/", i + 2)
            if j < 0:
                raise ParseError("unterminated comment", line, col, path)
            adv(j + 2 - i)
        elif c.isdigit():
            m = re.match(r"\d+", text[i:])
            toks.append(Token("int", m.group(), line, col, i, i + len(m.group())))
            adv(len(m.group()))
        elif c.isalpha() or c == "_":
            m = re.match(r"[A-Za-z_0-9]+", text[i:])
            word = m.group()
            kind = "var" if (word[0].isupper() or word[0] == "_") else "atom"
            toks.append(Token(kind, word, line, col, i, i + len(word)))
            adv(len(word))
        elif c == "'":
            j = i + 1
            buf = []
            while j < n and text[j] != "'":
                if text[j] == "\\" and j + 1 < n:
                    j += 1
                buf.append(text[j])
                j += 1
            if j >= n:
                raise ParseError("unterminated quoted atom", line, col, path)
            toks.append(Token("qatom", "".join(buf), line, col, i, j + 1))
            adv(j + 1 - i)
        elif c == "." and (i + 1 >= n or text[i + 1].isspace() or text[i + 1] == "%"):
            toks.append(Token("end", ".", line, col, i, i + 1))
            adv(1)
        elif c in _PUNCT:
            toks.append(Token("punct", c, line, col, i, i + 1))
            adv(1)
        elif c in _SYMBOL_CHARS:
            j = i
            while j < n and text[j] in _SYMBOL_CHARS:
                # a trailing '.' followed by layout ends the clause
                if text[j] == "." and (j + 1 >= n or text[j + 1].isspace()):
                    break
                j += 1
            toks.append(Token("sym", text[i:j], line, col, i, j))
            adv(j - i)
        else:
            raise ParseError(f"unexpected character {c!r}", line, col, path)
    toks.append(Token("eof", "", line, col, n, n))
    return toks


# -- term parser ---------------------------------------------------------------

INFIX = {
    "=": (700, "xfx"), "==": (700, "xfx"), "\\=": (700, "xfx"),
    "<": (700, "xfx"), "=<": (700, "xfx"), ">": (700, "xfx"), ">=": (700, "xfx"),
    "+": (500, "yfx"), "-": (500, "yfx"),
    "*": (400, "yfx"), "/": (400, "yfx"),
}
PREFIX_MINUS = 200


class TermParser:
    def __init__(self, toks: List[Token], path: str = "<input>", varmap: Optional[Dict[str, Var]] = None):
        self.toks = toks
        self.pos = 0
        self.path = path
        self.varmap: Dict[str, Var] = {} if varmap is None else varmap

    @property
    def tok(self) -> Token:
        return self.toks[self.pos]

    def error(self, msg: str, tok: Optional[Token] = None):
        tok = tok or self.tok
        raise ParseError(msg, tok.line, tok.col, self.path)

    def next(self) -> Token:
        t = self.toks[self.pos]
        self.pos += 1
        return t

    def at(self, kind: str, text: Optional[str] = None) -> bool:
        t = self.tok
        return t.kind == kind and (text is None or t.text == text)

    def expect(self, kind: str, text: Optional[str] = None) -> Token:
        if not self.at(kind, text):
            want = text or kind
            got = self.tok.text or self.tok.kind
            self.error(f"expected {want!r}, found {got!r}")
        return self.next()

    def variable(self, name: str, tok: Token) -> Var:
        if name == "_":
            return fresh_var("A")
        if is_fresh_id(name):
            self.error(f"variable name {name} is reserved", tok)
        v = self.varmap.get(name)
        if v is None:
            v = self.varmap[name] = Var(name)
        return v

    def parse(self, max_prec: int = 1200) -> Term:
        left, left_prec = self.primary(max_prec)
        while True:
            t = self.tok
            if t.kind != "sym" or t.text not in INFIX:
                break
            prec, kind = INFIX[t.text]
            if prec > max_prec:
                break
            left_max = prec - 1 if kind == "xfx" else prec
            if left_prec > left_max:
                break
            self.next()
            right = self.parse(prec - 1)
            left = Compound(t.text, (left, right))
            left_prec = prec
        return left

    def primary(self, max_prec: int) -> Tuple[Term, int]:
        t = self.next()
        if t.kind == "int":
            return Int(int(t.text)), 0
        if t.kind == "var":
            return self.variable(t.text, t), 0
        if t.kind == "sym" and t.text == "-":
            if self.at("int"):
                return Int(-int(self.next().text)), 0
            arg = self.parse(PREFIX_MINUS)
            return Compound("-", (arg,)), PREFIX_MINUS
        if t.kind in ("atom", "qatom", "sym"):
            name = t.text
            if self.at("punct", "(") and self.tok.start == t.stop:
                self.next()
                args = self.arglist(")")
                return Compound(name, tuple(args)), 0
            if t.kind == "sym":
                self.error(f"unexpected {name!r}", t)
            return Const(name), 0
        if t.kind == "punct" and t.text == "(":
            inner = self.parse(1200)
            self.expect("punct", ")")
            return inner, 0
        if t.kind == "punct" and t.text == "[":
            if self.at("punct", "]"):
                self.next()
                return NIL, 0
            items = [self.parse(999)]
            while self.at("punct", ","):
                self.next()
                items.append(self.parse(999))
            tail = NIL
            if self.at("punct", "|"):
                self.next()
                tail = self.parse(999)
            self.expect("punct", "]")
            return mklist(items, tail), 0
        self.error(f"unexpected {t.text or t.kind!r}", t)

    def arglist(self, close: str) -> List[Term]:
        args = [self.parse(999)]
        while self.at("punct", ","):
            self.next()
            args.append(self.parse(999))
        self.expect("punct", close)
        return args

    def conjunction(self) -> List[Term]:
        items = [self.parse(999)]
        while self.at("punct", ","):
            self.next()
            items.append(self.parse(999))
        return items


def parse_term(text: str, varmap: Optional[Dict[str, Var]] = None) -> Term:
    p = TermParser(tokenize(text), varmap=varmap)
    t = p.parse(1200)
    if p.at("end"):
        p.next()
    p.expect("eof")
    return t


def parse_conjunction(text: str, varmap: Optional[Dict[str, Var]] = None) -> List[Term]:
    """Parse ``a, b, c`` (optionally terminated by ``.``); ``true`` alone is empty."""
    p = TermParser(tokenize(text), varmap=varmap)
    if p.at("eof"):
        return []
    items = p.conjunction()
    if p.at("end"):
        p.next()
    p.expect("eof")
    return [t for t in items if t != Const("true")]


# -- rules and programs ----------------------------------------------------------

@dataclass(frozen=True)
class Rule:
    name: Optional[str]
    kept: Tuple[Term, ...]
    removed: Tuple[Term, ...]
    guard: Tuple[Term, ...] = ()
    body: Tuple[Term, ...] = ()

    def __post_init__(self):
        if not self.kept and not self.removed:
            raise ValueError("rule head is empty")

    @property
    def head(self) -> Tuple[Term, ...]:
        return self.kept + self.removed

    def head_vars(self) -> set:
        return var_set(*self.head)

    def local_vars(self) -> set:
        return var_set(*self.guard, *self.body) - self.head_vars()

    def all_terms(self) -> Tuple[Term, ...]:
        return self.kept + self.removed + self.guard + self.body

    def substitute(self, s: Subst) -> "Rule":
        f = lambda ts: tuple(apply(t, s) for t in ts)
        return Rule(self.name, f(self.kept), f(self.removed), f(self.guard), f(self.body))

    def renamed(self) -> "Rule":
        from .terms import renaming_for
        return self.substitute(renaming_for(self.all_terms()))

    def kind(self) -> str:
        if not self.kept:
            return "simplification"
        if not self.removed:
            return "propagation"
        return "simpagation"

    def __str__(self) -> str:
        return format_rule(self)


@dataclass(frozen=True)
class Program:
    rules: Tuple[Rule, ...]
    user_predicates: FrozenSet[Tuple[str, int]] = frozenset()
    builtin_predicates: FrozenSet[Tuple[str, int]] = frozenset()
    path: str = "<input>"

    def rule_label(self, index: int) -> str:
        r = self.rules[index]
        return r.name or f"rule{index + 1}"

    def rule_index(self, name: str) -> int:
        for i in range(len(self.rules)):
            if self.rule_label(i) == name:
                return i
        raise KeyError(name)

    def __str__(self) -> str:
        return "\n".join(format_rule(r) for r in self.rules) + ("\n" if self.rules else "")


def predicate_of(t: Term) -> Tuple[str, int]:
    if isinstance(t, Compound):
        return (t.functor, t.arity)
    if isinstance(t, Const):
        return (t.name, 0)
    raise ValueError(f"not a constraint atom: {t}")


@dataclass(frozen=True)
class PreApplication:
    rule_index: int
    instance: Rule
    local_vars: FrozenSet[str]


def make_pre_application(rule: Rule, sigma: Subst, avoid: Iterable[str] = (), rule_index: int = 0) -> PreApplication:
    """Instantiate a fresh variant of ``rule`` with ``sigma`` on its head variables.

    ``sigma`` is keyed by the rule's own variable ids.  Variables it leaves
    unbound, and all local variables, are renamed to fresh ones.
    """
    del avoid  # fresh names never clash with anything already in use
    head_vars = rule.head_vars()
    local = rule.local_vars()
    stray = set(sigma) - head_vars
    if stray:
        raise PreApplicationError(f"substitution binds non-head variables {sorted(stray)}")
    captured = var_set(*sigma.values()) & local
    if captured:
        raise PreApplicationError(f"substitution captures local variables {sorted(captured)}")
    full = dict(sigma)
    for v in sorted(var_set(*rule.all_terms())):
        if v not in full:
            full[v] = fresh_var()
    inst = rule.substitute(full)
    return PreApplication(rule_index, inst, frozenset(v for x in local for v in var_set(full[x])))


def _check_atom_kinds(rule: Rule, tok: Token, path: str, declared: set):
    for h in rule.head:
        if not isinstance(h, (Compound, Const)):
            raise ParseError(f"head element {h} is not a constraint", tok.line, tok.col, path)
        if is_builtin(h) or predicate_of(h) in declared:
            raise ParseError(f"built-in {h} in rule head", tok.line, tok.col, path)
    for g in rule.guard:
        if not is_builtin(g):
            raise ParseError(f"guard contains non-built-in {g}", tok.line, tok.col, path)
    for c in rule.guard + rule.body:
        if not isinstance(c, (Compound, Const)):
            raise ParseError(f"{c} is not a constraint", tok.line, tok.col, path)
        if is_builtin(c):
            try:
                check_builtin_atom(c)
            except UnsupportedBuiltin as e:
                raise ParseError(str(e), tok.line, tok.col, path) from None


def parse_program(text: str, path: str = "<input>") -> Program:
    toks = tokenize(text, path)
    pos = 0
    rules: List[Rule] = []
    declared = set()
    while toks[pos].kind != "eof":
        start = toks[pos]
        p = TermParser(toks, path)
        p.pos = pos
        if p.at("sym", ":-"):
            p.next()
            word = p.expect("atom")
            if word.text != "builtin":
                p.error(f"unknown directive {word.text!r}", word)
            for spec in p.conjunction():
                if not (isinstance(spec, Compound) and spec.functor == "/" and isinstance(spec.args[1], Int)
                        and isinstance(spec.args[0], Const)):
                    p.error("expected name/arity in builtin declaration", word)
                ind = (spec.args[0].name, spec.args[1].value)
                if ind not in BUILTIN_PREDICATES:
                    p.error(f"unsupported built-in {ind[0]}/{ind[1]}", word)
                declared.add(ind)
            p.expect("end")
            pos = p.pos
            continue
        name = None
        if p.tok.kind in ("atom", "qatom", "var") and p.toks[p.pos + 1].kind == "sym" and p.toks[p.pos + 1].text == "@":
            name = p.next().text
            p.next()
        if p.at("sym", "<=>") or p.at("sym", "==>") or p.at("sym", "\\"):
            p.error("empty rule head")
        first = p.conjunction()
        kept_part: List[Term] = []
        removed_part: List[Term] = first
        simpagation = False
        if p.at("sym", "\\"):
            p.next()
            kept_part = first
            removed_part = p.conjunction()
            simpagation = True
        if p.at("sym", "<=>"):
            p.next()
            arrow = "<=>"
        elif p.at("sym", "==>"):
            if simpagation:
                p.error("propagation rules cannot use '\\'")
            p.next()
            arrow = "==>"
        else:
            p.error("expected '<=>' or '==>'")
        if p.at("end"):
            p.error("empty rule body (write 'true')")
        part = p.conjunction()
        guard: List[Term] = []
        if p.at("punct", "|"):
            p.next()
            guard = part
            if p.at("end"):
                p.error("empty rule body (write 'true')")
            part = p.conjunction()
        p.expect("end")
        if arrow == "==>":
            kept_part, removed_part = first, []
        true = Const("true")
        rule = Rule(name,
                    tuple(kept_part),
                    tuple(removed_part),
                    tuple(g for g in guard if g != true),
                    tuple(b for b in part if b != true))
        _check_atom_kinds(rule, start, path, declared)
        rules.append(rule)
        pos = p.pos

    user = set()
    builtin = set(declared)
    for r in rules:
        for t in r.head:
            user.add(predicate_of(t))
        for t in r.guard + r.body:
            (builtin if is_builtin(t) else user).add(predicate_of(t))
    return Program(tuple(rules), frozenset(user), frozenset(builtin), path)


def parse_program_file(path) -> Program:
    with open(path, encoding="utf-8") as fh:
        return parse_program(fh.read(), str(path))


# -- printing ------------------------------------------------------------------

def format_term(t: Term, prec: int = 999) -> str:
    if isinstance(t, Var):
        return t.id
    if isinstance(t, Int):
        return str(t.value) if t.value >= 0 or prec >= 200 else f"({t.value})"
    if isinstance(t, (Const, Name)):
        return str(t)
    if t.functor == "." and t.arity == 2:
        items, tail = list_parts(t)
        inner = ",".join(format_term(i, 999) for i in items)
        if tail != NIL:
            inner += "|" + format_term(tail, 999)
        return "[" + inner + "]"
    if t.arity == 2 and t.functor in INFIX:
        op_prec, kind = INFIX[t.functor]
        lp = op_prec - 1 if kind == "xfx" else op_prec
        s = f"{format_term(t.args[0], lp)}{_op_space(t.functor)}{format_term(t.args[1], op_prec - 1)}"
        return f"({s})" if op_prec > prec else s
    if t.arity == 1 and t.functor == "-":
        s = "-" + format_term(t.args[0], PREFIX_MINUS)
        return f"({s})" if PREFIX_MINUS > prec else s
    return str(Const(t.functor)) + "(" + ",".join(format_term(a, 999) for a in t.args) + ")"


def _op_space(op: str) -> str:
    return op if op in ("*", "/") else f" {op} "


def format_conj(ts: Sequence[Term]) -> str:
    return ", ".join(format_term(t) for t in ts) if ts else "true"


def format_rule(r: Rule) -> str:
    prefix = f"{r.name} @ " if r.name else ""
    if not r.kept:
        head = f"{format_conj(r.removed)} <=>"
    elif not r.removed:
        head = f"{format_conj(r.kept)} ==>"
    else:
        head = f"{format_conj(r.kept)} \\ {format_conj(r.removed)} <=>"
    guard = f" {format_conj(r.guard)} |" if r.guard else ""
    return f"{prefix}{head}{guard} {format_conj(r.body)}."
