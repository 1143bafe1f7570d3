import pytest

import chrconf
from chrconf.syntax import (ParseError, PreApplicationError, format_rule, make_pre_application, parse_conjunction,
                            parse_program, parse_program_file, parse_term)
from chrconf.terms import Compound, Const, Int, Var, mklist

PROG = """
% the zigzag program
r1 @ p(X) <=> q(X).
r3 @ q(X) <=> X > 0 | r(X).
keep @ a(X) \\ b(X) <=> true.
prop @ c(X) ==> d(X, Y).
"""


def test_rule_kinds_and_parts():
    prog = parse_program(PROG)
    kinds = [r.kind() for r in prog.rules]
    assert kinds == ["simplification", "simplification", "simpagation", "propagation"]
    r3 = prog.rules[1]
    assert r3.guard == (Compound(">", (Var("X"), Int(0))),)
    assert prog.rules[2].kept == (Compound("a", (Var("X"),)),)
    assert prog.rules[2].body == ()
    assert prog.rules[3].local_vars() == {"Y"}
    assert prog.rule_label(0) == "r1" and prog.rule_index("keep") == 2


def test_format_round_trips():
    prog = parse_program(PROG)
    again = parse_program("\n".join(format_rule(r) for r in prog.rules))
    assert again.rules == prog.rules


def test_terms_and_lists():
    assert parse_term("set([A|L])") == Compound("set", (mklist([Var("A")], Var("L")),))
    assert parse_term("-3") == Int(-3)
    assert parse_term("'hello world'") == Const("hello world")
    assert len(parse_conjunction("p(X), X = a, q")) == 3


def test_pre_application_instantiates_head_variables():
    r1, r3 = parse_program(PROG).rules[:2]
    inst = make_pre_application(r1, {"X": Int(0)}).instance
    assert inst.removed == (Compound("p", (Int(0),)),) and inst.body == (Compound("q", (Int(0),)),)
    fresh = make_pre_application(r3, {}).instance
    (v,) = {a.args[0] for a in fresh.removed}
    assert isinstance(v, Var) and v.id != "X"
    assert fresh.guard == (Compound(">", (v, Int(0))),)


def test_pre_application_rejects_local_binding():
    prop = parse_program(PROG).rules[3]
    with pytest.raises(PreApplicationError):
        make_pre_application(prop, {"Y": Int(0)})


@pytest.mark.parametrize("text, line, col", [
    ("p(X) <=> q(X", 1, 13),
    ("p <=> q.\nq <=> \n", 3, 1),
    ("p(X) <=> foo(X) | q.", 1, 1),
    ("X > 0 <=> q.", 1, 1),
    ("p <=> q.\n r(X) <=> X is 1 | s.", 2, 13),
])
def test_parse_errors_carry_position(text, line, col):
    with pytest.raises(ParseError) as err:
        parse_program(text, "prog.chr")
    assert (err.value.line, err.value.col) == (line, col)
    assert str(err.value).startswith(f"prog.chr:{line}:{col}:")


def test_shipped_programs_parse():
    for name in ("set", "zigzag", "min"):
        prog = parse_program_file(chrconf.shipped(name + ".chr"))
        assert prog.rules
