from hypothesis import given, settings, strategies as st

from policyevo.lang import measure, parse, pretty_print
from policyevo.lang.generate import random_program
from policyevo.lang.metrics import count_loc, count_predicates, nesting_depth
from policyevo.lang.nodes import iter_ifs


def test_straight_line_program():
    m = measure(parse("let t = y * 2\nreturn 0"))
    assert (m.lines_of_code, m.cyclomatic_complexity, m.max_nesting_depth) == (2, 1, 0)


def test_boolean_connectives_do_not_add_predicates():
    prog = parse("if y > 1 and vy < 0 or x > 0: return 2 end\nreturn 0")
    assert measure(prog).cyclomatic_complexity == 2


def test_elif_counts_each_condition_else_counts_none():
    prog = parse("if y > 1: return 1 elif y > 0: return 2 else: return 3 end")
    assert measure(prog).cyclomatic_complexity == 3


def test_nesting_depth():
    prog = parse("if y > 1:\n if x > 0:\n  if vx > 0: return 1 end\n end\nend\nreturn 0")
    assert measure(prog).max_nesting_depth == 3


def test_loc_ignores_comments_and_blank_lines():
    assert count_loc("# c\n\nreturn 0\n   \n# d\n") == 1


def test_loc_uses_canonical_form():
    a = parse("if y > 1: return 1 end return 0")
    b = parse("if y > 1:\n\n   return 1\n\nend\n\nreturn 0\n")
    assert measure(a) == measure(b)
    assert measure(a).lines_of_code == 4


def test_reference_policy_metrics(reference_program):
    m = measure(reference_program)
    assert m.cyclomatic_complexity == 14
    assert m.max_nesting_depth == 2
    assert m.lines_of_code == 38


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**63))
def test_complexity_matches_text_count(seed):
    # independent count on the printed text: one predicate per 'if'/'elif' line
    prog = random_program(seed)
    text = pretty_print(prog)
    lines = [l.strip() for l in text.splitlines()]
    hand = sum(1 for l in lines if l.startswith(("if ", "elif ")))
    assert measure(prog).cyclomatic_complexity == 1 + hand
    assert count_predicates(prog) == sum(len(s.arms) for s in iter_ifs(prog.body))
    assert nesting_depth(prog.body) >= (1 if hand else 0)
