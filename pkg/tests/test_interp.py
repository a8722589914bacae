import math

import pytest
from hypothesis import given, settings, strategies as st

from policyevo import sim
from policyevo.lang import (
    ArithmeticFault,
    BudgetExceeded,
    InvalidActionResult,
    as_policy,
    evaluate,
    parse,
)
from policyevo.lang.interp import to_action
from policyevo.lang.generate import random_program
from policyevo.lang.nodes import count_nodes

ZERO = (0.0,) * 8


def state(**kw):
    d = dict(x=0.0, y=0.0, vx=0.0, vy=0.0, angle=0.0, w=0.0, left_leg=0.0, right_leg=0.0)
    d.update(kw)
    return sim.LanderState(**d)


@pytest.mark.parametrize(
    "src, expected",
    [
        ("return 3", 3),
        ("return 3.99", 3),
        ("return -0.5", 0),
        ("return 1 + 1", 2),
        ("return 7 / 2", 3),
        ("return abs(-2)", 2),
        ("return min(3, 1, 2)", 1),
        ("return max(0, 1, 2.5)", 2),
        ("let t = 2\nreturn t", 2),
        ("if 1 < 2 and not 2 < 1: return 1 end\nreturn 0", 1),
        ("if 1 > 2 or 3 == 3: return 2 end\nreturn 0", 2),
        ("if 1 > 2: return 1 elif 2 > 1: return 2 else: return 3 end", 2),
        ("if 1 > 2: return 1 elif 2 > 3: return 2 else: return 3 end", 3),
    ],
)
def test_constant_programs(src, expected):
    assert evaluate(parse(src), ZERO) == expected


def test_reads_state_by_name():
    prog = parse("if vy < -1.0 and y > 0.5: return 2 end\nreturn 0")
    assert evaluate(prog, state(vy=-1.5, y=0.8)) == 2
    assert evaluate(prog, state(vy=-0.5, y=0.8)) == 0


@pytest.mark.parametrize("src", ["return 4", "return -1", "return 7", "return 100.5"])
def test_out_of_range_result(src):
    with pytest.raises(InvalidActionResult):
        evaluate(parse(src), ZERO)


@pytest.mark.parametrize("value", [math.nan, math.inf, -math.inf])
def test_to_action_rejects_non_finite(value):
    with pytest.raises(InvalidActionResult):
        to_action(value)


def test_division_by_zero_faults():
    with pytest.raises(ArithmeticFault):
        evaluate(parse("return 1 / y"), ZERO)


def test_overflow_faults():
    with pytest.raises(ArithmeticFault):
        evaluate(parse("return 1e308 * 10"), ZERO)


def test_short_circuit_skips_faulting_operand():
    prog = parse("if y > 0 and 1 / y > 2: return 1 end\nreturn 0")
    assert evaluate(prog, ZERO) == 0


def test_budget_counts_every_node():
    prog = parse("return 1 + 2")
    # Return, BinOp, Num, Num
    assert evaluate(prog, ZERO, budget=4) == 3
    with pytest.raises(BudgetExceeded):
        evaluate(prog, ZERO, budget=3)


def test_budget_must_be_positive():
    with pytest.raises(ValueError):
        evaluate(parse("return 0"), ZERO, budget=0)


def test_reference_policy_phase_states(reference_program):
    assert evaluate(reference_program, state(y=0.8, vy=-1.5)) == 2
    assert evaluate(reference_program, state(y=0.4, vy=-0.6)) == 2
    assert evaluate(reference_program, state(y=0.1, vy=-0.3)) == 2
    assert evaluate(reference_program, state(y=0.1, vy=-0.1)) == 0


def test_as_policy_wraps_program(reference_program):
    policy = as_policy(reference_program)
    assert policy(state(y=0.8, vy=-1.5)) == 2


@settings(max_examples=200, deadline=None)
@given(st.integers(0, 2**63), st.lists(st.floats(-3, 3), min_size=8, max_size=8))
def test_action_programs_always_yield_valid_actions(seed, values):
    prog = random_program(seed)
    try:
        a = evaluate(prog, tuple(values))
    except (ArithmeticFault, BudgetExceeded):
        return
    assert a in (0, 1, 2, 3)


@settings(max_examples=100, deadline=None)
@given(st.integers(0, 2**63))
def test_budget_of_node_count_always_suffices(seed):
    # straight-line code visits each node at most once
    prog = random_program(seed)
    try:
        evaluate(prog, ZERO, budget=count_nodes(prog))
    except BudgetExceeded:  # pragma: no cover
        pytest.fail("budget exceeded with one tick per node")
    except (ArithmeticFault, InvalidActionResult):
        pass
