"""Reference tree-walking interpreter.

All numbers are IEEE doubles at run time; integer literals are only a
syntactic distinction.  Each evaluated node (statement or expression) costs
one unit of budget, charged before its children run.  The compiled kernel
reproduces this accounting exactly.
"""

from __future__ import annotations

import math

from .nodes import BinOp, BoolOp, Call, Compare, If, Let, Name, Num, Program, Return, STATE_NAMES, Unary

DEFAULT_BUDGET = 10_000


class PolicyRuntimeError(Exception):
    pass


class BudgetExceeded(PolicyRuntimeError):
    pass


class ArithmeticFault(PolicyRuntimeError):
    pass


class InvalidActionResult(PolicyRuntimeError):
    pass


_COMPARE = {
    "<": lambda a, b: a < b,
    "<=": lambda a, b: a <= b,
    ">": lambda a, b: a > b,
    ">=": lambda a, b: a >= b,
    "==": lambda a, b: a == b,
    "!=": lambda a, b: a != b,
}


class _Frame:
    __slots__ = ("env", "ticks", "budget")

    def __init__(self, env: dict, budget: int):
        self.env = env
        self.ticks = 0
        self.budget = budget

    def tick(self):
        self.ticks += 1
        if self.ticks > self.budget:
            raise BudgetExceeded(f"node budget {self.budget} exhausted")


def _finite(v: float, op: str) -> float:
    if not math.isfinite(v):
        raise ArithmeticFault(f"non-finite result from {op!r}")
    return v


def _eval(e, f: _Frame):
    f.tick()
    t = type(e)
    if t is Num:
        return float(e.value)
    if t is Name:
        return f.env[e.id]
    if t is Compare:
        a = _eval(e.left, f)
        b = _eval(e.right, f)
        return _COMPARE[e.op](a, b)
    if t is BinOp:
        a = _eval(e.left, f)
        b = _eval(e.right, f)
        op = e.op
        if op == "+":
            return _finite(a + b, op)
        if op == "-":
            return _finite(a - b, op)
        if op == "*":
            return _finite(a * b, op)
        if b == 0.0:
            raise ArithmeticFault("division by zero")
        return _finite(a / b, op)
    if t is BoolOp:
        if e.op == "and":
            for v in e.values:
                if not _eval(v, f):
                    return False
            return True
        for v in e.values:
            if _eval(v, f):
                return True
        return False
    if t is Unary:
        v = _eval(e.operand, f)
        return (not v) if e.op == "not" else -v
    if t is Call:
        args = [_eval(a, f) for a in e.args]
        if e.func == "abs":
            return abs(args[0])
        m = args[0]
        if e.func == "min":
            for a in args[1:]:
                if a < m:
                    m = a
        else:
            for a in args[1:]:
                if a > m:
                    m = a
        return m
    raise TypeError(f"not an expression: {e!r}")


_NO_RESULT = object()


def _exec_block(body, f: _Frame):
    for s in body:
        f.tick()
        t = type(s)
        if t is Return:
            return _eval(s.value, f)
        if t is Let:
            f.env[s.name] = _eval(s.value, f)
            continue
        for cond, inner in s.arms:
            if _eval(cond, f):
                r = _exec_block(inner, f)
                break
        else:
            r = _exec_block(s.orelse, f) if s.orelse is not None else _NO_RESULT
        if r is not _NO_RESULT:
            return r
    return _NO_RESULT


def to_action(value: float) -> int:
    """Truncate toward zero, then require an action index in 0..3."""
    if not (value > -1.0 and value < 4.0):
        raise InvalidActionResult(f"policy returned {value!r}, not an action in 0..3")
    return int(value)


def evaluate(program: Program, state, budget: int = DEFAULT_BUDGET) -> int:
    if budget < 1:
        raise ValueError("budget must be >= 1")
    f = _Frame(dict(zip(STATE_NAMES, state)), budget)
    value = _exec_block(program.body, f)
    if value is _NO_RESULT:
        # unreachable for validated programs
        raise InvalidActionResult("program finished without returning")
    return to_action(value)


def as_policy(program: Program, budget: int = DEFAULT_BUDGET):
    """Wrap a program as a ``state -> action`` callback."""
    return lambda state: evaluate(program, state, budget)
