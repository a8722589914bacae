"""Static checks: name resolution, num/bool typing, and return coverage."""

from __future__ import annotations

from .nodes import (
    INTRINSICS,
    STATE_NAMES,
    BinOp,
    BoolOp,
    Call,
    Compare,
    If,
    Let,
    Name,
    Num,
    Program,
    Return,
    Unary,
)
from .parser import ValidationError

NUM = "num"
BOOL = "bool"


def _fail(node, message: str):
    line, col = node.pos if node.pos != (0, 0) else (1, 1)
    raise ValidationError(message, line, col)


def expr_type(e, scope: dict) -> str:
    if isinstance(e, Num):
        return NUM
    if isinstance(e, Name):
        if e.id in STATE_NAMES:
            return NUM
        if e.id in scope:
            return scope[e.id]
        _fail(e, f"undefined name {e.id!r}")
    if isinstance(e, Unary):
        t = expr_type(e.operand, scope)
        want = BOOL if e.op == "not" else NUM
        if t != want:
            _fail(e, f"operand of {e.op!r} must be {want}, got {t}")
        return want
    if isinstance(e, BinOp):
        for side in (e.left, e.right):
            if expr_type(side, scope) != NUM:
                _fail(side, f"operand of {e.op!r} must be numeric")
        return NUM
    if isinstance(e, Compare):
        for side in (e.left, e.right):
            if expr_type(side, scope) != NUM:
                _fail(side, f"operand of {e.op!r} must be numeric")
        return BOOL
    if isinstance(e, BoolOp):
        for v in e.values:
            if expr_type(v, scope) != BOOL:
                _fail(v, f"operand of {e.op!r} must be a condition")
        return BOOL
    if isinstance(e, Call):
        if e.func not in INTRINSICS:
            _fail(e, f"unknown function {e.func!r}")
        for a in e.args:
            if expr_type(a, scope) != NUM:
                _fail(a, f"argument of {e.func}() must be numeric")
        return NUM
    raise TypeError(f"not an expression: {e!r}")


def _check_block(body, scope: dict) -> bool:
    """Type-check ``body``; return True when every path through it returns."""
    scope = dict(scope)
    terminates = False
    for s in body:
        if isinstance(s, Return):
            if expr_type(s.value, scope) != NUM:
                _fail(s, "return value must be a numeric action, not a condition")
            terminates = True
        elif isinstance(s, Let):
            if s.name in STATE_NAMES or s.name in INTRINSICS:
                _fail(s, f"cannot rebind reserved name {s.name!r}")
            if s.name in scope:
                _fail(s, f"name {s.name!r} is already bound")
            scope[s.name] = expr_type(s.value, scope)
        elif isinstance(s, If):
            all_return = True
            for cond, inner in s.arms:
                if expr_type(cond, scope) != BOOL:
                    _fail(cond, "if condition must be a comparison or boolean expression")
                all_return &= _check_block(inner, scope)
            if s.orelse is None:
                all_return = False
            else:
                all_return &= _check_block(s.orelse, scope)
            terminates |= all_return
        else:
            raise TypeError(f"not a statement: {s!r}")
    return terminates


def validate(program: Program) -> None:
    if not _check_block(program.body, {}):
        last = program.body[-1] if program.body else program
        _fail(last, "missing return: some execution path falls off the end")
