"""Immutable syntax-tree nodes for the policy language.

Equality is structural.  Source positions ride along for diagnostics but
are excluded from comparison, so a re-parsed program equals the original
even when formatting differs.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Union

STATE_NAMES = ("x", "y", "vx", "vy", "angle", "w", "left_leg", "right_leg")
INTRINSICS = ("abs", "min", "max")
KEYWORDS = frozenset(
    {"if", "elif", "else", "end", "return", "let", "and", "or", "not"}
)

ARITH_OPS = ("+", "-", "*", "/")
COMPARE_OPS = ("<", "<=", ">", ">=", "==", "!=")

Pos = tuple


def _pos():
    return field(default=(0, 0), compare=False, repr=False)


@dataclass(frozen=True)
class Num:
    value: float
    is_int: bool = False
    pos: Pos = _pos()


@dataclass(frozen=True)
class Name:
    id: str
    pos: Pos = _pos()


@dataclass(frozen=True)
class Unary:
    op: str  # "-" or "not"
    operand: "Expr"
    pos: Pos = _pos()


@dataclass(frozen=True)
class BinOp:
    op: str
    left: "Expr"
    right: "Expr"
    pos: Pos = _pos()


@dataclass(frozen=True)
class Compare:
    op: str
    left: "Expr"
    right: "Expr"
    pos: Pos = _pos()


@dataclass(frozen=True)
class BoolOp:
    op: str  # "and" or "or"
    values: tuple
    pos: Pos = _pos()


@dataclass(frozen=True)
class Call:
    func: str
    args: tuple
    pos: Pos = _pos()


Expr = Union[Num, Name, Unary, BinOp, Compare, BoolOp, Call]


@dataclass(frozen=True)
class Return:
    value: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class Let:
    name: str
    value: Expr
    pos: Pos = _pos()


@dataclass(frozen=True)
class If:
    # ((condition, body), ...) for the if and each elif
    arms: tuple
    orelse: Optional[tuple] = None
    pos: Pos = _pos()


Stmt = Union[Return, Let, If]


@dataclass(frozen=True)
class Program:
    body: tuple
    pos: Pos = _pos()


def iter_exprs(node):
    """Yield every expression node under ``node`` in evaluation order."""
    if isinstance(node, Program):
        for s in node.body:
            yield from iter_exprs(s)
    elif isinstance(node, (Return, Let)):
        yield from iter_exprs(node.value)
    elif isinstance(node, If):
        for cond, body in node.arms:
            yield from iter_exprs(cond)
            for s in body:
                yield from iter_exprs(s)
        for s in node.orelse or ():
            yield from iter_exprs(s)
    elif isinstance(node, tuple):
        for s in node:
            yield from iter_exprs(s)
    else:
        yield node
        if isinstance(node, Unary):
            yield from iter_exprs(node.operand)
        elif isinstance(node, (BinOp, Compare)):
            yield from iter_exprs(node.left)
            yield from iter_exprs(node.right)
        elif isinstance(node, BoolOp):
            for v in node.values:
                yield from iter_exprs(v)
        elif isinstance(node, Call):
            for a in node.args:
                yield from iter_exprs(a)


def iter_ifs(body):
    """Yield every If statement in ``body``, outermost first."""
    for s in body:
        if isinstance(s, If):
            yield s
            for _, inner in s.arms:
                yield from iter_ifs(inner)
            if s.orelse:
                yield from iter_ifs(s.orelse)


def _children(node):
    if isinstance(node, Program):
        return node.body
    if isinstance(node, (Return, Let)):
        return (node.value,)
    if isinstance(node, If):
        out = []
        for cond, body in node.arms:
            out.append(cond)
            out.extend(body)
        out.extend(node.orelse or ())
        return out
    if isinstance(node, Unary):
        return (node.operand,)
    if isinstance(node, (BinOp, Compare)):
        return (node.left, node.right)
    if isinstance(node, BoolOp):
        return node.values
    if isinstance(node, Call):
        return node.args
    return ()


def tree_depth(node) -> int:
    """Height of the tree, computed without recursion."""
    best = 0
    stack = [(node, 1)]
    while stack:
        n, d = stack.pop()
        if d > best:
            best = d
        for c in _children(n):
            stack.append((c, d + 1))
    return best


def count_nodes(node) -> int:
    total = 0
    stack = [node]
    while stack:
        n = stack.pop()
        total += 1
        stack.extend(_children(n))
    return total
