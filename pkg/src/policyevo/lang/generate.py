"""Seeded generator of random *valid* programs."""

from __future__ import annotations

import random

from .nodes import STATE_NAMES, BinOp, BoolOp, Call, Compare, If, Let, Name, Num, Program, Return, Unary

_CMP_OPS = ("<", "<=", ">", ">=", "==", "!=")


class ProgramGenerator:
    """Builds well-typed, always-returning programs.

    With ``action_returns`` every ``return`` is a literal in 0..3, which is
    what you want for policies that should actually run; without it return
    values are arbitrary arithmetic and may fault at run time.
    """

    def __init__(self, rng: random.Random, max_depth: int = 3, action_returns: bool = True):
        self.rng = rng
        self.max_depth = max_depth
        self.action_returns = action_returns
        self._next_name = 0

    def literal(self) -> Num:
        r = self.rng
        if r.random() < 0.3:
            return Num(float(r.randint(0, 5)), is_int=True)
        return Num(round(r.uniform(0.0, 2.0), r.choice((1, 2, 3))))

    def num_expr(self, scope: dict, depth: int):
        r = self.rng
        leaf = depth <= 0 or r.random() < 0.4
        if leaf:
            lets = [n for n, t in scope.items() if t == "num"]
            roll = r.random()
            if roll < 0.35:
                return self.literal()
            if lets and roll < 0.5:
                return Name(r.choice(lets))
            return Name(r.choice(STATE_NAMES))
        kind = r.choice(("neg", "bin", "bin", "call"))
        if kind == "neg":
            return Unary("-", self.num_expr(scope, depth - 1))
        if kind == "bin":
            return BinOp(r.choice("+-*/"), self.num_expr(scope, depth - 1), self.num_expr(scope, depth - 1))
        func = r.choice(("abs", "min", "max"))
        n = 1 if func == "abs" else r.randint(2, 3)
        return Call(func, tuple(self.num_expr(scope, depth - 1) for _ in range(n)))

    def bool_expr(self, scope: dict, depth: int):
        r = self.rng
        lets = [n for n, t in scope.items() if t == "bool"]
        if depth <= 0 or r.random() < 0.5:
            if lets and r.random() < 0.15:
                return Name(r.choice(lets))
            return Compare(r.choice(_CMP_OPS), self.num_expr(scope, depth - 1), self.num_expr(scope, depth - 1))
        kind = r.choice(("and", "or", "not"))
        if kind == "not":
            return Unary("not", self.bool_expr(scope, depth - 1))
        n = r.randint(2, 3)
        return BoolOp(kind, tuple(self.bool_expr(scope, depth - 1) for _ in range(n)))

    def ret(self, scope: dict) -> Return:
        if self.action_returns:
            return Return(Num(float(self.rng.randint(0, 3)), is_int=True))
        return Return(self.num_expr(scope, 2))

    def block(self, scope: dict, depth: int, must_return: bool) -> tuple:
        r = self.rng
        scope = dict(scope)
        body = []
        for _ in range(r.randint(0, 2) if depth > 0 else r.randint(0, 1)):
            if r.random() < 0.35:
                name = f"t{self._next_name}"
                self._next_name += 1
                if r.random() < 0.8:
                    value, typ = self.num_expr(scope, 2), "num"
                else:
                    value, typ = self.bool_expr(scope, 1), "bool"
                body.append(Let(name, value))
                scope[name] = typ
            elif depth > 0:
                body.append(self.if_stmt(scope, depth - 1))
        if must_return or not body or r.random() < 0.6:
            body.append(self.ret(scope))
        return tuple(body)

    def if_stmt(self, scope: dict, depth: int) -> If:
        r = self.rng
        arms = tuple(
            (self.bool_expr(scope, 2), self.block(scope, depth, must_return=False))
            for _ in range(r.randint(1, 3))
        )
        orelse = self.block(scope, depth, must_return=False) if r.random() < 0.4 else None
        return If(arms, orelse)

    def program(self) -> Program:
        return Program(self.block({}, self.max_depth, must_return=True))


def random_program(seed: int, max_depth: int = 3, action_returns: bool = True) -> Program:
    return ProgramGenerator(random.Random(seed), max_depth, action_returns).program()
