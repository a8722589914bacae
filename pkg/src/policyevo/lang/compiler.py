"""Lower a validated program to flat stack-machine code for the native kernel.

Layout: parallel int64 arrays ``ops`` and ``args`` plus a float64 constant
pool.  Booleans travel on the stack as 0.0 / 1.0.  Every syntax-tree node
emits one ``TICK`` before its children, which reproduces the tree walker's
budget accounting instruction for instruction.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nodes import STATE_NAMES, BinOp, BoolOp, Call, Compare, If, Let, Name, Num, Program, Return, Unary

TICK, CONST, LOAD, LOADL, STOREL = 0, 1, 2, 3, 4
NEG, NOT, ADD, SUB, MUL, DIV, ABS, MIN, MAX = 5, 6, 7, 8, 9, 10, 11, 12, 13
LT, LE, GT, GE, EQ, NE = 14, 15, 16, 17, 18, 19
JF, JT, JMP, RET = 20, 21, 22, 23

OPNAMES = {
    v: k
    for k, v in dict(
        TICK=TICK, CONST=CONST, LOAD=LOAD, LOADL=LOADL, STOREL=STOREL, NEG=NEG, NOT=NOT,
        ADD=ADD, SUB=SUB, MUL=MUL, DIV=DIV, ABS=ABS, MIN=MIN, MAX=MAX, LT=LT, LE=LE,
        GT=GT, GE=GE, EQ=EQ, NE=NE, JF=JF, JT=JT, JMP=JMP, RET=RET,
    ).items()
}

_ARITH = {"+": ADD, "-": SUB, "*": MUL, "/": DIV}
_CMP = {"<": LT, "<=": LE, ">": GT, ">=": GE, "==": EQ, "!=": NE}
_STATE_INDEX = {n: i for i, n in enumerate(STATE_NAMES)}


@dataclass(frozen=True)
class Bytecode:
    ops: np.ndarray
    args: np.ndarray
    consts: np.ndarray
    n_locals: int
    max_stack: int

    def disassemble(self) -> str:
        lines = []
        for i, (op, arg) in enumerate(zip(self.ops.tolist(), self.args.tolist())):
            name = OPNAMES[op]
            if op == CONST:
                lines.append(f"{i:4d} {name} {self.consts[arg]!r}")
            else:
                lines.append(f"{i:4d} {name} {arg}")
        return "\n".join(lines)


class _Emitter:
    def __init__(self):
        self.ops: list[int] = []
        self.args: list[int] = []
        self.consts: list[float] = []
        self.const_index: dict = {}
        self.slots = 0
        self.depth = 0
        self.max_depth = 0

    def emit(self, op: int, arg: int = 0, stack: int = 0) -> int:
        self.ops.append(op)
        self.args.append(arg)
        self.depth += stack
        self.max_depth = max(self.max_depth, self.depth)
        return len(self.ops) - 1

    def patch(self, at: int) -> None:
        self.args[at] = len(self.ops)

    def const(self, value: float) -> int:
        # key on repr so 0.0 and -0.0 stay distinct
        key = repr(float(value))
        if key not in self.const_index:
            self.const_index[key] = len(self.consts)
            self.consts.append(float(value))
        return self.const_index[key]

    def expr(self, e, scope: dict) -> None:
        self.emit(TICK)
        if isinstance(e, Num):
            self.emit(CONST, self.const(e.value), +1)
        elif isinstance(e, Name):
            if e.id in scope:
                self.emit(LOADL, scope[e.id], +1)
            else:
                self.emit(LOAD, _STATE_INDEX[e.id], +1)
        elif isinstance(e, Unary):
            self.expr(e.operand, scope)
            self.emit(NOT if e.op == "not" else NEG)
        elif isinstance(e, BinOp):
            self.expr(e.left, scope)
            self.expr(e.right, scope)
            self.emit(_ARITH[e.op], 0, -1)
        elif isinstance(e, Compare):
            self.expr(e.left, scope)
            self.expr(e.right, scope)
            self.emit(_CMP[e.op], 0, -1)
        elif isinstance(e, BoolOp):
            short = JF if e.op == "and" else JT
            jumps = []
            for v in e.values[:-1]:
                self.expr(v, scope)
                jumps.append(self.emit(short, 0, -1))
            self.expr(e.values[-1], scope)
            done = self.emit(JMP)
            for j in jumps:
                self.patch(j)
            # short-circuit result: False for "and", True for "or"
            self.depth -= 1
            self.emit(CONST, self.const(0.0 if e.op == "and" else 1.0), +1)
            self.patch(done)
        elif isinstance(e, Call):
            for a in e.args:
                self.expr(a, scope)
            n = len(e.args)
            if e.func == "abs":
                self.emit(ABS)
            else:
                self.emit(MIN if e.func == "min" else MAX, n, -(n - 1))
        else:
            raise TypeError(f"not an expression: {e!r}")

    def block(self, body, scope: dict) -> None:
        scope = dict(scope)
        for s in body:
            self.emit(TICK)
            if isinstance(s, Return):
                self.expr(s.value, scope)
                self.emit(RET, 0, -1)
            elif isinstance(s, Let):
                self.expr(s.value, scope)
                slot = self.slots
                self.slots += 1
                self.emit(STOREL, slot, -1)
                scope[s.name] = slot
            elif isinstance(s, If):
                exits = []
                for cond, inner in s.arms:
                    self.expr(cond, scope)
                    skip = self.emit(JF, 0, -1)
                    self.block(inner, scope)
                    exits.append(self.emit(JMP))
                    self.patch(skip)
                if s.orelse is not None:
                    self.block(s.orelse, scope)
                for j in exits:
                    self.patch(j)
            else:
                raise TypeError(f"not a statement: {s!r}")


def compile_program(program: Program) -> Bytecode:
    em = _Emitter()
    em.block(program.body, {})
    # validated programs never fall through; keep the VM total anyway
    em.emit(CONST, em.const(float("nan")), +1)
    em.emit(RET, 0, -1)
    return Bytecode(
        ops=np.asarray(em.ops, dtype=np.int64),
        args=np.asarray(em.args, dtype=np.int64),
        consts=np.asarray(em.consts, dtype=np.float64),
        n_locals=max(em.slots, 1),
        max_stack=max(em.max_depth, 1),
    )
