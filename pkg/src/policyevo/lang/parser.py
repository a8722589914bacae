"""Tokenizer and recursive-descent parser for the policy language.

Whitespace, including newlines, is insignificant: every statement is
delimited by keywords (``return``, ``let``, ``if`` ... ``end``).  The parser
never raises anything except :class:`ParseError` / :class:`ValidationError`,
whatever bytes it is fed.
"""

from __future__ import annotations

import enum
import math
import re
from dataclasses import dataclass
from typing import Iterable, Union

from .nodes import (
    COMPARE_OPS,
    INTRINSICS,
    KEYWORDS,
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
    tree_depth,
)

# Bounds recursion on hostile input (deep parens, deep if-nesting).
MAX_NESTING = 64
# Long operator chains parse iteratively but build deep left-leaning trees.
MAX_TREE_DEPTH = 200
MAX_SOURCE_BYTES = 1_000_000


class Origin(str, enum.Enum):
    SEED = "Seed"
    LLM = "LlmGenerated"
    MOCK = "MockGenerated"
    FIXTURE = "Fixture"


@dataclass(frozen=True)
class PolicySource:
    text: str
    origin: Origin = Origin.SEED


class PolicyError(Exception):
    """Base for located diagnostics; renders as ``line:col: message``."""

    def __init__(self, message: str, line: int = 1, col: int = 1, expected=()):
        self.message = message
        self.line = line
        self.col = col
        self.expected = tuple(sorted(set(expected)))
        super().__init__(self.render())

    def render(self) -> str:
        text = f"{self.line}:{self.col}: {self.message}"
        if self.expected:
            text += " (expected " + ", ".join(self.expected) + ")"
        return text


class ParseError(PolicyError):
    pass


class ValidationError(PolicyError):
    pass


@dataclass(frozen=True)
class Token:
    kind: str  # NUM, NAME, KW, OP, EOF
    text: str
    line: int
    col: int


_TOKEN_RE = re.compile(
    r"""
    (?P<ws>[ \t\r\f\v]+)
  | (?P<nl>\n)
  | (?P<comment>\#[^\n]*)
  | (?P<num>(?:\d+\.\d*|\.\d+|\d+)(?:[eE][+-]?\d+)?)
  | (?P<name>[A-Za-z_][A-Za-z_0-9]*)
  | (?P<op><=|>=|==|!=|[<>+\-*/(),:=])
    """,
    re.VERBOSE | re.ASCII,
)


def tokenize(text: str) -> list[Token]:
    tokens = []
    pos = 0
    line, line_start = 1, 0
    n = len(text)
    while pos < n:
        m = _TOKEN_RE.match(text, pos)
        col = pos - line_start + 1
        if m is None:
            raise ParseError(f"unexpected character {text[pos]!r}", line, col)
        kind = m.lastgroup
        value = m.group()
        if kind == "nl":
            line += 1
            line_start = m.end()
        elif kind == "num":
            tokens.append(Token("NUM", value, line, col))
        elif kind == "name":
            tokens.append(Token("KW" if value in KEYWORDS else "NAME", value, line, col))
        elif kind == "op":
            tokens.append(Token("OP", value, line, col))
        pos = m.end()
    tokens.append(Token("EOF", "", line, n - line_start + 1))
    return tokens


_BLOCK_END = ("elif", "else", "end")


class _Parser:
    def __init__(self, tokens: list[Token]):
        self.toks = tokens
        self.i = 0
        self.depth = 0

    @property
    def tok(self) -> Token:
        return self.toks[self.i]

    def advance(self) -> Token:
        t = self.toks[self.i]
        if t.kind != "EOF":
            self.i += 1
        return t

    def error(self, message: str, expected: Iterable[str] = ()) -> ParseError:
        t = self.tok
        found = "end of input" if t.kind == "EOF" else repr(t.text)
        return ParseError(f"{message}, found {found}", t.line, t.col, expected)

    def is_kw(self, *words) -> bool:
        return self.tok.kind == "KW" and self.tok.text in words

    def is_op(self, *ops) -> bool:
        return self.tok.kind == "OP" and self.tok.text in ops

    def expect_op(self, op: str) -> Token:
        if not self.is_op(op):
            raise self.error("unexpected token", [repr(op)])
        return self.advance()

    def expect_kw(self, kw: str) -> Token:
        if not self.is_kw(kw):
            raise self.error("unexpected token", [repr(kw)])
        return self.advance()

    def nest(self):
        self.depth += 1
        if self.depth > MAX_NESTING:
            raise self.error(f"nesting deeper than {MAX_NESTING}")

    # statements

    def program(self) -> Program:
        body = self.block()
        if self.tok.kind != "EOF":
            raise self.error("unexpected token", ["statement", "end of input"])
        return Program(tuple(body), pos=(1, 1))

    def block(self) -> list:
        stmts = []
        while not (self.tok.kind == "EOF" or self.is_kw(*_BLOCK_END)):
            stmts.append(self.statement())
        if not stmts:
            raise self.error("expected a statement", ["'return'", "'let'", "'if'"])
        return stmts

    def statement(self):
        t = self.tok
        if self.is_kw("return"):
            self.advance()
            return Return(self.expr(), pos=(t.line, t.col))
        if self.is_kw("let"):
            self.advance()
            if self.tok.kind != "NAME":
                raise self.error("expected a variable name", ["name"])
            name = self.advance().text
            self.expect_op("=")
            return Let(name, self.expr(), pos=(t.line, t.col))
        if self.is_kw("if"):
            return self.if_stmt()
        raise self.error("expected a statement", ["'return'", "'let'", "'if'"])

    def if_stmt(self) -> If:
        t = self.advance()
        self.nest()
        arms = []
        cond = self.expr()
        self.expect_op(":")
        arms.append((cond, tuple(self.block())))
        orelse = None
        while True:
            if self.is_kw("elif"):
                self.advance()
                cond = self.expr()
                self.expect_op(":")
                arms.append((cond, tuple(self.block())))
            elif self.is_kw("else"):
                self.advance()
                self.expect_op(":")
                orelse = tuple(self.block())
                self.expect_kw("end")
                break
            elif self.is_kw("end"):
                self.advance()
                break
            else:
                raise self.error("unterminated if", ["'elif'", "'else'", "'end'"])
        self.depth -= 1
        return If(tuple(arms), orelse, pos=(t.line, t.col))

    # expressions, loosest binding first

    def expr(self):
        self.nest()
        e = self.or_expr()
        self.depth -= 1
        return e

    def or_expr(self):
        t = self.tok
        values = [self.and_expr()]
        while self.is_kw("or"):
            self.advance()
            values.append(self.and_expr())
        return values[0] if len(values) == 1 else BoolOp("or", tuple(values), pos=(t.line, t.col))

    def and_expr(self):
        t = self.tok
        values = [self.not_expr()]
        while self.is_kw("and"):
            self.advance()
            values.append(self.not_expr())
        return values[0] if len(values) == 1 else BoolOp("and", tuple(values), pos=(t.line, t.col))

    def not_expr(self):
        if self.is_kw("not"):
            t = self.advance()
            self.nest()
            operand = self.not_expr()
            self.depth -= 1
            return Unary("not", operand, pos=(t.line, t.col))
        return self.comparison()

    def comparison(self):
        t = self.tok
        left = self.arith()
        links = []
        while self.is_op(*COMPARE_OPS):
            op = self.advance().text
            right = self.arith()
            links.append(Compare(op, left, right, pos=(t.line, t.col)))
            left = right
        if not links:
            return left
        if len(links) == 1:
            return links[0]
        # a < b < c  ==>  a < b and b < c
        return BoolOp("and", tuple(links), pos=(t.line, t.col))

    def arith(self):
        left = self.term()
        while self.is_op("+", "-"):
            t = self.advance()
            left = BinOp(t.text, left, self.term(), pos=(t.line, t.col))
        return left

    def term(self):
        left = self.unary()
        while self.is_op("*", "/"):
            t = self.advance()
            left = BinOp(t.text, left, self.unary(), pos=(t.line, t.col))
        return left

    def unary(self):
        if self.is_op("-"):
            t = self.advance()
            self.nest()
            operand = self.unary()
            self.depth -= 1
            return Unary("-", operand, pos=(t.line, t.col))
        if self.is_op("+"):
            self.advance()
            return self.unary()
        return self.atom()

    def atom(self):
        t = self.tok
        if t.kind == "NUM":
            self.advance()
            value = float(t.text)
            if not math.isfinite(value):
                raise ParseError("numeric literal out of range", t.line, t.col)
            is_int = t.text.isdigit()
            return Num(value, is_int, pos=(t.line, t.col))
        if t.kind == "NAME":
            self.advance()
            if t.text in INTRINSICS and self.is_op("("):
                return self.call(t)
            return Name(t.text, pos=(t.line, t.col))
        if self.is_op("("):
            self.advance()
            e = self.expr()
            self.expect_op(")")
            return e
        raise self.error("expected an expression", ["number", "name", "'('", "'-'", "'not'"])

    def call(self, name_tok: Token) -> Call:
        self.expect_op("(")
        args = [self.expr()]
        while self.is_op(","):
            self.advance()
            args.append(self.expr())
        self.expect_op(")")
        func = name_tok.text
        if func == "abs" and len(args) != 1:
            raise ParseError("abs() takes exactly one argument", name_tok.line, name_tok.col)
        if func in ("min", "max") and len(args) < 2:
            raise ParseError(f"{func}() takes at least two arguments", name_tok.line, name_tok.col)
        return Call(func, tuple(args), pos=(name_tok.line, name_tok.col))


def _source_text(source) -> str:
    if isinstance(source, PolicySource):
        return source.text
    if isinstance(source, (bytes, bytearray, memoryview)):
        raw = bytes(source)
        if len(raw) > MAX_SOURCE_BYTES:
            raise ParseError("source too large")
        try:
            return raw.decode("utf-8")
        except UnicodeDecodeError as exc:
            raise ParseError(f"invalid UTF-8 at byte {exc.start}") from None
    if isinstance(source, str):
        return source
    raise TypeError(f"cannot parse {type(source).__name__}")


def parse_syntax(source: Union[str, bytes, PolicySource]) -> Program:
    """Parse without semantic checks."""
    text = _source_text(source)
    if len(text) > MAX_SOURCE_BYTES:
        raise ParseError("source too large")
    program = _Parser(tokenize(text)).program()
    if tree_depth(program) > MAX_TREE_DEPTH:
        raise ParseError(f"program nested deeper than {MAX_TREE_DEPTH}")
    return program


def parse(source: Union[str, bytes, PolicySource]) -> Program:
    """Parse and validate; raises :class:`ParseError` or :class:`ValidationError`."""
    from .validate import validate

    program = parse_syntax(source)
    validate(program)
    return program
