"""Canonical formatting.  ``parse(pretty_print(p)) == p`` for every valid tree."""

from __future__ import annotations

from .nodes import BinOp, BoolOp, Call, Compare, If, Let, Name, Num, Program, Return, Unary

INDENT = "    "

# binding power, loosest first
_OR, _AND, _NOT, _CMP, _ADD, _MUL, _NEG, _ATOM = range(1, 9)


def _prec(e) -> int:
    if isinstance(e, BoolOp):
        return _OR if e.op == "or" else _AND
    if isinstance(e, Unary):
        return _NOT if e.op == "not" else _NEG
    if isinstance(e, Compare):
        return _CMP
    if isinstance(e, BinOp):
        return _ADD if e.op in "+-" else _MUL
    return _ATOM


def format_number(n: Num) -> str:
    if n.is_int and n.value.is_integer():
        return str(int(n.value))
    text = repr(float(n.value))
    # keep float literals visibly non-integer so is_int round-trips
    if "." not in text and "e" not in text:
        text += ".0"
    return text


def _wrap(e, min_prec: int) -> str:
    text = format_expr(e)
    return f"({text})" if _prec(e) < min_prec else text


def format_expr(e) -> str:
    if isinstance(e, Num):
        return format_number(e)
    if isinstance(e, Name):
        return e.id
    if isinstance(e, Unary):
        if e.op == "not":
            return "not " + _wrap(e.operand, _NOT)
        return "-" + _wrap(e.operand, _NEG)
    if isinstance(e, BinOp):
        p = _prec(e)
        # left-associative: the right operand needs strictly tighter binding
        return f"{_wrap(e.left, p)} {e.op} {_wrap(e.right, p + 1)}"
    if isinstance(e, Compare):
        return f"{_wrap(e.left, _ADD)} {e.op} {_wrap(e.right, _ADD)}"
    if isinstance(e, BoolOp):
        p = _prec(e)
        return f" {e.op} ".join(_wrap(v, p + 1) for v in e.values)
    if isinstance(e, Call):
        return f"{e.func}(" + ", ".join(format_expr(a) for a in e.args) + ")"
    raise TypeError(f"not an expression: {e!r}")


def _format_block(body, depth: int, out: list) -> None:
    pad = INDENT * depth
    for s in body:
        if isinstance(s, Return):
            out.append(f"{pad}return {format_expr(s.value)}")
        elif isinstance(s, Let):
            out.append(f"{pad}let {s.name} = {format_expr(s.value)}")
        elif isinstance(s, If):
            for i, (cond, inner) in enumerate(s.arms):
                kw = "if" if i == 0 else "elif"
                out.append(f"{pad}{kw} {format_expr(cond)}:")
                _format_block(inner, depth + 1, out)
            if s.orelse is not None:
                out.append(f"{pad}else:")
                _format_block(s.orelse, depth + 1, out)
            out.append(f"{pad}end")
        else:
            raise TypeError(f"not a statement: {s!r}")


def pretty_print(program: Program) -> str:
    out: list[str] = []
    _format_block(program.body, 0, out)
    return "\n".join(out) + "\n"
