"""The policy language: parse, validate, print, interpret, measure."""

from .interp import (
    DEFAULT_BUDGET,
    ArithmeticFault,
    BudgetExceeded,
    InvalidActionResult,
    PolicyRuntimeError,
    as_policy,
    evaluate,
)
from .metrics import InterpretabilityMetrics, measure
from .nodes import STATE_NAMES, Program
from .parser import Origin, ParseError, PolicyError, PolicySource, ValidationError, parse
from .printer import pretty_print

__all__ = [
    "DEFAULT_BUDGET",
    "STATE_NAMES",
    "ArithmeticFault",
    "BudgetExceeded",
    "InterpretabilityMetrics",
    "InvalidActionResult",
    "Origin",
    "ParseError",
    "PolicyError",
    "PolicyRuntimeError",
    "PolicySource",
    "Program",
    "ValidationError",
    "as_policy",
    "evaluate",
    "measure",
    "parse",
    "pretty_print",
]
