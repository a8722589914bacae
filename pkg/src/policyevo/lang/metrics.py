from __future__ import annotations

from dataclasses import asdict, dataclass

from .nodes import If, Program, iter_ifs
from .printer import pretty_print


@dataclass(frozen=True)
class InterpretabilityMetrics:
    lines_of_code: int
    cyclomatic_complexity: int
    max_nesting_depth: int

    def to_dict(self) -> dict:
        return asdict(self)


def count_predicates(program: Program) -> int:
    """Number of branch predicates: one per ``if`` / ``elif`` condition.

    Boolean connectives inside a condition do not add predicates.
    """
    return sum(len(s.arms) for s in iter_ifs(program.body))


def nesting_depth(body, depth: int = 0) -> int:
    best = depth
    for s in body:
        if isinstance(s, If):
            for _, inner in s.arms:
                best = max(best, nesting_depth(inner, depth + 1))
            if s.orelse is not None:
                best = max(best, nesting_depth(s.orelse, depth + 1))
    return best


def count_loc(text: str) -> int:
    n = 0
    for line in text.splitlines():
        stripped = line.strip()
        if stripped and not stripped.startswith("#"):
            n += 1
    return n


def measure(program: Program, source=None) -> InterpretabilityMetrics:
    """Metrics of the canonical form.

    ``source`` is accepted for interface compatibility only; line counts
    always come from the canonical printing so formatting cannot skew them.
    """
    return InterpretabilityMetrics(
        lines_of_code=count_loc(pretty_print(program)),
        cyclomatic_complexity=1 + count_predicates(program),
        max_nesting_depth=nesting_depth(program.body),
    )
