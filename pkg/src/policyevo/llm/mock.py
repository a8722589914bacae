"""Offline stand-in for the language model.

Every edit works on syntax trees, never on text, so offspring are valid by
construction; each result is still re-validated and falls back to a simpler
edit if a graft happens to break scoping.  Everything is a pure function of
``(parents, operator, seed)``.
"""

from __future__ import annotations

import dataclasses
import random
from typing import Callable, Optional, Sequence

from ..lang.nodes import If, Num, Program, Return, count_nodes
from ..lang.parser import PolicyError, parse
from ..lang.printer import pretty_print
from ..lang.validate import validate
from .gateway import LlmResponse, response_from_text
from .prompts import Operator, PromptRequest

# Offspring larger than this are replaced by a parameter edit of the parent.
MAX_NODES = 400

_STARTERS = (
    "if vy < -{a}: return 2 end\nreturn 0\n",
    "if angle > {b}: return 3 end\n"
    "if angle < -{b}: return 1 end\n"
    "if vy < -{a}: return 2 end\n"
    "return 0\n",
    "if y > {h}:\n"
    "    if vy < -{a}: return 2 end\n"
    "else:\n"
    "    if vy < -{c}: return 2 end\n"
    "    if x > {d}: return 3 end\n"
    "    if x < -{d}: return 1 end\n"
    "end\n"
    "return 0\n",
    "if vy < -{a} or y < {h} and vy < -{c}: return 2 end\n"
    "if angle + {e} * w > {b}: return 3 end\n"
    "if angle + {e} * w < -{b}: return 1 end\n"
    "return 0\n",
)


def starter(seed: int) -> Program:
    """A small hand-shaped controller with seeded thresholds."""
    r = random.Random(seed)
    params = {
        "a": round(r.uniform(0.2, 1.5), 2),
        "b": round(r.uniform(0.02, 0.4), 2),
        "c": round(r.uniform(0.05, 0.6), 2),
        "d": round(r.uniform(0.05, 0.5), 2),
        "e": round(r.uniform(0.1, 1.0), 2),
        "h": round(r.uniform(0.1, 1.0), 2),
    }
    return parse(r.choice(_STARTERS).format(**params))


def _map_tunable(program: Program, fn: Callable[[int, Num], Num]) -> Program:
    """Copy ``program`` with ``fn(index, literal)`` applied to each tunable literal.

    Tunable means non-zero and not a bare action return.  Indices follow
    source order, and untouched subtrees are shared with the input.
    """
    counter = [0]

    def walk(node, in_action):
        if isinstance(node, tuple):
            items = tuple(walk(n, in_action) for n in node)
            return node if all(a is b for a, b in zip(items, node)) else items
        if isinstance(node, Num):
            if in_action or node.value == 0:
                return node
            i = counter[0]
            counter[0] += 1
            return fn(i, node)
        if not dataclasses.is_dataclass(node):
            return node
        action = isinstance(node, Return) and isinstance(node.value, Num)
        changes = {}
        for f in dataclasses.fields(node):
            if f.name == "pos":
                continue
            value = getattr(node, f.name)
            new = walk(value, action)
            if new is not value:
                changes[f.name] = new
        return dataclasses.replace(node, **changes) if changes else node

    return walk(program, False)


def _tunable(program: Program) -> list[Num]:
    out: list[Num] = []
    _map_tunable(program, lambda i, n: out.append(n) or n)
    return out


def param_mutate(program: Program, rng: random.Random) -> Program:
    """Scale one tunable literal by a factor in [0.8, 1.25]."""
    lits = _tunable(program)
    if not lits:
        return program
    i = rng.randrange(len(lits))
    old = lits[i].value
    factor = rng.uniform(0.8, 1.25)
    new = round(old * factor, 4)
    if new == old or new == 0:
        new = old * factor
    return _map_tunable(program, lambda j, n: Num(new) if j == i else n)


def _blocks(program: Program):
    """Every statement block as ``(body, setter)``; ``setter(new_body)`` rebuilds the program."""
    out = []

    def walk(body, setter):
        out.append((body, setter))
        for i, stmt in enumerate(body):
            if not isinstance(stmt, If):
                continue
            for j, (cond, inner) in enumerate(stmt.arms):
                def set_arm(new, body=body, i=i, j=j, setter=setter):
                    s = body[i]
                    arms = s.arms[:j] + ((s.arms[j][0], new),) + s.arms[j + 1:]
                    return setter(body[:i] + (dataclasses.replace(s, arms=arms),) + body[i + 1:])
                walk(inner, set_arm)
            if stmt.orelse:
                def set_else(new, body=body, i=i, setter=setter):
                    s = body[i]
                    return setter(body[:i] + (dataclasses.replace(s, orelse=new),) + body[i + 1:])
                walk(stmt.orelse, set_else)

    walk(program.body, lambda new: Program(new))
    return out


def struct_mutate(program: Program, rng: random.Random) -> Program:
    """Swap two sibling branches, or duplicate a branch with a perturbed copy."""
    moves = []
    for body, setter in _blocks(program):
        for i, stmt in enumerate(body):
            if isinstance(stmt, If) and len(stmt.arms) >= 2:
                moves.append(("arms", body, setter, i))
            if isinstance(stmt, If) and i + 1 < len(body) and isinstance(body[i + 1], If):
                moves.append(("adjacent", body, setter, i))
            if isinstance(stmt, If):
                moves.append(("duplicate", body, setter, i))
    if not moves:
        return param_mutate(program, rng)
    kind, body, setter, i = moves[rng.randrange(len(moves))]
    stmt = body[i]
    if kind == "arms":
        j = rng.randrange(len(stmt.arms) - 1)
        arms = list(stmt.arms)
        arms[j], arms[j + 1] = arms[j + 1], arms[j]
        return setter(body[:i] + (dataclasses.replace(stmt, arms=tuple(arms)),) + body[i + 1:])
    if kind == "adjacent":
        return setter(body[:i] + (body[i + 1], body[i]) + body[i + 2:])
    copy = param_mutate(Program((stmt,)), rng).body[0]
    return setter(body[:i + 1] + (copy,) + body[i + 1:])


def graft(a: Program, b: Program, rng: random.Random) -> Optional[Program]:
    """Insert one top-level ``if`` of ``b`` into ``a`` somewhere before its final statement."""
    donors = [s for s in b.body if isinstance(s, If)]
    if not donors:
        return None
    branch = donors[rng.randrange(len(donors))]
    at = rng.randrange(len(a.body))
    child = Program(a.body[:at] + (branch,) + a.body[at:])
    return child if _ok(child) else None


def _ok(program: Program) -> bool:
    if count_nodes(program) > MAX_NODES:
        return False
    try:
        validate(program)
    except PolicyError:
        return False
    return True


def _parse_parents(parents: Sequence) -> list[tuple[Program, float]]:
    out = []
    for src, fit in parents:
        out.append((parse(src), float(fit)))
    return out


def mock_evolve(parents: Sequence, operator, seed: int) -> str:
    """One offspring source for ``operator`` from ``(source, fitness)`` parents."""
    op = Operator(operator)
    rng = random.Random(seed)
    progs = _parse_parents(parents)
    if op in (Operator.INIT, Operator.EOH_INIT) or not progs:
        return pretty_print(starter(rng.getrandbits(64)))
    best = max(progs, key=lambda p: p[1])[0]
    first = progs[0][0]
    child: Optional[Program] = None
    if op in (Operator.FUNSEARCH_CONTINUE, Operator.EVOENGINEER_REFINE, Operator.EOH_PARAM_MUTATE):
        child = param_mutate(best if op != Operator.EOH_PARAM_MUTATE else first, rng)
    elif op == Operator.EOH_STRUCT_MUTATE:
        child = struct_mutate(first, rng)
    elif op == Operator.EOH_CROSSOVER:
        other = progs[1][0] if len(progs) > 1 else first
        child = graft(first, other, rng)
    elif op == Operator.EOH_EXPLORE:
        child = graft(starter(rng.getrandbits(64)), first, rng)
    if child is None or not _ok(child):
        child = param_mutate(first, rng)
        if not _ok(child):
            child = first
    return pretty_print(child)


class MockBackend:
    """Deterministic, network-free backend that answers with ``mock_evolve``.

    ``garbage_rate`` makes a seeded fraction of replies unusable, alternating
    between prose without a code block and a block that does not parse.
    """

    def __init__(self, garbage_rate: float = 0.0, rationale: bool = True):
        self.garbage_rate = garbage_rate
        self.rationale = rationale
        self.calls = 0

    def reply_text(self, request: PromptRequest) -> str:
        rng = random.Random(request.seed ^ 0x5EED)
        if self.garbage_rate and rng.random() < self.garbage_rate:
            if rng.random() < 0.5:
                return "I could not come up with a better policy this time."
            return "```\nif y > : return 2\n```\n"
        source = mock_evolve(request.parents, request.template_id, request.seed)
        text = f"```\n{source}```\n"
        if self.rationale and request.template_id == Operator.EVOENGINEER_REFINE:
            text = "RATIONALE: adjust one threshold of the current policy.\n\n" + text
        return text

    def complete(self, request: PromptRequest) -> LlmResponse:
        self.calls += 1
        return response_from_text(self.reply_text(request))


class ScriptedBackend:
    """Returns canned replies in order, cycling; handy for extraction tests."""

    def __init__(self, replies: Sequence[str]):
        self.replies = list(replies)
        self.calls = 0

    def complete(self, request: PromptRequest) -> LlmResponse:
        text = self.replies[self.calls % len(self.replies)] if self.replies else ""
        self.calls += 1
        return response_from_text(text)


class RecordingBackend:
    """Wraps another backend and keeps every request/response pair."""

    def __init__(self, inner=None):
        self.inner = inner if inner is not None else MockBackend()
        self.requests: list[PromptRequest] = []
        self.responses: list[LlmResponse] = []

    @property
    def calls(self) -> int:
        return len(self.requests)

    def complete(self, request: PromptRequest) -> LlmResponse:
        self.requests.append(request)
        response = self.inner.complete(request)
        self.responses.append(response)
        return response

    def template_ids(self) -> list[Operator]:
        return [r.template_id for r in self.requests]
