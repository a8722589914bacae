"""Prompt templates: versioned ``{placeholder}`` text files rendered into requests."""

from __future__ import annotations

import enum
import functools
import string
from dataclasses import dataclass, field
from pathlib import Path
from typing import Mapping

TEMPLATE_DIR = Path(__file__).parent / "templates"


class Operator(str, enum.Enum):
    INIT = "init"
    FUNSEARCH_CONTINUE = "funsearch_continue"
    EOH_INIT = "eoh_init"
    EOH_EXPLORE = "eoh_explore"
    EOH_CROSSOVER = "eoh_crossover"
    EOH_STRUCT_MUTATE = "eoh_struct_mutate"
    EOH_PARAM_MUTATE = "eoh_param_mutate"
    EVOENGINEER_REFINE = "evoengineer_refine"


EOH_CYCLE = (
    Operator.EOH_INIT,
    Operator.EOH_EXPLORE,
    Operator.EOH_CROSSOVER,
    Operator.EOH_STRUCT_MUTATE,
    Operator.EOH_PARAM_MUTATE,
)


class MissingBinding(KeyError):
    pass


@functools.lru_cache(maxsize=None)
def load_text(name: str) -> str:
    return (TEMPLATE_DIR / name).read_text(encoding="utf-8")


def template_version() -> str:
    return load_text("VERSION").strip()


def placeholders(text: str) -> list[str]:
    return [f for _, f, _, _ in string.Formatter().parse(text) if f is not None]


@dataclass(frozen=True)
class PromptRequest:
    template_id: Operator
    system_text: str
    user_text: str
    temperature: float = 0.7
    model_name: str = "gpt-4o"
    max_response_tokens: int = 2048
    template_version: str = ""
    # Structured copies of what the prompt shows, for offline backends only;
    # live transports send nothing but the rendered texts.
    parents: tuple = field(default=(), compare=False)
    seed: int = field(default=0, compare=False)


def render(
    template_id: Operator,
    bindings: Mapping[str, object],
    *,
    temperature: float = 0.7,
    model_name: str = "gpt-4o",
    max_response_tokens: int = 2048,
) -> PromptRequest:
    template_id = Operator(template_id)
    text = load_text(f"{template_id.value}.txt")
    missing = [p for p in placeholders(text) if p not in bindings]
    if missing:
        raise MissingBinding(f"template {template_id.value!r} needs {', '.join(missing)}")
    user = text.format_map({k: str(v) for k, v in bindings.items()})
    return PromptRequest(
        template_id=template_id,
        system_text=load_text("system.txt"),
        user_text=user,
        temperature=temperature,
        model_name=model_name,
        max_response_tokens=max_response_tokens,
        template_version=template_version(),
    )


def format_program(source: str, fitness: float | None = None, label: str = "") -> str:
    head = label
    if fitness is not None:
        head = f"{label} (fitness {fitness:.2f})" if label else f"fitness {fitness:.2f}"
    return f"{head}:\n```\n{source.rstrip()}\n```" if head else f"```\n{source.rstrip()}\n```"


def format_progression(parents) -> str:
    """Programs sorted worst to best, each annotated with its fitness."""
    ordered = sorted(parents, key=lambda p: p[1])
    return "\n\n".join(
        format_program(src, fit, f"Version {i}") for i, (src, fit) in enumerate(ordered)
    )
