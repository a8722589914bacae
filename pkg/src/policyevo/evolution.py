"""Population-based policy search with language-model variation operators.

One run is: initialize, then per generation evaluate, select, ask the
backend for offspring, evaluate them and keep the best ``n`` of the pooled
parents and offspring.  Every individual of a generation is scored on the
same episode seeds (common random numbers); seeds are redrawn each
generation so no program can overfit a fixed batch.
"""

from __future__ import annotations

import dataclasses
import enum
import json
import logging
from dataclasses import dataclass, field
from typing import Iterable, Iterator, Optional, Sequence

import numpy as np

from . import sim
from .fitness import FitnessReport, evaluate_policy, mean, sort_key
from .lang.interp import DEFAULT_BUDGET
from .lang.parser import PolicyError, parse
from .lang.printer import pretty_print
from .lang.nodes import Program
from .llm.gateway import AuthError, Backend, GatewayError, LlmResponse
from .llm.prompts import EOH_CYCLE, Operator, PromptRequest, format_program, format_progression, load_text, render, template_version
from .sim import ConfigError

log = logging.getLogger(__name__)

SCHEMA = "policyevo.run/1"
TRIVIAL_SOURCE = "return 0\n"


class Strategy(str, enum.Enum):
    FUNSEARCH = "funsearch"
    EOH = "eoh"
    EVOENGINEER = "evoengineer"


OFFSPRING_PER_GENERATION = {Strategy.FUNSEARCH: 3, Strategy.EOH: 5, Strategy.EVOENGINEER: 3}

# Parents shown to each operator.
PARENTS_PER_OPERATOR = {
    Operator.FUNSEARCH_CONTINUE: 2,
    Operator.EOH_INIT: 0,
    Operator.EOH_EXPLORE: 2,
    Operator.EOH_CROSSOVER: 2,
    Operator.EOH_STRUCT_MUTATE: 1,
    Operator.EOH_PARAM_MUTATE: 1,
    Operator.EVOENGINEER_REFINE: 1,
}


class InitExhausted(RuntimeError):
    pass


@dataclass(frozen=True)
class Individual:
    id: str
    source: str
    program: Program = field(repr=False)
    report: Optional[FitnessReport] = field(default=None, repr=False)
    generation_born: int = 0
    parent_ids: tuple = ()
    operator: Operator = Operator.INIT

    @property
    def fitness(self) -> float:
        if self.report is None:
            raise ValueError(f"{self.id} has not been evaluated")
        return self.report.fitness


@dataclass
class EvolutionConfig:
    n: int = 10
    G: int = 20
    K: int = 10
    strategy: Strategy = Strategy.EVOENGINEER
    master_seed: int = 0
    # None means no cap
    llm_budget: Optional[int] = None
    tournament_size: int = 3
    init_retry_cap: int = 10
    max_steps: int = 1000
    eval_budget: int = DEFAULT_BUDGET
    temperature: float = 0.7
    model_name: str = "gpt-4o"
    max_response_tokens: int = 2048

    def __post_init__(self):
        try:
            self.strategy = Strategy(self.strategy)
        except ValueError:
            raise ConfigError(f"unknown strategy {self.strategy!r}") from None

    def validate(self) -> None:
        if self.n < 2:
            raise ConfigError("population size n must be at least 2")
        if self.G < 1:
            raise ConfigError("generations G must be at least 1")
        if self.K < 1:
            raise ConfigError("episodes K must be at least 1")
        if self.llm_budget is not None and self.llm_budget < self.n:
            raise ConfigError("llm_budget must leave room for initialization (>= n)")
        if self.tournament_size < 1:
            raise ConfigError("tournament_size must be at least 1")
        if self.init_retry_cap < 0 or self.max_steps < 1 or self.eval_budget < 1:
            raise ConfigError("init_retry_cap, max_steps and eval_budget must be positive")
        if not 0 <= self.master_seed < 2**64:
            raise ConfigError("master_seed must be an unsigned 64-bit integer")

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        d["strategy"] = self.strategy.value
        return d

    @classmethod
    def from_dict(cls, d: dict) -> "EvolutionConfig":
        known = {f.name for f in dataclasses.fields(cls)}
        unknown = set(d) - known
        if unknown:
            raise ConfigError(f"unknown evolution settings: {', '.join(sorted(unknown))}")
        return cls(**d)


@dataclass(frozen=True)
class GenerationContext:
    generation: int
    best_so_far: float
    seeds: tuple
    master_seed: int


@dataclass
class EvolutionRunLog:
    records: list
    summary: dict
    best: Individual

    def to_lines(self) -> list[str]:
        return [json.dumps(r) for r in self.records] + [json.dumps(self.summary)]

    @property
    def best_so_far_series(self) -> list[float]:
        return [r["best_so_far"] for r in self.records]


def derive_seed(master_seed: int, *keys: int) -> int:
    return int(np.random.SeedSequence([master_seed, *keys]).generate_state(1, dtype=np.uint64)[0])


def generation_seeds(master_seed: int, generation: int, K: int) -> tuple:
    return tuple(sim.episode_seeds(master_seed, K, stream=generation))


def parse_candidate(text: Optional[str]) -> Optional[Program]:
    if text is None:
        return None
    try:
        return parse(text)
    except PolicyError as exc:
        log.info("discarding candidate: %s", exc.render())
        return None


# -- initialization ------------------------------------------------------------


class _Ids:
    def __init__(self):
        self.next = 0

    def __call__(self) -> str:
        self.next += 1
        return f"ind-{self.next:05d}"


def initialize(
    config: EvolutionConfig,
    source: Iterable[Optional[str]],
    new_id=None,
) -> tuple[list[Individual], int]:
    """Collect ``n`` distinct valid programs; returns ``(population, discarded)``.

    Unusable or duplicate candidates are discarded.  Once more than
    ``init_retry_cap`` have been discarded, or the source runs dry, the
    remaining slots get the trivial ``return 0`` program.
    """
    new_id = new_id or _Ids()
    pop: list[Individual] = []
    seen: set[str] = set()
    discarded = 0
    it: Iterator = iter(source)
    while len(pop) < config.n and discarded <= config.init_retry_cap:
        try:
            text = next(it)
        except StopIteration:
            break
        program = parse_candidate(text)
        canon = pretty_print(program) if program is not None else None
        if canon is None or canon in seen:
            discarded += 1
            continue
        seen.add(canon)
        pop.append(Individual(new_id(), canon, program, operator=Operator.INIT))
    if discarded:
        log.info("initialization discarded %d candidate(s)", discarded)
    if len(pop) < config.n:
        try:
            trivial = parse(TRIVIAL_SOURCE)
        except PolicyError as exc:  # pragma: no cover - grammar bug
            raise InitExhausted(str(exc)) from None
        while len(pop) < config.n:
            pop.append(Individual(new_id(), TRIVIAL_SOURCE, trivial, operator=Operator.INIT))
    return pop, discarded


# -- selection and replacement --------------------------------------------------


def tournament(pop: Sequence[Individual], rng: np.random.Generator, size: int) -> Individual:
    """Best of ``size`` uniform draws with replacement; ties go to the lower index."""
    picks = rng.integers(0, len(pop), size=size)
    best = int(picks[0])
    for i in picks[1:]:
        i = int(i)
        c = (sort_key(pop[i].report), i)
        if c < (sort_key(pop[best].report), best):
            best = i
    return pop[best]


def select_parents(pop: Sequence[Individual], rng: np.random.Generator, count: int, size: int = 3) -> list[Individual]:
    return [tournament(pop, rng, size) for _ in range(count)]


def replace(pop: Sequence[Individual], offspring: Sequence[Individual], n: Optional[int] = None) -> list[Individual]:
    """Elitist truncation of parents plus offspring (stable, parents first)."""
    n = len(pop) if n is None else n
    pool = list(pop) + list(offspring)
    return sorted(pool, key=lambda ind: sort_key(ind.report))[:n]


# -- offspring requests ----------------------------------------------------------


def operator_plan(strategy: Strategy) -> list[Operator]:
    if strategy == Strategy.FUNSEARCH:
        return [Operator.FUNSEARCH_CONTINUE] * OFFSPRING_PER_GENERATION[strategy]
    if strategy == Strategy.EOH:
        return list(EOH_CYCLE)
    return [Operator.EVOENGINEER_REFINE] * OFFSPRING_PER_GENERATION[strategy]


def fitness_summary(report: FitnessReport) -> str:
    rewards = ", ".join(f"{r:.2f}" for r in report.episode_rewards)
    lines = [
        f"mean reward: {report.fitness:.2f}",
        f"success rate: {report.success_rate:.2f}",
        f"episode rewards: {rewards}",
    ]
    if report.evaluation_error:
        lines.append(f"evaluation error: {report.evaluation_error}")
    return "\n".join(lines)


def _distinct_fitness(parents: Sequence[Individual]) -> list[Individual]:
    """Drop parents whose fitness repeats, so the progression is strictly ordered."""
    out, seen = [], set()
    for p in parents:
        if p.fitness not in seen:
            seen.add(p.fitness)
            out.append(p)
    return out


def build_request(
    op: Operator,
    parents: Sequence[Individual],
    ctx: GenerationContext,
    config: EvolutionConfig,
) -> PromptRequest:
    task = load_text("task.txt").strip()
    b: dict = {"task_description": task}
    if op == Operator.FUNSEARCH_CONTINUE:
        parents = sorted(_distinct_fitness(parents), key=lambda p: p.fitness)
        b["parent_programs"] = format_progression([(p.source, p.fitness) for p in parents])
        b["next_version"] = len(parents)
    elif op == Operator.EOH_EXPLORE:
        b["parent_programs"] = "\n\n".join(
            format_program(p.source, p.fitness, f"Policy {i + 1}") for i, p in enumerate(parents)
        )
    elif op == Operator.EOH_CROSSOVER:
        b["parent_a"] = format_program(parents[0].source, parents[0].fitness)
        b["parent_b"] = format_program(parents[1].source, parents[1].fitness)
    elif op in (Operator.EOH_STRUCT_MUTATE, Operator.EOH_PARAM_MUTATE):
        b["parent"] = format_program(parents[0].source, parents[0].fitness)
    elif op == Operator.EVOENGINEER_REFINE:
        p = parents[0]
        b["domain_hints"] = load_text("domain_hints.txt").strip()
        b["parent"] = format_program(p.source)
        b["episodes"] = p.report.K
        b["fitness_summary"] = fitness_summary(p.report)
        b["failure_stats"] = p.report.failure_stats.describe()
        b["best_so_far"] = f"{ctx.best_so_far:.2f}"
    req = render(
        op,
        b,
        temperature=config.temperature,
        model_name=config.model_name,
        max_response_tokens=config.max_response_tokens,
    )
    return dataclasses.replace(req, parents=tuple((p.source, p.fitness) for p in parents))


def candidate_from_response(op: Operator, response: LlmResponse) -> Optional[str]:
    if response.extracted_code is None:
        log.info("discarding %s response: no fenced code block", op.value)
        return None
    if op == Operator.EVOENGINEER_REFINE and response.extracted_rationale is None:
        log.info("discarding %s response: no RATIONALE section", op.value)
        return None
    return response.extracted_code


# -- the run ---------------------------------------------------------------------


class Engine:
    """Drives one run against a backend, counting every dispatched request."""

    def __init__(self, config: EvolutionConfig, backend: Backend, cfg: sim.SimConfig = sim.DEFAULT_CONFIG):
        config.validate()
        self.config = config
        self.backend = backend
        self.cfg = cfg
        self.calls = 0
        self.new_id = _Ids()
        self._cache: dict = {}

    def budget_left(self) -> bool:
        cap = self.config.llm_budget
        return cap is None or self.calls < cap

    def dispatch(self, request: PromptRequest) -> Optional[LlmResponse]:
        self.calls += 1
        try:
            return self.backend.complete(request)
        except AuthError:
            raise
        except GatewayError as exc:
            log.warning("request %s failed: %s", request.template_id.value, exc)
            return None

    def evaluate(self, ind: Individual, seeds: tuple) -> Individual:
        key = (ind.source, seeds)
        report = self._cache.get(key)
        if report is None:
            c = self.config
            report = evaluate_policy(ind.program, seeds, c.max_steps, self.cfg, c.eval_budget)
            self._cache[key] = report
        return dataclasses.replace(ind, report=report)

    def init_source(self) -> Iterator[Optional[str]]:
        c = self.config
        i = 0
        while self.budget_left():
            req = render(
                Operator.INIT,
                {"task_description": load_text("task.txt").strip()},
                temperature=c.temperature,
                model_name=c.model_name,
                max_response_tokens=c.max_response_tokens,
            )
            req = dataclasses.replace(req, seed=derive_seed(c.master_seed, 0, i))
            i += 1
            resp = self.dispatch(req)
            yield None if resp is None else candidate_from_response(Operator.INIT, resp)

    def llm_evolve(
        self, pop: Sequence[Individual], rng: np.random.Generator, ctx: GenerationContext
    ) -> tuple[list[tuple[str, Operator, tuple]], int, bool]:
        """Request one offspring per slot; returns (candidates, discarded, truncated)."""
        c = self.config
        out, discarded = [], 0
        for slot, op in enumerate(operator_plan(c.strategy)):
            if not self.budget_left():
                return out, discarded, True
            parents = select_parents(pop, rng, PARENTS_PER_OPERATOR[op], c.tournament_size)
            req = build_request(op, parents, ctx, c)
            req = dataclasses.replace(req, seed=derive_seed(c.master_seed, ctx.generation, slot + 1))
            resp = self.dispatch(req)
            text = None if resp is None else candidate_from_response(op, resp)
            if text is None:
                discarded += 1
                continue
            out.append((text, op, tuple(p.id for p in parents)))
        return out, discarded, False

    def run(self) -> EvolutionRunLog:
        c = self.config
        pop, init_discarded = initialize(c, self.init_source(), self.new_id)
        records: list[dict] = []
        best: Optional[Individual] = None
        initial_best = None
        stop_reason = "completed"
        for g in range(1, c.G + 1):
            if g > 1 and not self.budget_left():
                stop_reason = "budget_exhausted"
                break
            seeds = generation_seeds(c.master_seed, g, c.K)
            self._cache.clear()
            pop = [self.evaluate(ind, seeds) for ind in pop]
            pop = replace(pop, [], c.n)
            if initial_best is None:
                initial_best = pop[0].fitness
            ctx = GenerationContext(g, best.fitness if best else pop[0].fitness, seeds, c.master_seed)
            rng = np.random.default_rng(derive_seed(c.master_seed, g, 0))
            candidates, discarded, truncated = self.llm_evolve(pop, rng, ctx)
            offspring = []
            for text, op, parent_ids in candidates:
                program = parse_candidate(text)
                if program is None:
                    discarded += 1
                    continue
                ind = Individual(self.new_id(), pretty_print(program), program, None, g, parent_ids, op)
                offspring.append(self.evaluate(ind, seeds))
            pop = replace(pop, offspring, c.n)
            if best is None or pop[0].fitness > best.fitness:
                best = pop[0]
            records.append(self._record(g, pop, best, len(offspring), discarded, truncated))
            if truncated:
                stop_reason = "budget_exhausted"
                break
        assert best is not None
        summary = {
            "schema": SCHEMA,
            "record": "summary",
            "strategy": c.strategy.value,
            "generations_completed": len(records),
            "initial_best_fitness": initial_best,
            "best_fitness": best.fitness,
            "best_success_rate": best.report.success_rate,
            "best_generation_born": best.generation_born,
            "best_id": best.id,
            "llm_calls": self.calls,
            "llm_budget": c.llm_budget,
            "init_discarded": init_discarded,
            "stop_reason": stop_reason,
            "template_version": template_version(),
            "best_source": best.source,
            "best_metrics": best.report.metrics.to_dict(),
        }
        return EvolutionRunLog(records, summary, best)

    def _record(self, g, pop, best, n_offspring, discarded, truncated) -> dict:
        fits = [ind.fitness for ind in pop]
        top = pop[0]
        return {
            "schema": SCHEMA,
            "record": "generation",
            "generation": g,
            "best_fitness": top.fitness,
            "best_so_far": best.fitness,
            "mean_fitness": mean(fits),
            "fitness_distribution": fits,
            "best_success_rate": top.report.success_rate,
            "llm_calls": self.calls,
            "offspring": n_offspring,
            "discarded": discarded,
            "partial": truncated,
            "best_id": top.id,
            "best_source": top.source,
            "best_metrics": top.report.metrics.to_dict(),
        }


def run(config: EvolutionConfig, backend: Backend, cfg: sim.SimConfig = sim.DEFAULT_CONFIG) -> EvolutionRunLog:
    return Engine(config, backend, cfg).run()
