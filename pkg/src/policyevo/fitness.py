"""Fitness: mean episode return over a seeded batch, plus behavioural stats.

Any policy fault in any episode pins the whole report to ``MIN_FITNESS``.
"""

from __future__ import annotations

import functools
import json
from dataclasses import asdict, dataclass
from typing import Optional, Sequence

from . import sim
from .lang.interp import DEFAULT_BUDGET
from .lang.metrics import InterpretabilityMetrics, count_loc, measure
from .lang.nodes import Program
from .lang.parser import PolicyError, parse, parse_syntax
from .rollout import rollout_program
from .sim import MIN_FITNESS, Termination

REPORT_FIELDS = (
    "fitness",
    "episode_rewards",
    "success_rate",
    "K",
    "seeds",
    "failure_stats",
    "metrics",
    "evaluation_error",
)


@dataclass(frozen=True)
class FailureStats:
    crash_count: int
    landed_count: int
    timeout_count: int
    out_of_bounds_count: int
    # None when no episode touched the ground
    mean_touchdown_vy: Optional[float]
    mean_final_abs_x: float
    mean_fuel_used: float
    mean_episode_length: float

    def to_dict(self) -> dict:
        return asdict(self)

    def describe(self) -> str:
        """``name: value`` lines, one per field, for prompts."""
        lines = []
        for key, value in self.to_dict().items():
            if value is None:
                text = "n/a"
            elif isinstance(value, float):
                text = f"{value:.4f}"
            else:
                text = str(value)
            lines.append(f"{key}: {text}")
        return "\n".join(lines)


@dataclass(frozen=True)
class FitnessReport:
    fitness: float
    episode_rewards: tuple
    success_rate: float
    K: int
    seeds: tuple
    failure_stats: FailureStats
    metrics: InterpretabilityMetrics
    evaluation_error: Optional[str] = None

    def to_dict(self) -> dict:
        return {
            "fitness": self.fitness,
            "episode_rewards": list(self.episode_rewards),
            "success_rate": self.success_rate,
            "K": self.K,
            "seeds": list(self.seeds),
            "failure_stats": self.failure_stats.to_dict(),
            "metrics": self.metrics.to_dict(),
            "evaluation_error": self.evaluation_error,
        }

    def to_json(self) -> str:
        return json.dumps(self.to_dict(), sort_keys=False)

    @classmethod
    def from_dict(cls, d: dict) -> "FitnessReport":
        return cls(
            fitness=d["fitness"],
            episode_rewards=tuple(d["episode_rewards"]),
            success_rate=d["success_rate"],
            K=d["K"],
            seeds=tuple(d["seeds"]),
            failure_stats=FailureStats(**d["failure_stats"]),
            metrics=InterpretabilityMetrics(**d["metrics"]),
            evaluation_error=d.get("evaluation_error"),
        )


def mean(values: Sequence[float]) -> float:
    total = 0.0
    for v in values:
        total += v
    return total / len(values)


def failure_stats(traces: Sequence[sim.EpisodeTrace]) -> FailureStats:
    counts = {kind: 0 for kind in Termination}
    touchdown_vy = []
    for t in traces:
        counts[t.termination_kind] += 1
        if t.termination_kind in (Termination.LANDED, Termination.CRASHED) and t.failure is None:
            touchdown_vy.append(t.final_state().vy)
    return FailureStats(
        crash_count=counts[Termination.CRASHED],
        landed_count=counts[Termination.LANDED],
        timeout_count=counts[Termination.TIME_LIMIT],
        out_of_bounds_count=counts[Termination.OUT_OF_BOUNDS],
        mean_touchdown_vy=mean(touchdown_vy) if touchdown_vy else None,
        mean_final_abs_x=mean([abs(t.final_state().x) for t in traces]),
        mean_fuel_used=mean([t.fuel_used for t in traces]),
        mean_episode_length=mean([float(t.steps) for t in traces]),
    )


def report_from_traces(program: Program, traces: Sequence[sim.EpisodeTrace]) -> FitnessReport:
    rewards = tuple(t.total_reward for t in traces)
    k = len(traces)
    errors = [t.failure for t in traces if t.failure is not None]
    error = None
    if errors:
        error = f"{errors[0]} in {len(errors)} of {k} episodes"
    return FitnessReport(
        fitness=MIN_FITNESS if error else mean(rewards),
        episode_rewards=rewards,
        success_rate=sum(1 for t in traces if t.total_reward >= sim.SUCCESS_THRESHOLD) / k,
        K=k,
        seeds=tuple(t.seed for t in traces),
        failure_stats=failure_stats(traces),
        metrics=measure(program),
        evaluation_error=error,
    )


def evaluate_policy(
    program: Program,
    seeds: Sequence[int],
    max_steps: int = 1000,
    cfg: sim.SimConfig = sim.DEFAULT_CONFIG,
    budget: int = DEFAULT_BUDGET,
) -> FitnessReport:
    if not seeds:
        raise ValueError("seeds must be non-empty")
    traces = [rollout_program(program, s, max_steps, cfg, budget) for s in seeds]
    return report_from_traces(program, traces)


def rejected_report(source: str, seeds: Sequence[int], error: PolicyError) -> FitnessReport:
    """Report for text that never became a runnable program.

    Every episode counts as a fault.  Metrics come from the syntax tree when
    only validation failed; otherwise just the line count is known.
    """
    try:
        metrics = measure(parse_syntax(source))
    except PolicyError:
        metrics = InterpretabilityMetrics(count_loc(source), 1, 0)
    k = len(seeds)
    return FitnessReport(
        fitness=MIN_FITNESS,
        episode_rewards=(MIN_FITNESS,) * k,
        success_rate=0.0,
        K=k,
        seeds=tuple(seeds),
        failure_stats=FailureStats(0, 0, 0, 0, None, 0.0, 0.0, 0.0),
        metrics=metrics,
        evaluation_error=f"{type(error).__name__}: {error.render()}",
    )


def evaluate_source(
    source: str,
    seeds: Sequence[int],
    max_steps: int = 1000,
    cfg: sim.SimConfig = sim.DEFAULT_CONFIG,
    budget: int = DEFAULT_BUDGET,
) -> FitnessReport:
    """Parse then evaluate; text that does not parse scores ``MIN_FITNESS``."""
    if not seeds:
        raise ValueError("seeds must be non-empty")
    try:
        program = parse(source)
    except PolicyError as exc:
        return rejected_report(source, seeds, exc)
    return evaluate_policy(program, seeds, max_steps, cfg, budget)


def rank_key(report: FitnessReport) -> tuple:
    """Sort key: ascending order of this key is best-first."""
    return (-report.fitness, -report.success_rate, report.metrics.cyclomatic_complexity)


def compare_fitness(a: FitnessReport, b: FitnessReport) -> int:
    """Negative when ``a`` ranks ahead of ``b``, zero on a full tie.

    Fitness descending, then success rate descending, then lower
    cyclomatic complexity.  Remaining ties fall back to insertion order,
    which a stable sort provides.
    """
    ka, kb = rank_key(a), rank_key(b)
    return (ka > kb) - (ka < kb)


sort_key = functools.cmp_to_key(compare_fitness)
