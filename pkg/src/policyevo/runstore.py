"""Run configuration, run directories, and report generation.

A run directory holds everything needed to rebuild its reports::

    config.json        effective configuration, written before the run
    sim.cfg            simulator constants in ``key = value`` form
    generations.jsonl  one record per generation plus a final summary record
    best_policy.pol    best program found, canonical form
    summary.json       held-out reward, success rate, calls and program size
    transcript.jsonl   optional: code and rationale of every reply
    metadata.json      timestamps and wall time; the only non-deterministic file
"""

from __future__ import annotations

import csv
import dataclasses
import io
import json
import statistics
from dataclasses import dataclass, field
from pathlib import Path
from typing import Optional, Sequence

from . import sim
from .evolution import SCHEMA, EvolutionConfig, EvolutionRunLog
from .fitness import evaluate_policy
from .lang.parser import parse
from .llm.gateway import EndpointConfig
from .sim import ConfigError

# Final evaluation of the best program uses its own seed stream, disjoint
# from the per-generation streams 1..G.
FINAL_EVAL_STREAM = 2**32
BACKENDS = ("mock", "live")
_SECRET_KEYS = {"api_key", "key", "token", "secret", "password", "authorization"}


class SchemaMismatch(Exception):
    pass


@dataclass
class RunConfig:
    evolution: EvolutionConfig = field(default_factory=EvolutionConfig)
    sim_overrides: dict = field(default_factory=dict)
    endpoint: EndpointConfig = field(default_factory=EndpointConfig)
    output_dir: str = "runs/latest"
    backend: str = "mock"
    seeds: list = field(default_factory=list)
    final_episodes: int = 100
    transcript: bool = False
    mock_garbage_rate: float = 0.0

    def validate(self) -> None:
        self.evolution.validate()
        self.sim_config()
        if self.backend not in BACKENDS:
            raise ConfigError(f"backend must be one of {', '.join(BACKENDS)}")
        if self.final_episodes < 1:
            raise ConfigError("final_episodes must be at least 1")
        if not 0.0 <= self.mock_garbage_rate <= 1.0:
            raise ConfigError("mock_garbage_rate must be in [0, 1]")

    def sim_config(self) -> sim.SimConfig:
        known = {f.name for f in dataclasses.fields(sim.SimConfig)}
        unknown = set(self.sim_overrides) - known
        if unknown:
            raise ConfigError(f"unknown simulator settings: {', '.join(sorted(unknown))}")
        try:
            return dataclasses.replace(sim.DEFAULT_CONFIG, **self.sim_overrides)
        except TypeError as exc:
            raise ConfigError(str(exc)) from None

    def to_dict(self) -> dict:
        return {
            "evolution": self.evolution.to_dict(),
            "sim": dict(sorted(self.sim_overrides.items())),
            "endpoint": dataclasses.asdict(self.endpoint),
            "output_dir": self.output_dir,
            "backend": self.backend,
            "seeds": list(self.seeds),
            "final_episodes": self.final_episodes,
            "transcript": self.transcript,
            "mock_garbage_rate": self.mock_garbage_rate,
        }

    @classmethod
    def from_dict(cls, d: dict) -> "RunConfig":
        d = dict(d)
        allowed = {"evolution", "sim", "endpoint", "output_dir", "backend", "seeds",
                   "final_episodes", "transcript", "mock_garbage_rate"}
        unknown = set(d) - allowed
        if unknown:
            raise ConfigError(f"unknown config sections: {', '.join(sorted(unknown))}")
        endpoint = d.pop("endpoint", {}) or {}
        leaked = _SECRET_KEYS & {k.lower() for k in endpoint}
        if leaked:
            raise ConfigError("credentials must not appear in config files; set endpoint.api_key_env instead")
        try:
            ep = EndpointConfig(**endpoint)
        except TypeError as exc:
            raise ConfigError(f"endpoint: {exc}") from None
        return cls(
            evolution=EvolutionConfig.from_dict(d.pop("evolution", {}) or {}),
            sim_overrides=dict(d.pop("sim", {}) or {}),
            endpoint=ep,
            **d,
        )


def load_config(path: Path | str) -> RunConfig:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except OSError as exc:
        raise ConfigError(f"cannot read config {path}: {exc.strerror}") from None
    except ValueError as exc:
        raise ConfigError(f"config {path} is not valid JSON: {exc}") from None
    if not isinstance(data, dict):
        raise ConfigError("config file must hold a JSON object")
    return RunConfig.from_dict(data)


def _dump_json(path: Path, obj) -> None:
    path.write_text(json.dumps(obj, indent=2) + "\n", encoding="utf-8")


@dataclass
class RunSummary:
    strategy: str
    avg_reward: float
    success_rate: float
    llm_calls: int
    loc: int
    cyclomatic_complexity: int
    best_fitness_series: list
    generations: int
    stop_reason: str
    final_episodes: int
    wall_time: Optional[float] = None

    def to_dict(self) -> dict:
        d = dataclasses.asdict(self)
        # wall time lives in metadata.json so summary.json stays reproducible
        d.pop("wall_time")
        return d


def final_evaluation(log: EvolutionRunLog, config: RunConfig) -> RunSummary:
    ev = config.evolution
    seeds = sim.episode_seeds(ev.master_seed, config.final_episodes, stream=FINAL_EVAL_STREAM)
    report = evaluate_policy(log.best.program, seeds, ev.max_steps, config.sim_config(), ev.eval_budget)
    return RunSummary(
        strategy=ev.strategy.value,
        avg_reward=report.fitness,
        success_rate=report.success_rate,
        llm_calls=log.summary["llm_calls"],
        loc=report.metrics.lines_of_code,
        cyclomatic_complexity=report.metrics.cyclomatic_complexity,
        best_fitness_series=log.best_so_far_series,
        generations=log.summary["generations_completed"],
        stop_reason=log.summary["stop_reason"],
        final_episodes=config.final_episodes,
    )


def prepare_run_dir(run_dir: Path, config: RunConfig) -> None:
    """Create the directory and write the effective config before the run starts."""
    run_dir.mkdir(parents=True, exist_ok=True)
    # the directory's own location is left out so relocated copies stay identical
    persisted = config.to_dict()
    persisted.pop("output_dir")
    _dump_json(run_dir / "config.json", persisted)
    config.sim_config().dump(run_dir / "sim.cfg")


def write_run(
    run_dir: Path,
    log: EvolutionRunLog,
    summary: RunSummary,
    metadata: dict,
    transcript: Optional[list] = None,
) -> None:
    (run_dir / "generations.jsonl").write_text("\n".join(log.to_lines()) + "\n", encoding="utf-8")
    (run_dir / "best_policy.pol").write_text(log.best.source, encoding="utf-8")
    _dump_json(run_dir / "summary.json", summary.to_dict())
    if transcript is not None:
        lines = [json.dumps(t) for t in transcript]
        (run_dir / "transcript.jsonl").write_text("".join(l + "\n" for l in lines), encoding="utf-8")
    _dump_json(run_dir / "metadata.json", metadata)


# -- reading runs back ------------------------------------------------------------


@dataclass
class StoredRun:
    path: Path
    records: list
    summary: dict
    run_summary: dict
    metadata: dict

    @property
    def strategy(self) -> str:
        return self.summary["strategy"]

    @property
    def best_series(self) -> list[float]:
        return [r["best_so_far"] for r in self.records]


def load_run(run_dir: Path | str) -> StoredRun:
    run_dir = Path(run_dir)
    log_path = run_dir / "generations.jsonl"
    if not log_path.is_file():
        raise SchemaMismatch(f"{run_dir}: no generations.jsonl")
    records, summary = [], None
    for lineno, line in enumerate(log_path.read_text(encoding="utf-8").splitlines(), 1):
        if not line.strip():
            continue
        try:
            rec = json.loads(line)
        except ValueError:
            raise SchemaMismatch(f"{log_path}:{lineno}: not a JSON record") from None
        if not isinstance(rec, dict) or rec.get("schema") != SCHEMA:
            found = rec.get("schema") if isinstance(rec, dict) else None
            raise SchemaMismatch(f"{log_path}:{lineno}: schema {found!r}, expected {SCHEMA!r}")
        if rec.get("record") == "summary":
            summary = rec
        else:
            records.append(rec)
    if summary is None:
        raise SchemaMismatch(f"{log_path}: missing summary record")

    def optional(name):
        p = run_dir / name
        return json.loads(p.read_text(encoding="utf-8")) if p.is_file() else {}

    return StoredRun(run_dir, records, summary, optional("summary.json"), optional("metadata.json"))


def convergence_rows(runs: Sequence[StoredRun]) -> list[dict]:
    """Per strategy and generation: mean and population std of best-so-far.

    Shorter runs are padded with their last value; ``padded_runs`` counts
    how many values in each row are carried forward.
    """
    rows = []
    by_strategy: dict[str, list[StoredRun]] = {}
    for r in runs:
        by_strategy.setdefault(r.strategy, []).append(r)
    for strategy in sorted(by_strategy):
        group = by_strategy[strategy]
        series = [r.best_series for r in group if r.best_series]
        if not series:
            continue
        length = max(len(s) for s in series)
        for g in range(length):
            values = [s[g] if g < len(s) else s[-1] for s in series]
            rows.append({
                "strategy": strategy,
                "generation": g + 1,
                "mean_best_fitness": statistics.fmean(values),
                "std_best_fitness": statistics.pstdev(values),
                "n_runs": len(values),
                "padded_runs": sum(1 for s in series if g >= len(s)),
            })
    return rows


def summary_rows(runs: Sequence[StoredRun]) -> list[dict]:
    """One row per strategy, shaped like a results table: mean over runs."""
    rows = []
    by_strategy: dict[str, list[StoredRun]] = {}
    for r in runs:
        by_strategy.setdefault(r.strategy, []).append(r)
    for strategy in sorted(by_strategy):
        group = by_strategy[strategy]
        sums = [r.run_summary for r in group]
        if any(not s for s in sums):
            raise SchemaMismatch(f"{strategy}: a run is missing summary.json")
        rewards = [s["avg_reward"] for s in sums]
        rows.append({
            "method": strategy,
            "runs": len(group),
            "avg_reward": statistics.fmean(rewards),
            "avg_reward_std": statistics.pstdev(rewards),
            "success_pct": 100.0 * statistics.fmean(s["success_rate"] for s in sums),
            "llm_calls": statistics.fmean(s["llm_calls"] for s in sums),
            "loc": statistics.fmean(s["loc"] for s in sums),
            "cyclomatic_complexity": statistics.fmean(s["cyclomatic_complexity"] for s in sums),
            "generations": statistics.fmean(s["generations"] for s in sums),
        })
    return rows


def rows_to_csv(rows: list[dict], columns: Sequence[str]) -> str:
    buf = io.StringIO()
    w = csv.DictWriter(buf, fieldnames=list(columns), lineterminator="\n")
    w.writeheader()
    for row in rows:
        w.writerow({k: (repr(v) if isinstance(v, float) else v) for k, v in row.items()})
    return buf.getvalue()


CONVERGENCE_COLUMNS = ("strategy", "generation", "mean_best_fitness", "std_best_fitness", "n_runs", "padded_runs")
SUMMARY_COLUMNS = ("method", "runs", "avg_reward", "avg_reward_std", "success_pct", "llm_calls", "loc",
                   "cyclomatic_complexity", "generations")


def write_reports(run_dirs: Sequence[Path | str], out_dir: Path | str) -> tuple[Path, Path]:
    runs = [load_run(d) for d in run_dirs]
    out = Path(out_dir)
    out.mkdir(parents=True, exist_ok=True)
    conv = out / "convergence.csv"
    summ = out / "summary.csv"
    conv.write_text(rows_to_csv(convergence_rows(runs), CONVERGENCE_COLUMNS), encoding="utf-8")
    summ.write_text(rows_to_csv(summary_rows(runs), SUMMARY_COLUMNS), encoding="utf-8")
    return conv, summ


def read_policy(path: Path | str):
    """Parse a policy file; raises ``PolicyError`` or ``OSError``."""
    data = Path(path).read_bytes()
    return parse(data)
