"""Command-line entry point: ``policyevo evolve | eval | report | trace``.

Exit status is 0 on success, 1 for usage, configuration, credential or
policy-file errors, and 2 for failures while running.
"""

from __future__ import annotations

import argparse
import dataclasses
import datetime as _dt
import logging
import sys
import time
from pathlib import Path
from typing import Optional, Sequence

from . import __version__, sim
from .evolution import EvolutionConfig, Strategy, run
from .fitness import evaluate_policy
from .lang.parser import PolicyError
from .llm.gateway import AuthError, LlmGateway
from .llm.mock import MockBackend, RecordingBackend
from .rollout import backend_name, rollout_program
from .runstore import (
    RunConfig,
    SchemaMismatch,
    final_evaluation,
    load_config,
    prepare_run_dir,
    read_policy,
    write_reports,
    write_run,
)
from .sim import ConfigError

EXIT_OK, EXIT_USAGE, EXIT_RUNTIME = 0, 1, 2

log = logging.getLogger("policyevo")


class UsageError(Exception):
    pass


class _Parser(argparse.ArgumentParser):
    def error(self, message):
        raise UsageError(message)


def _seed_list(text: str) -> list[int]:
    try:
        seeds = [int(s) for s in text.split(",") if s.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError("seeds must be comma-separated integers") from None
    if not seeds:
        raise argparse.ArgumentTypeError("empty seed list")
    return seeds


def build_parser() -> argparse.ArgumentParser:
    p = _Parser(prog="policyevo", description="Evolve interpretable lander policies with LLM operators.")
    p.add_argument("--version", action="version", version=f"%(prog)s {__version__}")
    p.add_argument("-v", "--verbose", action="count", default=0)
    sub = p.add_subparsers(dest="command", required=True, parser_class=_Parser)

    d = EvolutionConfig()
    e = sub.add_parser("evolve", help="run one evolution (or a batch with --seeds)")
    e.add_argument("--config", type=Path, help="JSON run configuration")
    e.add_argument("--strategy", choices=[s.value for s in Strategy])
    e.add_argument("--backend", choices=["mock", "live"])
    e.add_argument("--n", type=int, help=f"population size (default {d.n})")
    e.add_argument("--generations", "-G", type=int, help=f"generations (default {d.G})")
    e.add_argument("--episodes", "-K", type=int, help=f"episodes per evaluation (default {d.K})")
    e.add_argument("--seed", type=int, help=f"master seed (default {d.master_seed})")
    e.add_argument("--seeds", type=_seed_list, help="comma-separated master seeds, one run each")
    e.add_argument("--llm-budget", type=int, help="cap on total LLM calls, initialization included")
    e.add_argument("--temperature", type=float, help=f"sampling temperature (default {d.temperature})")
    e.add_argument("--model", help=f"model name (default {d.model_name})")
    e.add_argument("--base-url", help="chat-completion endpoint base URL")
    e.add_argument("--api-key-env", help="name of the environment variable holding the API key")
    e.add_argument("--final-episodes", type=int, help="episodes for the final evaluation (default 100)")
    e.add_argument("--transcript", action="store_true", default=None, help="save code and rationale of each reply")
    e.add_argument("--out", type=Path, help="run directory (batch runs go in seed-<s> subdirectories)")

    v = sub.add_parser("eval", help="evaluate a policy file")
    v.add_argument("policy", type=Path)
    v.add_argument("--episodes", type=int, default=100)
    v.add_argument("--seed", type=int, default=0)
    v.add_argument("--max-steps", type=int, default=1000)
    v.add_argument("--json", action="store_true", help="print the full fitness report as JSON")

    r = sub.add_parser("report", help="build convergence and summary CSVs from run directories")
    r.add_argument("runs", nargs="+", type=Path)
    r.add_argument("--out", type=Path, default=Path("report"))

    t = sub.add_parser("trace", help="write the per-step trace of one episode")
    t.add_argument("policy", type=Path)
    t.add_argument("--seed", type=int, default=0)
    t.add_argument("--max-steps", type=int, default=1000)
    t.add_argument("--out", type=Path, help="output file (default: stdout)")
    return p


def resolve_config(args) -> RunConfig:
    cfg = load_config(args.config) if args.config else RunConfig()
    ev = cfg.evolution
    overrides = {
        "strategy": args.strategy,
        "n": args.n,
        "G": args.generations,
        "K": args.episodes,
        "master_seed": args.seed,
        "llm_budget": args.llm_budget,
        "temperature": args.temperature,
        "model_name": args.model,
    }
    for k, val in overrides.items():
        if val is not None:
            setattr(ev, k, val)
    ev.strategy = Strategy(ev.strategy)
    if args.base_url:
        cfg.endpoint.base_url = args.base_url
    if args.api_key_env:
        cfg.endpoint.api_key_env = args.api_key_env
    for attr, val in (("backend", args.backend), ("seeds", args.seeds), ("final_episodes", args.final_episodes),
                      ("transcript", args.transcript)):
        if val is not None:
            setattr(cfg, attr, val)
    if args.out is not None:
        cfg.output_dir = str(args.out)
    cfg.validate()
    return cfg


def _now() -> str:
    return _dt.datetime.now(_dt.timezone.utc).isoformat(timespec="seconds")


def evolve_one(cfg: RunConfig, run_dir: Path, out=None) -> dict:
    out = out or sys.stdout
    prepare_run_dir(run_dir, cfg)
    if cfg.backend == "live":
        inner = LlmGateway(cfg.endpoint)
    else:
        inner = MockBackend(garbage_rate=cfg.mock_garbage_rate)
    backend = RecordingBackend(inner) if cfg.transcript else inner
    started, t0 = _now(), time.perf_counter()
    log_ = run(cfg.evolution, backend, cfg.sim_config())
    summary = final_evaluation(log_, cfg)
    wall = time.perf_counter() - t0
    summary.wall_time = wall
    transcript = None
    if cfg.transcript:
        transcript = [
            {"template_id": q.template_id.value, "code": a.extracted_code, "rationale": a.extracted_rationale}
            for q, a in zip(backend.requests, backend.responses)
        ]
    metadata = {
        "started_at": started,
        "finished_at": _now(),
        "wall_time": wall,
        "version": __version__,
        "rollout_backend": backend_name(),
    }
    write_run(run_dir, log_, summary, metadata, transcript)
    note = " (LLM budget exhausted)" if summary.stop_reason == "budget_exhausted" else ""
    print(
        f"{run_dir}: strategy={summary.strategy} generations={summary.generations}{note} "
        f"llm_calls={summary.llm_calls} avg_reward={summary.avg_reward:.2f} "
        f"success_rate={summary.success_rate:.2f} loc={summary.loc} "
        f"complexity={summary.cyclomatic_complexity}",
        file=out,
    )
    return summary.to_dict()


def cmd_evolve(args, out=None) -> int:
    out = out or sys.stdout
    cfg = resolve_config(args)
    if cfg.backend == "live":
        # fail fast, before any directory or generation work
        LlmGateway(cfg.endpoint).check_credentials()
    base = Path(cfg.output_dir)
    if cfg.seeds:
        for s in cfg.seeds:
            one = dataclasses.replace(cfg, evolution=dataclasses.replace(cfg.evolution, master_seed=s), seeds=[])
            one.output_dir = str(base / f"seed-{s}")
            evolve_one(one, base / f"seed-{s}", out)
    else:
        evolve_one(cfg, base, out)
    return EXIT_OK


def cmd_eval(args, out=None) -> int:
    out = out or sys.stdout
    if args.episodes < 1:
        raise UsageError("--episodes must be at least 1")
    program = read_policy(args.policy)
    seeds = sim.episode_seeds(args.seed, args.episodes)
    report = evaluate_policy(program, seeds, args.max_steps)
    if args.json:
        print(report.to_json(), file=out)
        return EXIT_OK
    m = report.metrics
    print(f"episodes: {report.K}", file=out)
    print(f"avg_reward: {report.fitness:.4f}", file=out)
    print(f"success_rate: {report.success_rate:.4f}", file=out)
    print(f"loc: {m.lines_of_code}", file=out)
    print(f"cyclomatic_complexity: {m.cyclomatic_complexity}", file=out)
    if report.evaluation_error:
        print(f"evaluation_error: {report.evaluation_error}", file=out)
    return EXIT_OK


def cmd_report(args, out=None) -> int:
    out = out or sys.stdout
    conv, summ = write_reports(args.runs, args.out)
    print(f"wrote {conv}", file=out)
    print(f"wrote {summ}", file=out)
    return EXIT_OK


def cmd_trace(args, out=None) -> int:
    out = out or sys.stdout
    program = read_policy(args.policy)
    trace = rollout_program(program, args.seed, args.max_steps)
    text = "\n".join(trace.to_lines()) + "\n"
    if args.out:
        args.out.write_text(text)
    else:
        out.write(text)
    return EXIT_OK


COMMANDS = {"evolve": cmd_evolve, "eval": cmd_eval, "report": cmd_report, "trace": cmd_trace}


def main(argv: Optional[Sequence[str]] = None) -> int:
    parser = build_parser()
    try:
        args = parser.parse_args(argv)
    except UsageError as exc:
        parser.print_usage(sys.stderr)
        print(f"policyevo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    logging.basicConfig(
        level=logging.WARNING - 10 * min(args.verbose, 2),
        format="%(levelname)s %(name)s: %(message)s",
    )
    try:
        return COMMANDS[args.command](args)
    except UsageError as exc:
        print(f"policyevo: error: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except PolicyError as exc:
        print(f"{getattr(args, 'policy', '')}:{exc.render()}", file=sys.stderr)
        return EXIT_USAGE
    except (ConfigError, AuthError, SchemaMismatch) as exc:
        print(f"policyevo: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_USAGE
    except OSError as exc:
        print(f"policyevo: {exc}", file=sys.stderr)
        return EXIT_USAGE if args.command != "evolve" else EXIT_RUNTIME
    except Exception as exc:  # noqa: BLE001 - last-resort diagnostic
        log.debug("unhandled error", exc_info=True)
        print(f"policyevo: runtime error: {type(exc).__name__}: {exc}", file=sys.stderr)
        return EXIT_RUNTIME


if __name__ == "__main__":
    sys.exit(main())
