"""Pure-Python rollout: the reference tree walker driving ``sim.step``."""

from __future__ import annotations

from . import sim
from .lang.interp import as_policy
from .lang.nodes import Program


def rollout_program(
    program: Program,
    seed: int,
    max_steps: int,
    cfg: sim.SimConfig,
    budget: int,
) -> sim.EpisodeTrace:
    return sim.run_episode(as_policy(program, budget), seed, max_steps, cfg)
