"""Episode rollout for DSL programs, on the native kernel when available.

The compiled kernel is picked at import time.  Set ``POLICYEVO_PURE_PYTHON=1``
to force the pure-Python path; both produce bit-identical traces.
"""

from __future__ import annotations

import dataclasses
import functools
import os

import numpy as np

from . import _fallback, sim
from .lang.compiler import Bytecode, compile_program
from .lang.interp import DEFAULT_BUDGET
from .lang.nodes import Program

try:
    from . import _kernel
except ImportError:  # extension not built
    _kernel = None

if _kernel is not None:
    _fields = tuple(f.name for f in dataclasses.fields(sim.SimConfig))
    if _fields != tuple(_kernel.PARAM_NAMES):
        raise ImportError("native kernel parameter layout is out of date; rebuild the extension")

HAVE_KERNEL = _kernel is not None
USE_KERNEL = HAVE_KERNEL and not os.environ.get("POLICYEVO_PURE_PYTHON")

# VM status codes -> the interpreter's exception names
_VM_FAULTS = {1: "BudgetExceeded", 2: "ArithmeticFault", 3: "InvalidActionResult"}


def backend_name() -> str:
    return "native" if USE_KERNEL else "python"


@functools.lru_cache(maxsize=4096)
def _compiled(program: Program) -> Bytecode:
    return compile_program(program)


def _native_rollout(program, seed, max_steps, cfg, budget) -> sim.EpisodeTrace:
    bc = _compiled(program)
    init = np.array(sim.reset(seed, cfg), dtype=np.float64)
    states = np.empty((max_steps + 1, 8), dtype=np.float64)
    actions = np.empty(max_steps, dtype=np.int64)
    rewards = np.empty(max_steps, dtype=np.float64)
    steps, kind, status, total, fuel = _kernel.rollout(
        bc.ops, bc.args, bc.consts, bc.n_locals, bc.max_stack,
        init, cfg.params(), max_steps, budget, states, actions, rewards,
    )
    failure = _VM_FAULTS.get(status)
    if failure is not None:
        total = sim.MIN_FITNESS
    return sim.EpisodeTrace(
        states=[sim.LanderState(*row) for row in states[: steps + 1].tolist()],
        actions=actions[:steps].tolist(),
        rewards=rewards[:steps].tolist(),
        total_reward=total,
        success=total >= sim.SUCCESS_THRESHOLD,
        termination_kind=sim.TERMINATION_CODES[kind],
        fuel_used=fuel,
        steps=steps,
        seed=seed,
        failure=failure,
    )


def rollout_program(
    program: Program,
    seed: int,
    max_steps: int = 1000,
    cfg: sim.SimConfig = sim.DEFAULT_CONFIG,
    budget: int = DEFAULT_BUDGET,
    native: bool | None = None,
) -> sim.EpisodeTrace:
    """Run ``program`` for one episode from ``reset(seed)``.

    ``native`` overrides the import-time choice; asking for the kernel when
    it is not built raises ``RuntimeError``.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    use = USE_KERNEL if native is None else native
    if use:
        if _kernel is None:
            raise RuntimeError("native kernel is not built")
        return _native_rollout(program, seed, max_steps, cfg, budget)
    return _fallback.rollout_program(program, seed, max_steps, cfg, budget)
