"""Deterministic 2D lunar-lander simulator.

The lander is a point mass with a scalar attitude over a flat pad centred at
``x = 0``.  Dynamics are noise-free; the only randomness is the spawn state
drawn in :func:`reset`.  Every arithmetic step here is mirrored operation for
operation in ``_kernel.pyx`` so both rollout paths produce bit-identical
traces.  Keep the two in sync.

Sign conventions: ``angle > 0`` is a tilt to the right (clockwise).  Action 1
(left engine) pushes along the body +x axis and adds positive torque; action 3
(right engine) does the opposite.  Action 2 fires the main engine along the
body "up" axis.
"""

from __future__ import annotations

import dataclasses
import enum
import math
from dataclasses import dataclass
from pathlib import Path
from typing import Callable, NamedTuple, Optional, Sequence

import numpy as np

# Shared sentinel: a failed episode's total reward and a faulty policy's fitness.
MIN_FITNESS = -1000.0

SUCCESS_THRESHOLD = 200.0

ACTION_NAMES = ("noop", "left_engine", "main_engine", "right_engine")

STATE_FIELDS = ("x", "y", "vx", "vy", "angle", "w", "left_leg", "right_leg")


class SimError(Exception):
    pass


class InvalidAction(SimError):
    pass


class ConfigError(SimError):
    pass


class Termination(str, enum.Enum):
    RUNNING = "Running"
    LANDED = "Landed"
    CRASHED = "Crashed"
    OUT_OF_BOUNDS = "OutOfBounds"
    TIME_LIMIT = "TimeLimit"


# Integer codes shared with the compiled kernel.
TERMINATION_CODES = {
    0: Termination.RUNNING,
    1: Termination.LANDED,
    2: Termination.CRASHED,
    3: Termination.OUT_OF_BOUNDS,
    4: Termination.TIME_LIMIT,
}


class LanderState(NamedTuple):
    x: float
    y: float
    vx: float
    vy: float
    angle: float
    w: float
    left_leg: float
    right_leg: float

    def is_finite(self) -> bool:
        return all(math.isfinite(v) for v in self)


@dataclass(frozen=True)
class SimConfig:
    """Physics, reward and spawn constants.

    Units are abstract "state units"; the scale is chosen so that the
    thresholds in the reference policy (``y > 0.6``, ``vy < -1.0``,
    ``|angle| > 0.05``) are meaningful control boundaries.
    """

    dt: float = 0.02
    gravity: float = 1.0
    main_accel: float = 2.0
    side_accel: float = 0.2
    # one side-engine step changes w by side_torque * dt = 0.05 rad/s
    side_torque: float = 2.5
    main_cost: float = 0.30
    side_cost: float = 0.03
    spawn_y_min: float = 1.2
    spawn_y_max: float = 1.4
    spawn_x: float = 0.2
    spawn_vx: float = 0.1
    spawn_vy: float = 0.2
    spawn_angle: float = 0.05
    spawn_w: float = 0.05
    half_width: float = 1.5
    ceiling: float = 2.0
    leg_span: float = 0.1
    leg_compliance: float = 0.02
    landing_vx: float = 0.25
    landing_vy: float = 0.25
    landing_angle: float = 0.15
    shape_dist: float = 120.0
    shape_speed: float = 60.0
    shape_angle: float = 40.0
    shape_leg: float = 10.0
    speed_cap: float = 2.5
    landing_bonus: float = 100.0
    crash_penalty: float = 100.0

    def __post_init__(self):
        for f in dataclasses.fields(self):
            v = getattr(self, f.name)
            if not isinstance(v, (int, float)) or not math.isfinite(v):
                raise ConfigError(f"{f.name} must be a finite number, got {v!r}")
        if self.dt <= 0:
            raise ConfigError("dt must be positive")
        if not 0 < self.spawn_y_min <= self.spawn_y_max < self.ceiling:
            raise ConfigError("spawn band must satisfy 0 < y_min <= y_max < ceiling")
        if self.spawn_x >= self.half_width:
            raise ConfigError("spawn_x must be inside the world")

    def params(self) -> np.ndarray:
        """Constants as a float64 vector, in field order (kernel ABI)."""
        return np.array(dataclasses.astuple(self), dtype=np.float64)

    def worst_case_total(self, max_steps: int) -> float:
        """Lower bound on any episode's total reward under this config."""
        box = math.sqrt(self.half_width**2 + self.ceiling**2)
        # the terminal step may overshoot the walls by at most one step of travel;
        # speed inside the box is bounded by accelerating across its diagonal
        accel = self.gravity + self.main_accel + self.side_accel
        spawn_speed = math.hypot(self.spawn_vx, self.spawn_vy)
        v_max = spawn_speed + math.sqrt(2.0 * accel * 2.0 * box) + accel * self.dt
        max_dist = box + v_max * self.dt
        phi_min = -(
            self.shape_dist * max_dist
            + self.shape_speed * self.speed_cap
            + self.shape_angle * math.pi
        )
        # potential at spawn is at most -shape_dist * spawn_y_min
        phi0_max = -self.shape_dist * self.spawn_y_min
        fuel = max(self.main_cost, self.side_cost) * max_steps
        return phi_min - phi0_max - fuel - max(self.crash_penalty, 0.0)

    def dump(self, path: Path | str) -> None:
        write_config_text(self, path)

    @classmethod
    def load(cls, path: Path | str) -> "SimConfig":
        return read_config_text(path)


DEFAULT_CONFIG = SimConfig()


def write_config_text(cfg: SimConfig, path: Path | str) -> None:
    lines = ["# lander simulator constants: key = value"]
    for f in dataclasses.fields(cfg):
        lines.append(f"{f.name} = {getattr(cfg, f.name)!r}")
    Path(path).write_text("\n".join(lines) + "\n")


def parse_config_text(text: str) -> SimConfig:
    known = {f.name for f in dataclasses.fields(SimConfig)}
    values = {}
    for lineno, raw in enumerate(text.splitlines(), 1):
        line = raw.split("#", 1)[0].strip()
        if not line:
            continue
        if "=" not in line:
            raise ConfigError(f"line {lineno}: expected 'key = value'")
        key, _, value = (s.strip() for s in line.partition("="))
        if key not in known:
            raise ConfigError(f"line {lineno}: unknown key {key!r}")
        try:
            values[key] = float(value)
        except ValueError:
            raise ConfigError(f"line {lineno}: {key} is not a number") from None
    return SimConfig(**values)


def read_config_text(path: Path | str) -> SimConfig:
    return parse_config_text(Path(path).read_text())


class StepOutcome(NamedTuple):
    next_state: LanderState
    reward: float
    terminated: bool
    termination_kind: Termination
    cost: float


@dataclass
class EpisodeTrace:
    states: list
    actions: list
    rewards: list
    total_reward: float
    success: bool
    termination_kind: Termination
    fuel_used: float
    steps: int
    seed: int = 0
    # name of the policy fault that aborted the episode, if any
    failure: Optional[str] = None

    def final_state(self) -> LanderState:
        return self.states[-1]

    def to_lines(self) -> list[str]:
        """One CSV line per step (11 columns) plus a header and a trailer."""
        out = ["step," + ",".join(STATE_FIELDS) + ",action,reward"]
        for i, (s, a, r) in enumerate(zip(self.states, self.actions, self.rewards)):
            out.append(f"{i}," + ",".join(repr(v) for v in s) + f",{a},{r!r}")
        trailer = (
            f"# termination={self.termination_kind.value} steps={self.steps}"
            f" total_reward={self.total_reward!r} success={str(self.success).lower()}"
        )
        if self.failure:
            trailer += f" failure={self.failure}"
        out.append(trailer)
        return out

    def write(self, path: Path | str) -> None:
        Path(path).write_text("\n".join(self.to_lines()) + "\n")


def reset(seed: int, cfg: SimConfig = DEFAULT_CONFIG) -> LanderState:
    if seed < 0 or seed >= 2**64:
        raise ValueError("seed must be an unsigned 64-bit integer")
    rng = np.random.default_rng(seed)
    y = float(rng.uniform(cfg.spawn_y_min, cfg.spawn_y_max))
    u = rng.uniform(-1.0, 1.0, size=5)
    return LanderState(
        x=float(u[0] * cfg.spawn_x),
        y=y,
        vx=float(u[1] * cfg.spawn_vx),
        # spawn falling or at rest, never rising
        vy=float(-abs(u[2]) * cfg.spawn_vy),
        angle=float(u[3] * cfg.spawn_angle),
        w=float(u[4] * cfg.spawn_w),
        left_leg=0.0,
        right_leg=0.0,
    )


def potential(s: LanderState, cfg: SimConfig = DEFAULT_CONFIG) -> float:
    dist = math.sqrt(s.x * s.x + s.y * s.y)
    speed = math.sqrt(s.vx * s.vx + s.vy * s.vy)
    if cfg.speed_cap < speed:
        speed = cfg.speed_cap
    return (
        -(cfg.shape_dist * dist + cfg.shape_speed * speed + cfg.shape_angle * abs(s.angle))
        + cfg.shape_leg * (s.left_leg + s.right_leg)
    )


def _valid_action(action) -> bool:
    return (
        isinstance(action, (int, np.integer))
        and not isinstance(action, bool)
        and 0 <= action <= 3
    )


def step(
    state: LanderState,
    action: int,
    rng_stream: Optional[np.random.Generator] = None,
    cfg: SimConfig = DEFAULT_CONFIG,
) -> StepOutcome:
    """Advance one fixed timestep.

    ``rng_stream`` is accepted for interface symmetry; the dynamics are
    noise-free and never draw from it.
    """
    if not _valid_action(action):
        raise InvalidAction(f"action must be an integer in 0..3, got {action!r}")
    action = int(action)
    if not state.is_finite():
        return _abort(state, cfg)

    x, y, vx, vy, ang, w, _, _ = state
    dt = cfg.dt
    ax = 0.0
    ay = 0.0
    alpha = 0.0
    cost = 0.0
    if action == 2:
        ax = cfg.main_accel * math.sin(ang)
        ay = cfg.main_accel * math.cos(ang)
        cost = cfg.main_cost
    elif action != 0:
        d = 1.0 if action == 1 else -1.0
        ax = d * cfg.side_accel * math.cos(ang)
        ay = -(d * cfg.side_accel * math.sin(ang))
        alpha = d * cfg.side_torque
        cost = cfg.side_cost

    vx2 = vx + ax * dt
    vy2 = vy + (ay - cfg.gravity) * dt
    w2 = w + alpha * dt
    x2 = x + vx2 * dt
    y2 = y + vy2 * dt
    a2 = ang + w2 * dt
    if a2 > math.pi:
        a2 -= 2.0 * math.pi
    elif a2 < -math.pi:
        a2 += 2.0 * math.pi

    kind = Termination.RUNNING
    left = 0.0
    right = 0.0
    if y2 <= 0.0:
        y2 = 0.0
        lift = cfg.leg_span * math.sin(a2)
        if lift <= cfg.leg_compliance:
            left = 1.0
        if -lift <= cfg.leg_compliance:
            right = 1.0
        if (
            left == 1.0
            and right == 1.0
            and abs(vx2) <= cfg.landing_vx
            and abs(vy2) <= cfg.landing_vy
            and abs(a2) <= cfg.landing_angle
        ):
            kind = Termination.LANDED
        else:
            kind = Termination.CRASHED
    elif abs(x2) > cfg.half_width or y2 > cfg.ceiling:
        kind = Termination.OUT_OF_BOUNDS

    nxt = LanderState(x2, y2, vx2, vy2, a2, w2, left, right)
    if not nxt.is_finite():
        return _abort(state, cfg)

    reward = potential(nxt, cfg) - potential(state, cfg) - cost
    if kind is Termination.LANDED:
        reward += cfg.landing_bonus
    elif kind is Termination.CRASHED or kind is Termination.OUT_OF_BOUNDS:
        reward -= cfg.crash_penalty
    return StepOutcome(nxt, reward, kind is not Termination.RUNNING, kind, cost)


def _abort(state: LanderState, cfg: SimConfig) -> StepOutcome:
    # NaN/Inf never leaves the simulator: freeze at a sanitized copy and crash
    safe = LanderState(*(v if math.isfinite(v) else 0.0 for v in state))
    return StepOutcome(safe, -cfg.crash_penalty, True, Termination.CRASHED, 0.0)


class PolicyFailure(SimError):
    """A policy callback raised or produced an invalid action."""


def run_episode(
    policy: Callable[[LanderState], int],
    seed: int,
    max_steps: int = 1000,
    cfg: SimConfig = DEFAULT_CONFIG,
) -> EpisodeTrace:
    """Roll out ``policy`` from ``reset(seed)``.

    A callback exception or an out-of-range action aborts the episode as
    Crashed, records the fault name in ``failure`` and pins ``total_reward``
    to :data:`MIN_FITNESS`.
    """
    if max_steps < 1:
        raise ValueError("max_steps must be >= 1")
    state = reset(seed, cfg)
    states = [state]
    actions: list[int] = []
    rewards: list[float] = []
    total = 0.0
    fuel = 0.0
    kind = Termination.TIME_LIMIT
    failure = None
    for _ in range(max_steps):
        try:
            action = policy(state)
        except Exception as exc:  # evolved code must never kill the caller
            failure = type(exc).__name__
            break
        if not _valid_action(action):
            failure = InvalidAction.__name__
            break
        out = step(state, action, None, cfg)
        state = out.next_state
        states.append(state)
        actions.append(int(action))
        rewards.append(out.reward)
        total += out.reward
        fuel += out.cost
        if out.terminated:
            kind = out.termination_kind
            break
    if failure is not None:
        kind = Termination.CRASHED
        total = MIN_FITNESS
    return EpisodeTrace(
        states=states,
        actions=actions,
        rewards=rewards,
        total_reward=total,
        success=total >= SUCCESS_THRESHOLD,
        termination_kind=kind,
        fuel_used=fuel,
        steps=len(actions),
        seed=seed,
        failure=failure,
    )


def random_policy(seed: int) -> Callable[[LanderState], int]:
    """Uniform random actions from a seeded stream."""
    rng = np.random.default_rng(seed)
    return lambda _state: int(rng.integers(0, 4))


def episode_seeds(master_seed: int, count: int, stream: int = 0) -> list[int]:
    """Derive ``count`` u64 episode seeds from a master seed and stream id."""
    ss = np.random.SeedSequence([master_seed, stream])
    return [int(v) for v in ss.generate_state(count, dtype=np.uint64)]


def batch(
    policy_factory: Callable[[int], Callable[[LanderState], int]],
    seeds: Sequence[int],
    max_steps: int = 1000,
    cfg: SimConfig = DEFAULT_CONFIG,
) -> list[EpisodeTrace]:
    return [run_episode(policy_factory(s), s, max_steps, cfg) for s in seeds]
