import dataclasses
import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from policyevo import sim
from policyevo.sim import (
    DEFAULT_CONFIG,
    MIN_FITNESS,
    ConfigError,
    InvalidAction,
    LanderState,
    SimConfig,
    Termination,
)

seeds = st.integers(min_value=0, max_value=2**64 - 1)
actions = st.integers(min_value=0, max_value=3)


def falling(**kw):
    base = dict(x=0.0, y=1.0, vx=0.0, vy=0.0, angle=0.0, w=0.0, left_leg=0.0, right_leg=0.0)
    base.update(kw)
    return LanderState(**base)


@given(seeds)
def test_reset_is_deterministic_and_inside_spawn_box(seed):
    a, b = sim.reset(seed), sim.reset(seed)
    assert a == b
    c = DEFAULT_CONFIG
    assert c.spawn_y_min <= a.y <= c.spawn_y_max
    assert abs(a.x) <= c.spawn_x and abs(a.vx) <= c.spawn_vx
    assert -c.spawn_vy <= a.vy <= 0.0
    assert abs(a.angle) <= c.spawn_angle and abs(a.w) <= c.spawn_w
    assert a.left_leg == a.right_leg == 0.0


def test_reset_rejects_out_of_range_seed():
    with pytest.raises(ValueError):
        sim.reset(-1)
    with pytest.raises(ValueError):
        sim.reset(2**64)


def test_noop_step_is_semi_implicit_free_fall():
    s = falling(vy=-0.1)
    out = sim.step(s, 0)
    dt, g = DEFAULT_CONFIG.dt, DEFAULT_CONFIG.gravity
    vy = -0.1 - g * dt
    assert out.next_state.vy == vy
    assert out.next_state.y == 1.0 + vy * dt
    assert out.cost == 0.0 and not out.terminated


def test_main_engine_pushes_along_body_axis():
    s = falling(angle=0.3)
    out = sim.step(s, 2)
    c = DEFAULT_CONFIG
    assert out.next_state.vx == pytest.approx(c.main_accel * math.sin(0.3) * c.dt)
    assert out.next_state.vy == pytest.approx((c.main_accel * math.cos(0.3) - c.gravity) * c.dt)
    assert out.cost == c.main_cost


def test_side_engines_are_mirror_images():
    left = sim.step(falling(), 1).next_state
    right = sim.step(falling(), 3).next_state
    assert left.w == -right.w > 0
    assert left.vx == -right.vx > 0


@pytest.mark.parametrize("bad", [-1, 4, 2.0, True, "1", None])
def test_step_rejects_invalid_actions(bad):
    with pytest.raises(InvalidAction):
        sim.step(falling(), bad)


def test_soft_upright_touchdown_lands_with_bonus():
    s = falling(y=0.001, vy=-0.1)
    out = sim.step(s, 0)
    assert out.termination_kind is Termination.LANDED
    assert out.next_state.y == 0.0
    assert out.next_state.left_leg == out.next_state.right_leg == 1.0
    expected = sim.potential(out.next_state) - sim.potential(s) + DEFAULT_CONFIG.landing_bonus
    assert out.reward == expected


def test_fast_touchdown_crashes_with_penalty():
    s = falling(y=0.001, vy=-1.0)
    out = sim.step(s, 0)
    assert out.termination_kind is Termination.CRASHED
    expected = sim.potential(out.next_state) - sim.potential(s) - DEFAULT_CONFIG.crash_penalty
    assert out.reward == expected


def test_tilted_touchdown_grounds_one_leg_only():
    out = sim.step(falling(y=0.001, vy=-0.05, angle=0.5), 0)
    assert out.termination_kind is Termination.CRASHED
    assert (out.next_state.left_leg, out.next_state.right_leg) == (0.0, 1.0)


def test_leaving_the_world_is_out_of_bounds():
    out = sim.step(falling(x=1.499, vx=1.0), 0)
    assert out.termination_kind is Termination.OUT_OF_BOUNDS
    out = sim.step(falling(y=1.999, vy=1.0), 0)
    assert out.termination_kind is Termination.OUT_OF_BOUNDS


def test_non_finite_state_aborts_as_crash():
    out = sim.step(falling(vx=float("nan")), 0)
    assert out.terminated and out.termination_kind is Termination.CRASHED
    assert out.next_state.is_finite()
    assert out.reward == -DEFAULT_CONFIG.crash_penalty


def test_angle_wraps_into_pi_range():
    out = sim.step(falling(angle=math.pi - 1e-4, w=1.0), 0)
    assert -math.pi <= out.next_state.angle <= math.pi
    assert out.next_state.angle < 0


def test_shaping_telescopes_over_an_episode():
    trace = sim.run_episode(lambda s: 0, seed=3)
    assert trace.termination_kind is Termination.CRASHED
    penalty = DEFAULT_CONFIG.crash_penalty
    telescoped = sim.potential(trace.final_state()) - sim.potential(trace.states[0]) - trace.fuel_used - penalty
    assert trace.total_reward == pytest.approx(telescoped, abs=1e-9)


def test_always_noop_policy_crashes():
    for seed in range(20):
        trace = sim.run_episode(lambda s: 0, seed)
        assert trace.termination_kind is Termination.CRASHED
        assert not trace.success


@settings(max_examples=30, deadline=None)
@given(seed=seeds, policy_seed=st.integers(0, 2**32))
def test_episode_total_is_bounded_below_by_worst_case(seed, policy_seed):
    trace = sim.run_episode(sim.random_policy(policy_seed), seed, max_steps=300)
    assert trace.total_reward >= DEFAULT_CONFIG.worst_case_total(300)
    assert trace.total_reward > MIN_FITNESS
    assert math.fsum(trace.rewards) == pytest.approx(trace.total_reward)


@settings(max_examples=30, deadline=None)
@given(seeds, st.lists(actions, min_size=1, max_size=200))
def test_step_keeps_state_finite_and_kind_consistent(seed, acts):
    s = sim.reset(seed)
    for a in acts:
        out = sim.step(s, a)
        assert out.next_state.is_finite()
        assert out.terminated == (out.termination_kind is not Termination.RUNNING)
        if out.terminated:
            break
        s = out.next_state


def test_worst_case_bound_stays_above_min_fitness():
    assert DEFAULT_CONFIG.worst_case_total(1000) > MIN_FITNESS


def test_policy_exception_pins_total_to_min_fitness():
    def boom(state):
        raise ZeroDivisionError

    trace = sim.run_episode(boom, 0)
    assert trace.failure == "ZeroDivisionError"
    assert trace.total_reward == MIN_FITNESS
    assert trace.termination_kind is Termination.CRASHED


def test_invalid_action_from_callback_is_a_failure():
    trace = sim.run_episode(lambda s: 7, 0)
    assert trace.failure == "InvalidAction"
    assert trace.total_reward == MIN_FITNESS


def test_time_limit():
    hover = lambda s: 2 if s.vy < 0 else 0
    trace = sim.run_episode(hover, 1, max_steps=50)
    assert trace.termination_kind is Termination.TIME_LIMIT
    assert trace.steps == 50 and len(trace.states) == 51


def test_trace_export_has_eleven_columns_per_step():
    trace = sim.run_episode(lambda s: 0, 0)
    lines = trace.to_lines()
    assert lines[0].split(",")[0] == "step"
    body = lines[1:-1]
    assert len(body) == trace.steps
    assert all(len(l.split(",")) == 11 for l in body)
    assert lines[-1].startswith("# termination=Crashed")


def test_config_text_round_trip(tmp_path):
    cfg = dataclasses.replace(DEFAULT_CONFIG, gravity=1.25, dt=0.01)
    path = tmp_path / "sim.cfg"
    cfg.dump(path)
    assert SimConfig.load(path) == cfg


@pytest.mark.parametrize("text", ["gravity = abc", "nonsense = 1", "gravity 1"])
def test_config_text_errors(text):
    with pytest.raises(ConfigError):
        sim.parse_config_text(text)


@pytest.mark.parametrize("kw", [{"dt": 0.0}, {"gravity": float("inf")}, {"spawn_x": 5.0}])
def test_config_validation(kw):
    with pytest.raises(ConfigError):
        SimConfig(**kw)


def test_episode_seeds_are_stable_and_distinct():
    a = sim.episode_seeds(7, 50)
    assert a == sim.episode_seeds(7, 50)
    assert len(set(a)) == 50
    assert sim.episode_seeds(7, 50, stream=1) != a
    assert all(0 <= s < 2**64 for s in a)


def test_params_vector_follows_field_order():
    p = DEFAULT_CONFIG.params()
    assert p.dtype == np.float64
    assert p[0] == DEFAULT_CONFIG.dt and p[-1] == DEFAULT_CONFIG.crash_penalty
