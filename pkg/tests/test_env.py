import dataclasses
import io
import json
import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locogym.config import ConfigError, RewardConfig, default_config
from locogym.env import (
    BipedEnv,
    CommandVector,
    Curriculum,
    DelayLine,
    GaitClock,
    PointMassEnv,
    SensorFrame,
    TrajectoryFormatError,
    TrajectoryWriter,
    actor_observation,
    command_scale,
    compute_rewards,
    gait_indicator,
    locomotion_layout,
    make_env,
    read_trajectory,
    resample_command,
    reward_terms,
    sample_randomization,
    sample_within,
    termination_status,
)
from locogym.env.base import env_rng
from locogym.dynamics import ContactParams, planar_biped

from models import random_reward_context
from oracles import batch_matches_singles, hand_schedule, rewards_scalar


def small_cfg(**kw):
    cfg = default_config()
    return dataclasses.replace(cfg, num_envs=kw.pop("num_envs", 2), **kw)


def no_random(cfg):
    return dataclasses.replace(cfg, randomization=dataclasses.replace(cfg.randomization, enabled=False))


# ---------------------------------------------------------------- observations

def test_layout_dims_for_twelve_joints():
    lay = locomotion_layout(12)
    assert lay.actor_dim == 47
    assert lay.critic_dim == 60
    assert [name for name, _ in lay.actor_blocks] == [
        "commands", "gait", "gravity", "ang_vel", "joint_pos", "joint_vel", "prev_action"]


def test_biped_dims():
    env = BipedEnv(small_cfg())
    assert (env.actor_dim, env.critic_dim, env.num_actions) == (29, 42, 6)


def test_layout_round_trip():
    lay = locomotion_layout(5, {"joint_vel": 0.1})
    assert type(lay).from_dict(json.loads(json.dumps(lay.to_dict()))) == lay


def test_zero_noise_critic_block_equals_actor():
    env = BipedEnv(no_random(small_cfg(num_envs=3)))
    b = env.reset_all()
    assert np.array_equal(b.critic[:, :env.actor_dim], b.actor)
    for _ in range(5):
        r = env.step(0.3 * np.ones((3, 6)))
        assert np.array_equal(r.critic_obs[:, :env.actor_dim], r.actor_obs)


def test_noisy_actor_differs_but_critic_stays_clean():
    env = BipedEnv(small_cfg(num_envs=1))
    b = env.reset_all()
    assert not np.array_equal(b.critic[:, :env.actor_dim], b.actor)
    bound = np.concatenate([[0] * 5, [0.05] * 3, [0.2 * 0.25] * 3, [0.01] * 6, [0.05] * 6, [0] * 6])
    assert np.all(np.abs(b.critic[0, :env.actor_dim] - b.actor[0]) <= bound + 1e-12)


def test_actor_observation_dimension_check():
    lay = locomotion_layout(3)
    s = SensorFrame(np.zeros(4), np.zeros(4), np.zeros(3), np.array([0, 0, -1.0]))
    with pytest.raises(ValueError):
        actor_observation(lay, np.zeros(3), (1, 0), s, np.zeros(4), np.zeros(4))


# ---------------------------------------------------------------- rewards

def test_reward_table_matches_scalar_oracle(rng):
    cfg = RewardConfig()
    ctx = random_reward_context(rng, 500)
    total, breakdown = compute_rewards(ctx, cfg)
    for i in range(500):
        t, w = rewards_scalar(ctx, cfg, i)
        assert abs(total[i] - t) < 1e-12
        for k, v in w.items():
            assert abs(breakdown[k][i] - v) < 1e-12, k


def test_perfect_tracking_terms_are_one(rng):
    ctx = random_reward_context(rng, 4)
    ctx = dataclasses.replace(ctx, base_lin_vel=ctx.command.copy(),
                              base_ang_vel=np.column_stack([ctx.base_ang_vel[:, :2], ctx.command[:, 2]]))
    t = reward_terms(ctx, RewardConfig())
    for k in ("tracking_lin_vel_x", "tracking_lin_vel_y", "tracking_ang_vel"):
        assert np.all(t[k] == 1.0)


def test_total_reward_clamped_at_zero(rng):
    ctx = random_reward_context(rng, 100_000)
    total, breakdown = compute_rewards(ctx, RewardConfig())
    assert np.all(total >= 0.0)
    raw = sum(breakdown.values())
    assert np.any(raw < 0)  # the clamp is exercised
    assert np.array_equal(total, np.maximum(raw, 0.0))


def test_swing_term_zero_when_clock_inactive(rng):
    ctx = random_reward_context(rng, 50)
    ctx = dataclasses.replace(ctx, gait_active=np.zeros(50, bool), foot_height=np.full((50, 2), 0.1))
    assert np.all(reward_terms(ctx, RewardConfig())["feet_swing"] == 0.0)


def test_gait_indicator_windows():
    clock = GaitClock(1.5, phase=0.25)
    expected, swinging = gait_indicator(clock, [0.05, 0.01], 0.03)
    assert expected.tolist() == [True, False]
    assert swinging.tolist() == [True, False]
    clock.phase = 0.75
    assert gait_indicator(clock, [0.0, 0.0], 0.03)[0].tolist() == [False, True]
    clock.set_active(False)
    assert gait_indicator(clock, [0.05, 0.05], 0.03)[0].tolist() == [False, False]
    assert clock.observation() == (0.0, 0.0)


# ---------------------------------------------------------------- delay line

@pytest.mark.parametrize("delay_ms", range(21))
def test_delay_line_matches_hand_schedule(delay_ms, rng):
    substeps, n_steps = 20, 6
    cmds = rng.normal(size=(n_steps, 3))
    line = DelayLine(np.zeros(3))
    got = []
    for k in range(n_steps):
        line.push(cmds[k], substeps * k, delay_ms)
        got.append(line.schedule(substeps * k, substeps))
    assert np.array_equal(np.concatenate(got), hand_schedule(delay_ms, substeps, n_steps, cmds, np.zeros(3)))


def test_ten_ms_delay_starts_at_substep_ten():
    line = DelayLine(np.zeros(1))
    line.push([1.0], 0, 10)
    sched = line.schedule(0, 20)[:, 0]
    assert np.all(sched[:10] == 0.0) and np.all(sched[10:] == 1.0)


def test_delay_line_keeps_send_order():
    line = DelayLine(np.zeros(1))
    line.push([1.0], 0, 15)
    line.push([2.0], 5, 0)  # would release earlier; must wait for the first
    sched = line.schedule(0, 20)[:, 0]
    assert np.all(sched[:15] == 0.0) and np.all(sched[15:] == 2.0)
    with pytest.raises(ValueError):
        line.push([0.0], 0, -1)


def test_env_converts_delay_to_ticks():
    cfg = small_cfg(num_envs=1)
    cfg = dataclasses.replace(cfg, randomization=dataclasses.replace(cfg.randomization, delay=(0.01, 0.01)))
    env = BipedEnv(cfg)
    env.reset_all()
    assert env.slots[0].sample.delay_ticks == 10


# ---------------------------------------------------------------- commands and termination

def test_level_zero_collapses_range():
    c = default_config().commands
    rng = np.random.default_rng(0)
    xs = [resample_command(c, rng, 0.0).lin_vel_x for _ in range(2000)]
    lo, hi = c.lin_vel_x
    assert min(xs) >= lo * c.curriculum_min_scale - 1e-12 and max(xs) <= hi * c.curriculum_min_scale + 1e-12
    assert command_scale(c, 1.0) == 1.0
    with pytest.raises(ValueError):
        resample_command(c, rng, 1.5)


def test_stand_probability_one():
    c = dataclasses.replace(default_config().commands, stand_probability=1.0)
    rng = np.random.default_rng(0)
    assert all(resample_command(c, rng, 1.0).stand_still for _ in range(100))
    cfg = dataclasses.replace(small_cfg(), commands=c)
    b = BipedEnv(cfg).reset_all()
    assert np.all(b.actor[:, 3:5] == 0.0)


def test_stand_fraction_monte_carlo():
    c = default_config().commands
    rng = np.random.default_rng(3)
    frac = np.mean([resample_command(c, rng, 1.0).stand_still for _ in range(10_000)])
    assert abs(frac - c.stand_probability) < 0.02


def test_curriculum_rises_only_above_threshold():
    c = default_config().commands
    cur = Curriculum(c)
    for _ in range(50):
        cur.update(0.5)
    assert cur.level == 0.0
    for _ in range(100):
        cur.update(1.0)
    assert cur.level == 1.0
    off = Curriculum(dataclasses.replace(c, curriculum=False))
    assert off.level == 1.0 and off.update(0.0) == 1.0


def test_termination_status():
    assert termination_status(0.2, 0.0, 10, 0.4, 10.0, 1500) == "early"
    assert termination_status(0.6, 0.0, 1500, 0.4, 10.0, 1500) == "timeout"
    assert termination_status(0.6, 0.0, 10, 0.4, 10.0, 1500) == "running"
    assert termination_status(0.6, 11.0, 10, 0.4, 10.0, 1500) == "early"
    assert termination_status(0.2, 0.0, 1500, 0.4, 10.0, 1500) == "early"
    assert termination_status(math.nan, 0.0, 1, 0.4, 10.0, 1500) == "early"


def test_biped_rejects_lateral_commands():
    cfg = default_config()
    cfg = dataclasses.replace(cfg, commands=dataclasses.replace(cfg.commands, lin_vel_y=(-0.2, 0.2)))
    with pytest.raises(ConfigError):
        BipedEnv(cfg)


# ---------------------------------------------------------------- stepping

def test_zero_action_targets_default_pose():
    env = BipedEnv(no_random(small_cfg(num_envs=1)))
    env.reset_all()
    env.step(np.zeros((1, 6)))
    assert np.array_equal(env.slots[0].delay.active, env.q0)


def test_zero_action_stands_for_a_while():
    env = BipedEnv(no_random(small_cfg(num_envs=1)))
    env.reset_all()
    for _ in range(100):
        r = env.step(np.zeros((1, 6)))
        assert not r.done[0]
    assert abs(r.q[0, 2]) < 0.1


def test_non_finite_action_terminates_only_that_env():
    env = BipedEnv(small_cfg(num_envs=2))
    env.reset_all()
    a = np.zeros((2, 6))
    a[1, 2] = np.nan
    r = env.step(a)
    assert r.done.tolist() == [False, True]
    assert r.early[1] and not r.timeout[1]
    assert r.reward[1] == 0.0


def test_action_shape_checked():
    env = BipedEnv(small_cfg(num_envs=2))
    env.reset_all()
    with pytest.raises(ValueError):
        env.step(np.zeros((3, 6)))


def test_identical_seeds_give_identical_rows():
    cfg = small_cfg(num_envs=1)
    a, b = BipedEnv(cfg), BipedEnv(cfg)
    a.reset_all(), b.reset_all()
    rng = np.random.default_rng(5)
    for _ in range(20):
        act = rng.uniform(-1, 1, (1, 6))
        ra, rb = a.step(act), b.step(act)
        assert np.array_equal(ra.actor_obs, rb.actor_obs) and np.array_equal(ra.reward, rb.reward)


def test_flags_and_reward_invariants_over_random_steps():
    cfg = small_cfg(num_envs=4, max_episode_steps=60)
    env = BipedEnv(cfg)
    env.reset_all()
    rng = np.random.default_rng(11)
    seen_timeout = seen_early = False
    for _ in range(300):
        r = env.step(rng.uniform(-1.5, 1.5, (4, 6)))
        assert np.all(r.reward >= 0.0)
        assert np.all(r.done == (r.early ^ r.timeout))
        assert not np.any(r.truncated & r.done)
        seen_timeout |= r.timeout.any()
        seen_early |= r.early.any()
    assert seen_timeout


def test_bootstrap_obs_is_pre_reset_state():
    cfg = no_random(small_cfg(num_envs=1, max_episode_steps=3))
    env = BipedEnv(cfg)
    env.reset_all()
    for _ in range(3):
        r = env.step(np.zeros((1, 6)))
    assert r.timeout[0]
    assert not np.array_equal(r.bootstrap_critic_obs, r.critic_obs)
    assert r.episode_step[0] == 3


def test_push_changes_state():
    cfg = small_cfg(num_envs=1)
    rnd = dataclasses.replace(cfg.randomization, push_interval=(0.1, 0.1), push_velocity=(0.5, 0.5))
    env = BipedEnv(dataclasses.replace(cfg, randomization=rnd))
    env.reset_all()
    for _ in range(5):
        env.step(np.zeros((1, 6)))
    assert env.slots[0].push_count == 0
    v_before = env.slots[0].state.v[0]
    for _ in range(2):
        env.step(np.zeros((1, 6)))
    assert env.slots[0].push_count == 1
    assert env.slots[0].state.v[0] > v_before + 0.2


def test_scripted_commands_mark_truncation():
    cfg = no_random(small_cfg(num_envs=1))
    env = BipedEnv(cfg)
    env.command_script = lambda k, t: CommandVector(0.2) if t < 0.1 - 1e-9 else CommandVector(-0.2)
    env.reset_all()
    flags = [bool(env.step(np.zeros((1, 6))).truncated[0]) for _ in range(8)]
    assert flags == [False, False, False, False, True, False, False, False]


def test_make_env_dispatch():
    assert isinstance(make_env(small_cfg()), BipedEnv)
    assert isinstance(make_env(dataclasses.replace(small_cfg(), task="pointmass")), PointMassEnv)


# ---------------------------------------------------------------- batch/single

def test_batch_equals_singles_small():
    cfg = small_cfg(max_episode_steps=25)
    assert batch_matches_singles(cfg, 3, 40, 0)


def test_pointmass_batch_equals_singles():
    cfg = dataclasses.replace(small_cfg(), task="pointmass", max_episode_steps=30)
    assert batch_matches_singles(cfg, 4, 80, 1)


# ---------------------------------------------------------------- randomization

def test_randomization_audit_over_draws():
    cfg = default_config().randomization
    model = planar_biped()
    mass_lo, mass_hi = np.inf, -np.inf
    for k in range(10_000):
        s = sample_randomization(cfg, model, env_rng(7, k), 0.001, ContactParams())
        assert sample_within(s, cfg)
        mass_lo, mass_hi = min(mass_lo, s.mass_scale.min()), max(mass_hi, s.mass_scale.max())
        assert 0 <= s.delay_ticks <= 20
    lo, hi = cfg.mass_scale
    # witnesses near both ends of the range
    assert lo <= mass_lo < lo + 0.01 and hi - 0.01 < mass_hi <= hi


def test_env_resets_stay_in_range():
    env = BipedEnv(small_cfg(num_envs=1))
    for _ in range(50):
        env.reset(0)
        assert sample_within(env.slots[0].sample, env.cfg.randomization)


def test_point_ranges_give_identical_privileged_obs():
    cfg = small_cfg(num_envs=2)
    r = cfg.randomization
    point = {f.name: (getattr(r, f.name)[0],) * 2 for f in dataclasses.fields(r)
             if isinstance(getattr(r, f.name), tuple)}
    rnd = dataclasses.replace(r, reset_joint_noise=0.0, **point)
    env = BipedEnv(dataclasses.replace(cfg, randomization=rnd))
    a = env.reset(0).critic[env.actor_dim:]
    b = env.reset(0).critic[env.actor_dim:]
    c = env.reset(1).critic[env.actor_dim:]
    assert np.array_equal(a, b) and np.array_equal(a, c)


# ---------------------------------------------------------------- trajectory dump

def test_trajectory_round_trip(tmp_path):
    env = BipedEnv(small_cfg(num_envs=2, max_episode_steps=4))
    env.reset_all()
    path = tmp_path / "t.jsonl"
    with open(path, "w") as fh:
        w = TrajectoryWriter(fh, "train", 2)
        for _ in range(6):
            w.write(env.step(np.zeros((2, 6))))
    recs = list(read_trajectory(path))
    assert len(recs) == 12
    assert [r["episode"] for r in recs if r["env"] == 0] == [0, 0, 0, 0, 1, 1]
    assert recs[0]["source"] == "train" and len(recs[0]["q_gen"]) == 9
    assert set(recs[0]["rewards"]) == set(env.reward_names)


def test_trajectory_nulls_non_finite():
    env = BipedEnv(small_cfg(num_envs=1))
    env.reset_all()
    buf = io.StringIO()
    a = np.full((1, 6), np.nan)
    TrajectoryWriter(buf, "x").write(env.step(a))
    rec = json.loads(buf.getvalue())
    assert rec["early"] is True


def test_trajectory_reader_names_bad_line(tmp_path):
    p = tmp_path / "bad.jsonl"
    p.write_text('{"q_gen": [0], "v_gen": [0], "time": 0}\n\n{"q_gen": [0]}\n')
    with pytest.raises(TrajectoryFormatError) as err:
        list(read_trajectory(p))
    assert err.value.line == 3 and "line 3" in str(err.value)


# ---------------------------------------------------------------- properties

@settings(max_examples=30, deadline=None)
@given(level=st.floats(0.0, 1.0), seed=st.integers(0, 2**31))
def test_command_within_scaled_range(level, seed):
    c = default_config().commands
    cmd = resample_command(c, np.random.default_rng(seed), level)
    s = command_scale(c, level)
    assert c.lin_vel_x[0] * s - 1e-12 <= cmd.lin_vel_x <= c.lin_vel_x[1] * s + 1e-12
    assert cmd.lin_vel_y == 0.0 and cmd.ang_vel_yaw == 0.0


@settings(max_examples=25, deadline=None)
@given(delay=st.integers(0, 20), sends=st.lists(st.integers(0, 5), min_size=1, max_size=8))
def test_delay_line_release_rule(delay, sends):
    """Every command is first in force at max(send + delay, previous release)."""
    line = DelayLine([0.0])
    tick, release = 0, -1
    expected = {}
    for k, gap in enumerate(sends):
        tick += gap
        release = max(tick + delay, release)
        line.push([k + 1.0], tick, delay)
        expected[k + 1.0] = release
    sched = line.schedule(0, tick + delay + 1)[:, 0]
    for value, rel in expected.items():
        hits = np.nonzero(sched == value)[0]
        if hits.size:
            assert hits[0] == rel
