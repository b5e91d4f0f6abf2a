"""One-dimensional velocity-tracking task with the same interface as the biped.

A unit mass slides on a line with linear drag and is pushed by
``force_scale * action``. It is small enough to train in seconds, which makes
it the regression target for the learner itself.
"""

from __future__ import annotations

import math

import numpy as np

from ..config import RunConfig
from .base import StepResult, check_actions, env_rng, stack_results, termination_status
from .commands import CommandVector, resample_command
from .observations import ObservationBundle, ObservationLayout

MASS = 1.0
DRAG = 1.0
FORCE_SCALE = 2.0
RESET_SPEED = 0.5

POINTMASS_LAYOUT = ObservationLayout(
    actor=(("commands", 1, 1.0), ("velocity", 1, 1.0), ("prev_action", 1, 1.0)),
    privileged=(("position", 1, 0.1),),
    num_joints=1,
)


class PointMassEnv:
    reward_names = ("tracking_lin_vel_x",)
    num_actions = 1
    layout = POINTMASS_LAYOUT
    actor_dim = POINTMASS_LAYOUT.actor_dim
    critic_dim = POINTMASS_LAYOUT.critic_dim

    def __init__(self, cfg: RunConfig, num_envs: int | None = None, index_offset: int = 0):
        self.cfg = cfg
        self.num_envs = cfg.num_envs if num_envs is None else int(num_envs)
        self.index_offset = index_offset
        self.control_dt = cfg.control_dt
        self.curriculum_level = cfg.commands.curriculum_init_level if cfg.commands.curriculum else 1.0
        self.command_script = None
        self._rng = [env_rng(cfg.seed, index_offset + k) for k in range(self.num_envs)]
        self.pos = np.zeros(self.num_envs)
        self.vel = np.zeros(self.num_envs)
        self.prev_action = np.zeros(self.num_envs)
        self.command = [CommandVector() for _ in range(self.num_envs)]
        self.step_count = np.zeros(self.num_envs, dtype=np.int64)
        self.next_resample = np.zeros(self.num_envs)

    def _resample_at(self, k: int) -> float:
        lo, hi = self.cfg.commands.resample_time
        return self.step_count[k] * self.control_dt + lo + (hi - lo) * self._rng[k].random()

    def reset(self, k: int) -> ObservationBundle:
        rng = self._rng[k]
        self.pos[k] = 0.0
        self.vel[k] = RESET_SPEED * (2.0 * rng.random() - 1.0)
        self.prev_action[k] = 0.0
        self.step_count[k] = 0
        if self.command_script is not None:
            self.command[k] = self.command_script(k, 0.0)
        else:
            self.command[k] = resample_command(self.cfg.commands, rng, self.curriculum_level)
        self.next_resample[k] = self._resample_at(k)
        return self._observe(k)

    def reset_all(self) -> ObservationBundle:
        for k in range(self.num_envs):
            self.reset(k)
        return self.observations()

    def _actor(self, k: int) -> np.ndarray:
        raw = np.array([self.command[k].lin_vel_x, self.vel[k], self.prev_action[k]])
        return raw * self.layout.actor_scale

    def _observe(self, k: int) -> ObservationBundle:
        actor = self._actor(k)
        return ObservationBundle(actor, np.concatenate([actor, self.pos[k:k + 1] * self.layout.privileged_scale]))

    def observations(self) -> ObservationBundle:
        obs = [self._observe(k) for k in range(self.num_envs)]
        return ObservationBundle(np.stack([o.actor for o in obs]), np.stack([o.critic for o in obs]))

    def step(self, actions) -> StepResult:
        actions = check_actions(actions, self.num_envs, 1)
        clip = self.cfg.robot.clip_actions
        rows = []
        for k in range(self.num_envs):
            a = float(actions[k, 0])
            finite = math.isfinite(a)
            a = min(max(a, -clip), clip) if finite else 0.0
            force = FORCE_SCALE * a - DRAG * self.vel[k]
            self.vel[k] += force / MASS * self.control_dt
            self.pos[k] += self.vel[k] * self.control_dt
            self.step_count[k] += 1
            cmd = self.command[k]
            err = cmd.lin_vel_x - self.vel[k]
            tracking = self.cfg.rewards.tracking_lin_vel_x * math.exp(-err * err / self.cfg.rewards.sigma_x)
            self.prev_action[k] = a
            status = termination_status(1.0, abs(self.vel[k]), int(self.step_count[k]), 0.0,
                                        self.cfg.termination.max_base_velocity, self.cfg.max_episode_steps, finite)
            row = {
                "reward": tracking if finite else 0.0,
                "breakdown": {"tracking_lin_vel_x": tracking if finite else 0.0},
                "command": cmd.as_array(),
                "action": np.array([a]),
                "q": np.array([self.pos[k]]),
                "v": np.array([self.vel[k]]),
                "episode_step": int(self.step_count[k]),
                "time": self.step_count[k] * self.control_dt,
                "bootstrap_critic_obs": self._observe(k).critic,
            }
            truncated = False
            if status != "running":
                obs = self.reset(k)
            else:
                if self.command_script is not None:
                    new = self.command_script(k, self.step_count[k] * self.control_dt)
                    truncated = new != cmd
                    self.command[k] = new
                elif self.step_count[k] * self.control_dt >= self.next_resample[k]:
                    new = resample_command(self.cfg.commands, self._rng[k], self.curriculum_level)
                    truncated = new != cmd
                    self.command[k] = new
                    self.next_resample[k] = self._resample_at(k)
                obs = self._observe(k)
            row.update(actor_obs=obs.actor, critic_obs=obs.critic, done=status != "running",
                       early=status == "early", timeout=status == "timeout", truncated=truncated)
            rows.append(row)
        return stack_results(rows, self.reward_names)
