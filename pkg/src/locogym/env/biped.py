"""Vectorized planar-biped locomotion environment."""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..config import REWARD_NAMES, ConfigError, RunConfig
from ..dynamics import (
    ActuatorConfig,
    ContactParams,
    PhysicsState,
    RobotModel,
    apply_external_wrench,
    load_model,
    pack_model,
    planar_biped,
    standing_height,
    step,
)
from ..dynamics.backend import kernels as _kernels
from ..dynamics.model import ModelArrays
from .base import StepResult, check_actions, env_rng, stack_results, termination_status
from .commands import CommandVector, GaitClock, resample_command
from .delay import DelayLine
from .observations import (
    ObservationBundle,
    PrivilegedState,
    SensorFrame,
    actor_observation,
    locomotion_layout,
    privileged_observation,
)
from .randomization import RandomizationSample, nominal_sample, sample_randomization
from .rewards import RewardContext, compute_rewards


def build_model(cfg: RunConfig) -> RobotModel:
    return load_model(cfg.robot.model_file) if cfg.robot.model_file else planar_biped()


def base_actuator(cfg: RunConfig, model: RobotModel) -> ActuatorConfig:
    n = model.num_joints
    for key in ("kp", "kd"):
        gains = getattr(cfg.robot, key)
        if gains is not None and len(gains) not in (1, n):
            raise ConfigError(f"robot.{key} needs 1 or {n} entries, got {len(gains)}", f"robot.{key}")
    return ActuatorConfig.from_model(model, kp=cfg.robot.kp, kd=cfg.robot.kd)


def base_frame(pitch: float, vec_x: float, vec_z: float) -> tuple[float, float]:
    """World (x, z) vector expressed in the base frame of a body pitched by ``pitch``."""
    c, s = math.cos(pitch), math.sin(pitch)
    return c * vec_x - s * vec_z, s * vec_x + c * vec_z


def projected_gravity(pitch: float) -> np.ndarray:
    return np.array([math.sin(pitch), 0.0, -math.cos(pitch)])


def rest_height(model: RobotModel, q_joints, contact: ContactParams, arrays: ModelArrays) -> float:
    """Base height that puts the lowest contact point exactly on the terrain (base x = 0, pitch 0)."""
    q = np.concatenate([[0.0, 0.0, 0.0], q_joints])
    pos, _, _ = _kernels.point_kinematics(arrays, q, np.zeros_like(q), arrays.cp_body, arrays.cp_local)
    return float(np.max(contact.ground_height(pos[:, 0]) - pos[:, 1]))


@dataclass
class _EnvSlot:
    rng: np.random.Generator
    sample: Optional[RandomizationSample] = None
    model: Optional[RobotModel] = None
    arrays: Optional[ModelArrays] = None
    actuator: Optional[ActuatorConfig] = None
    contact: Optional[ContactParams] = None
    state: Optional[PhysicsState] = None
    delay: Optional[DelayLine] = None
    command: CommandVector = field(default_factory=CommandVector)
    gait: Optional[GaitClock] = None
    tick: int = 0
    step_count: int = 0
    next_resample: float = 0.0
    next_push: float = math.inf
    push_count: int = 0
    prev_action: Optional[np.ndarray] = None
    prev_joint_vel: Optional[np.ndarray] = None
    prev_lin_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))
    prev_ang_vel: np.ndarray = field(default_factory=lambda: np.zeros(3))


class BipedEnv:
    """``num_envs`` independent bipeds stepped in fixed env order.

    Env ``k`` draws from the stream seeded by ``(cfg.seed, index_offset + k)``,
    so a batch of K envs and K single envs with offsets 0..K-1 produce the
    same trajectories.
    """

    reward_names = REWARD_NAMES

    def __init__(self, cfg: RunConfig, num_envs: Optional[int] = None, index_offset: int = 0):
        c = cfg.commands
        if c.lin_vel_y != (0.0, 0.0) or c.ang_vel_yaw != (0.0, 0.0):
            raise ConfigError("the planar biped only supports forward commands; "
                              "commands.lin_vel_y and commands.ang_vel_yaw must be [0, 0]", "commands.lin_vel_y")
        self.cfg = cfg
        self.num_envs = cfg.num_envs if num_envs is None else int(num_envs)
        self.index_offset = index_offset
        self.model = build_model(cfg)
        self.num_actions = self.model.num_joints
        if len(self.model.feet) < 1:
            raise ConfigError("robot model needs at least one foot site", "robot.model_file")
        self.actuator = base_actuator(cfg, self.model)
        self.contact = ContactParams()
        self.layout = locomotion_layout(self.num_actions)
        self.actor_dim = self.layout.actor_dim
        self.critic_dim = self.layout.critic_dim
        self.control_dt = cfg.control_dt
        self.substeps = cfg.physics_substeps
        self.dt = cfg.physics_dt
        self.q0 = self.model.q0
        self.q_min, self.q_max = self.model.q_limits()
        self.tau_max = self.model.tau_max()
        self.action_scale = cfg.robot.action_scale
        self.nominal_height = standing_height(self.model)
        self.min_height = cfg.termination.min_height_ratio * self.nominal_height
        self.curriculum_level = cfg.commands.curriculum_init_level if cfg.commands.curriculum else 1.0
        # optional (env index, episode time) -> CommandVector replacing random resampling
        self.command_script = None
        self.slots = [_EnvSlot(rng=env_rng(cfg.seed, index_offset + k)) for k in range(self.num_envs)]
        self._obs: list[Optional[ObservationBundle]] = [None] * self.num_envs

    # ------------------------------------------------------------ reset

    def reset_all(self) -> ObservationBundle:
        for k in range(self.num_envs):
            self.reset(k)
        return self.observations()

    def observations(self) -> ObservationBundle:
        return ObservationBundle(np.stack([o.actor for o in self._obs]), np.stack([o.critic for o in self._obs]))

    def reset(self, k: int) -> ObservationBundle:
        if not 0 <= k < self.num_envs:
            raise IndexError(f"env index {k} out of range")
        s = self.slots[k]
        rnd = self.cfg.randomization
        s.sample = sample_randomization(rnd, self.model, s.rng, self.dt, self.contact)
        s.model, s.actuator, s.contact = s.sample.apply(self.model, self.actuator, self.contact)
        s.arrays = pack_model(s.model)
        noise = rnd.reset_joint_noise if rnd.enabled else 0.0
        qj = np.clip(self.q0 + noise * (2.0 * s.rng.random(self.num_actions) - 1.0), self.q_min, self.q_max)
        z = rest_height(s.model, qj, s.contact, s.arrays)
        s.state = PhysicsState(q=np.concatenate([[0.0, z, 0.0], qj]), v=np.zeros(self.model.ndof))
        s.delay = DelayLine(self.q0)
        s.tick = 0
        s.step_count = 0
        s.push_count = 0
        s.next_push = s.sample.next_push_time
        s.prev_action = np.zeros(self.num_actions)
        s.prev_joint_vel = np.zeros(self.num_actions)
        s.prev_lin_vel = np.zeros(3)
        s.prev_ang_vel = np.zeros(3)
        s.gait = GaitClock(self.cfg.rewards.gait_frequency)
        if self.command_script is not None:
            self._set_command(s, self.command_script(k, 0.0))
        else:
            self._set_command(s, resample_command(self.cfg.commands, s.rng, self.curriculum_level))
        s.next_resample = self._resample_interval(s)
        self._obs[k] = self._observe(s)
        return self._obs[k]

    def _resample_interval(self, s: _EnvSlot) -> float:
        lo, hi = self.cfg.commands.resample_time
        return s.step_count * self.control_dt + lo + (hi - lo) * s.rng.random()

    @staticmethod
    def _set_command(s: _EnvSlot, cmd: CommandVector) -> None:
        s.command = cmd
        s.gait.set_active(not cmd.stand_still)

    # ------------------------------------------------------------ observation

    def _sensors(self, s: _EnvSlot) -> SensorFrame:
        q, v = s.state.q, s.state.v
        return SensorFrame(joint_pos=q[3:].copy(), joint_vel=v[3:].copy(),
                           base_ang_vel=np.array([0.0, v[2], 0.0]), gravity=projected_gravity(q[2]),
                           timestamp=s.step_count * self.control_dt)

    def _noisy(self, s: _EnvSlot, true: SensorFrame) -> SensorFrame:
        rnd = self.cfg.randomization
        if not rnd.enabled:
            return true
        n = self.num_actions

        def u(width, size):
            return width * (2.0 * s.rng.random(size) - 1.0)

        return SensorFrame(
            joint_pos=true.joint_pos + u(rnd.noise_joint_pos, n),
            joint_vel=true.joint_vel + u(rnd.noise_joint_vel, n),
            base_ang_vel=true.base_ang_vel + u(rnd.noise_ang_vel, 3),
            gravity=true.gravity + u(rnd.noise_gravity, 3),
            timestamp=true.timestamp,
        )

    def _privileged(self, s: _EnvSlot) -> PrivilegedState:
        q, v = s.state.q, s.state.v
        vx, vz = base_frame(q[2], v[0], v[1])
        trunk = s.model.bodies[0]
        active = s.state.ext_time_left > 0
        return PrivilegedState(
            body_mass=s.model.total_mass,
            body_com=np.array([trunk.com[0], 0.0, trunk.com[1]]),
            base_lin_vel=np.array([vx, 0.0, vz]),
            base_height=q[1] - float(s.contact.ground_height(q[0])),
            push_force=s.state.ext_force.copy() if active else np.zeros(2),
            push_torque=np.array([0.0, s.state.ext_torque if active else 0.0, 0.0]),
        )

    def _critic(self, s: _EnvSlot, true: SensorFrame) -> np.ndarray:
        clean = actor_observation(self.layout, s.command.as_array(), s.gait.observation(), true, self.q0,
                                  s.prev_action)
        return np.concatenate([clean, privileged_observation(self.layout, self._privileged(s))])

    def _observe(self, s: _EnvSlot) -> ObservationBundle:
        true = self._sensors(s)
        actor = actor_observation(self.layout, s.command.as_array(), s.gait.observation(), self._noisy(s, true),
                                  self.q0, s.prev_action)
        return ObservationBundle(actor, self._critic(s, true))

    # ------------------------------------------------------------ stepping

    def _push(self, s: _EnvSlot) -> None:
        rnd = self.cfg.randomization
        if s.push_count % 2 == 0:
            lo, hi = rnd.push_velocity
            v = s.state.v.copy()
            v[0] += lo + (hi - lo) * s.rng.random()  # whole robot, like a kick
            s.state = s.state.copy(v=v)
        else:
            lo, hi = rnd.push_force
            force = lo + (hi - lo) * s.rng.random()
            lo, hi = rnd.push_duration
            duration = lo + (hi - lo) * s.rng.random()
            s.state = apply_external_wrench(s.model, s.state, (force, 0.0), 0.0, duration)
        s.push_count += 1
        lo, hi = rnd.push_interval
        s.next_push += lo + (hi - lo) * s.rng.random()

    def _advance(self, s: _EnvSlot, action: np.ndarray) -> dict:
        finite = bool(np.all(np.isfinite(action)))
        clip = self.cfg.robot.clip_actions
        a = np.clip(action, -clip, clip) if finite else np.zeros(self.num_actions)
        q_des = self.q0 + self.action_scale * a
        s.delay.push(q_des, s.tick, s.sample.delay_ticks)
        schedule = s.delay.schedule(s.tick, self.substeps)
        if s.step_count * self.control_dt >= s.next_push:
            self._push(s)
        out = step(s.model, s.state, schedule, s.actuator, s.contact, self.substeps, self.dt, arrays=s.arrays)
        s.state = out.state
        s.tick += self.substeps
        s.step_count += 1
        ok = finite and out.ok
        q, v = s.state.q, s.state.v
        if ok:
            vx, vz = base_frame(q[2], v[0], v[1])
            lin = np.array([vx, 0.0, vz])
            ang = np.array([0.0, v[2], 0.0])
            feet = out.feet
            height = q[1] - float(s.contact.ground_height(q[0]))
            speed = math.hypot(v[0], v[1])
        else:
            lin = ang = np.zeros(3)
            feet = None
            height, speed = math.nan, math.nan
        post = dict(
            ok=ok, action=a, lin=lin, ang=ang, height=height, speed=speed, feet=feet,
            torque=out.mean_torque if ok else np.zeros(self.num_actions),
            n_collision=out.contacts.n_collision if ok else 0,
            gait_active=s.gait.active, gait_phase=s.gait.phase,
        )
        return post

    def _reward_context(self, posts: list[dict]) -> RewardContext:
        nf = len(self.model.feet)
        rows = []
        for s, p in zip(self.slots, posts):
            q, v = s.state.q, s.state.v
            if p["ok"]:
                f = p["feet"]
                feet = (f.position, f.velocity, f.pitch, f.height, f.in_contact)
                jp, jv = q[3:], v[3:]
            else:
                feet = (np.zeros((nf, 3)), np.zeros((nf, 3)), np.zeros(nf), np.zeros(nf), np.zeros(nf, bool))
                jp, jv = self.q0, np.zeros(self.num_actions)
            rows.append((s, p, q, jp, jv, feet))
        N = len(rows)

        def stack(fn, dtype=np.float64):
            return np.array([fn(*r) for r in rows], dtype=dtype).reshape((N,) + np.shape(fn(*rows[0])))

        return RewardContext(
            command=stack(lambda s, p, q, jp, jv, ft: s.command.as_array()),
            base_lin_vel=stack(lambda s, p, q, jp, jv, ft: p["lin"]),
            base_ang_vel=stack(lambda s, p, q, jp, jv, ft: p["ang"]),
            prev_base_lin_vel=stack(lambda s, p, q, jp, jv, ft: s.prev_lin_vel),
            prev_base_ang_vel=stack(lambda s, p, q, jp, jv, ft: s.prev_ang_vel),
            base_height=stack(lambda s, p, q, jp, jv, ft: p["height"] if p["ok"] else 0.0),
            base_pitch=stack(lambda s, p, q, jp, jv, ft: q[2] if p["ok"] else 0.0),
            projected_gravity=stack(lambda s, p, q, jp, jv, ft: projected_gravity(q[2]) if p["ok"] else np.zeros(3)),
            joint_pos=stack(lambda s, p, q, jp, jv, ft: jp),
            joint_vel=stack(lambda s, p, q, jp, jv, ft: jv),
            prev_joint_vel=stack(lambda s, p, q, jp, jv, ft: s.prev_joint_vel),
            q_min=np.tile(self.q_min, (N, 1)),
            q_max=np.tile(self.q_max, (N, 1)),
            torques=stack(lambda s, p, q, jp, jv, ft: p["torque"]),
            tau_max=np.tile(self.tau_max, (N, 1)),
            action=stack(lambda s, p, q, jp, jv, ft: p["action"]),
            prev_action=stack(lambda s, p, q, jp, jv, ft: s.prev_action),
            n_collision=stack(lambda s, p, q, jp, jv, ft: p["n_collision"]),
            gait_active=stack(lambda s, p, q, jp, jv, ft: p["gait_active"], bool),
            gait_phase=stack(lambda s, p, q, jp, jv, ft: p["gait_phase"]),
            foot_pos=stack(lambda s, p, q, jp, jv, ft: ft[0]),
            foot_vel=stack(lambda s, p, q, jp, jv, ft: ft[1]),
            foot_pitch=stack(lambda s, p, q, jp, jv, ft: ft[2]),
            foot_height=stack(lambda s, p, q, jp, jv, ft: ft[3]),
            foot_contact=stack(lambda s, p, q, jp, jv, ft: ft[4], bool),
            dt=self.control_dt,
        )

    def step(self, actions) -> StepResult:
        actions = check_actions(actions, self.num_envs, self.num_actions)
        posts = [self._advance(s, actions[k]) for k, s in enumerate(self.slots)]
        total, breakdown = compute_rewards(self._reward_context(posts), self.cfg.rewards)
        rows = []
        for k, (s, p) in enumerate(zip(self.slots, posts)):
            ok = p["ok"]
            row = {
                "reward": float(total[k]) if ok else 0.0,
                "breakdown": {name: float(breakdown[name][k]) if ok else 0.0 for name in self.reward_names},
                "command": s.command.as_array(),
                "action": p["action"].copy(),
                "q": s.state.q.copy(),
                "v": s.state.v.copy(),
                "episode_step": s.step_count,
                "time": s.step_count * self.control_dt,
            }
            status = termination_status(p["height"], p["speed"], s.step_count, self.min_height,
                                        self.cfg.termination.max_base_velocity, self.cfg.max_episode_steps, ok)
            # carry this step's quantities into the next one
            s.prev_action = p["action"]
            s.prev_joint_vel = s.state.v[3:].copy() if ok else np.zeros(self.num_actions)
            s.prev_lin_vel = p["lin"]
            s.prev_ang_vel = p["ang"]
            s.gait.advance(self.control_dt)
            row["bootstrap_critic_obs"] = (self._critic(s, self._sensors(s)) if ok
                                           else np.zeros(self.critic_dim))
            truncated = False
            if status != "running":
                obs = self.reset(k)
            else:
                if self.command_script is not None:
                    new = self.command_script(k, s.step_count * self.control_dt)
                    truncated = new != s.command
                    if truncated:
                        self._set_command(s, new)
                elif s.step_count * self.control_dt >= s.next_resample:
                    new = resample_command(self.cfg.commands, s.rng, self.curriculum_level)
                    truncated = new != s.command
                    self._set_command(s, new)
                    s.next_resample = self._resample_interval(s)
                obs = self._observe(s)
                self._obs[k] = obs
            row.update(
                actor_obs=obs.actor, critic_obs=obs.critic,
                done=status != "running", early=status == "early", timeout=status == "timeout",
                truncated=truncated,
            )
            rows.append(row)
        return stack_results(rows, self.reward_names)
