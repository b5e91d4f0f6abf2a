"""Run configuration: nested frozen dataclasses loaded from a YAML mapping.

Every key has a default, so an empty file yields the default profile. Unknown
keys are rejected because a silently ignored typo in a randomization range is
worse than a crash.
"""

from __future__ import annotations

import dataclasses
import math
import os
import types
import typing
from dataclasses import dataclass, field
from pathlib import Path
from typing import Any, Optional, Sequence, Tuple, Union

import yaml

SEED_ENV_VAR = "LOCOGYM_SEED"

Range = Tuple[float, float]


class ConfigError(ValueError):
    """Raised for unparsable files, unknown keys, bad types and violated bounds."""

    def __init__(self, message: str, key: str | None = None, line: int | None = None):
        self.key = key
        self.line = line
        super().__init__(message)


@dataclass(frozen=True)
class RobotModelConfig:
    model_file: Optional[str] = None  # None selects the bundled planar biped
    action_scale: float = 0.25
    clip_actions: float = 1.0
    kp: Optional[Tuple[float, ...]] = None
    kd: Optional[Tuple[float, ...]] = None


@dataclass(frozen=True)
class RewardConfig:
    # weights, one per reward row; penalties are negative
    survival: float = 0.025
    tracking_lin_vel_x: float = 1.0
    tracking_lin_vel_y: float = 1.0
    tracking_ang_vel: float = 0.5
    base_height: float = -20.0
    orientation: float = -5.0
    torques: float = -2e-4
    torque_tiredness: float = -1e-2
    power: float = -2e-4
    lin_vel_z: float = -2.0
    ang_vel_xy: float = -0.2
    dof_vel: float = -1e-4
    dof_acc: float = -1e-7
    base_acc: float = -1e-4
    action_rate: float = -1.0
    dof_pos_limits: float = -1.0
    collision: float = -1.0
    feet_swing: float = 3.0
    feet_slip: float = -0.1
    feet_yaw: float = -1.0
    feet_roll: float = -0.1
    feet_distance: float = -1.0
    # shaping parameters
    sigma_x: float = 0.25
    sigma_y: float = 0.25
    sigma_yaw: float = 0.25
    base_height_target: float = 0.68
    feet_distance_ref: float = 0.2
    swing_height_threshold: float = 0.03
    gait_frequency: float = 1.5


POSITIVE_REWARDS = ("survival", "tracking_lin_vel_x", "tracking_lin_vel_y", "tracking_ang_vel", "feet_swing")
PENALTY_REWARDS = (
    "base_height", "orientation", "torques", "torque_tiredness", "power", "lin_vel_z",
    "ang_vel_xy", "dof_vel", "dof_acc", "base_acc", "action_rate", "dof_pos_limits",
    "collision", "feet_slip", "feet_yaw", "feet_roll", "feet_distance",
)
REWARD_NAMES = (
    "survival", "tracking_lin_vel_x", "tracking_lin_vel_y", "tracking_ang_vel", "base_height",
    "orientation", "torques", "torque_tiredness", "power", "lin_vel_z", "ang_vel_xy", "dof_vel",
    "dof_acc", "base_acc", "action_rate", "dof_pos_limits", "collision", "feet_swing",
    "feet_slip", "feet_yaw", "feet_roll", "feet_distance",
)


@dataclass(frozen=True)
class CommandConfig:
    lin_vel_x: Range = (-0.6, 0.6)
    lin_vel_y: Range = (0.0, 0.0)
    ang_vel_yaw: Range = (0.0, 0.0)
    stand_probability: float = 0.1
    resample_time: Range = (4.0, 8.0)
    # curriculum: command-range scale = min_scale + (1 - min_scale) * level
    curriculum: bool = True
    curriculum_init_level: float = 0.0
    curriculum_min_scale: float = 0.2
    curriculum_threshold: float = 0.7
    curriculum_step: float = 0.1
    curriculum_smoothing: float = 0.9


@dataclass(frozen=True)
class RandomizationConfig:
    enabled: bool = True
    mass_scale: Range = (0.8, 1.2)
    com_offset: Range = (-0.03, 0.03)
    kp_scale: Range = (0.8, 1.2)
    kd_scale: Range = (0.8, 1.2)
    joint_friction: Range = (0.0, 0.3)
    contact_friction: Range = (0.5, 1.2)
    contact_stiffness: Range = (7.0e4, 1.3e5)
    restitution: Range = (0.0, 0.3)
    delay: Range = (0.0, 0.02)
    pushes: bool = True
    push_interval: Range = (4.0, 8.0)
    push_velocity: Range = (-0.4, 0.4)
    push_force: Range = (-40.0, 40.0)
    push_duration: Range = (0.1, 0.5)
    terrain_slope: Range = (-0.03, 0.03)
    reset_joint_noise: float = 0.05
    # additive uniform observation noise half-widths, physical units
    noise_gravity: float = 0.05
    noise_ang_vel: float = 0.2
    noise_joint_pos: float = 0.01
    noise_joint_vel: float = 1.0


@dataclass(frozen=True)
class PpoHyperParams:
    gamma: float = 0.99
    lam: float = 0.95
    clip_eps: float = 0.2
    c_value: float = 1.0
    c_entropy: float = 0.01
    learning_rate: float = 3e-4
    num_epochs: int = 5
    num_minibatches: int = 4
    max_grad_norm: float = 1.0
    initial_action_logstd: float = 0.0
    adaptive_lr: bool = False
    desired_kl: float = 0.01


@dataclass(frozen=True)
class NetworkConfig:
    actor_hidden: Tuple[int, ...] = (256, 128)
    critic_hidden: Tuple[int, ...] = (256, 128)
    activation: str = "elu"


@dataclass(frozen=True)
class TerminationConfig:
    min_height_ratio: float = 0.4
    max_base_velocity: float = 10.0


@dataclass(frozen=True)
class RunConfig:
    seed: int = 1
    task: str = "biped"
    num_envs: int = 32
    horizon_steps: int = 24
    iterations: int = 300
    checkpoint_every: int = 50
    control_dt: float = 0.02
    physics_substeps: int = 20
    max_episode_steps: int = 1500
    robot: RobotModelConfig = field(default_factory=RobotModelConfig)
    rewards: RewardConfig = field(default_factory=RewardConfig)
    commands: CommandConfig = field(default_factory=CommandConfig)
    randomization: RandomizationConfig = field(default_factory=RandomizationConfig)
    ppo: PpoHyperParams = field(default_factory=PpoHyperParams)
    network: NetworkConfig = field(default_factory=NetworkConfig)
    termination: TerminationConfig = field(default_factory=TerminationConfig)

    @property
    def physics_dt(self) -> float:
        return self.control_dt / self.physics_substeps

    @property
    def episode_duration(self) -> float:
        return self.max_episode_steps * self.control_dt


TASKS = ("biped", "pointmass")
ACTIVATIONS = ("elu", "tanh")


# ---------------------------------------------------------------- coercion

def _is_dataclass_type(tp: Any) -> bool:
    return isinstance(tp, type) and dataclasses.is_dataclass(tp)


def _coerce(value: Any, tp: Any, key: str) -> Any:
    origin = typing.get_origin(tp)
    if origin is Union or origin is types.UnionType:
        args = typing.get_args(tp)
        if value is None and type(None) in args:
            return None
        inner = [a for a in args if a is not type(None)]
        return _coerce(value, inner[0], key)
    if tp is bool:
        if isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected bool, got {value!r}", key)
    if tp is int:
        if isinstance(value, int) and not isinstance(value, bool):
            return value
        raise ConfigError(f"{key}: expected int, got {value!r}", key)
    if tp is float:
        if isinstance(value, (int, float)) and not isinstance(value, bool):
            return float(value)
        if isinstance(value, str):
            # YAML 1.1 reads exponent forms without a dot, like 1e-3, as strings
            try:
                out = float(value)
            except ValueError:
                out = math.nan
            if math.isfinite(out):
                return out
        raise ConfigError(f"{key}: expected number, got {value!r}", key)
    if tp is str:
        if isinstance(value, str):
            return value
        raise ConfigError(f"{key}: expected string, got {value!r}", key)
    if origin is tuple:
        args = typing.get_args(tp)
        if not isinstance(value, (list, tuple)):
            raise ConfigError(f"{key}: expected a sequence, got {value!r}", key)
        if len(args) == 2 and args[1] is Ellipsis:
            return tuple(_coerce(v, args[0], key) for v in value)
        if len(value) != len(args):
            raise ConfigError(f"{key}: expected {len(args)} entries, got {len(value)}", key)
        return tuple(_coerce(v, a, key) for v, a in zip(value, args))
    raise ConfigError(f"{key}: unsupported field type {tp!r}", key)


def _build(cls: type, data: Any, prefix: str) -> Any:
    if data is None:
        data = {}
    if not isinstance(data, dict):
        raise ConfigError(f"{prefix or '<root>'}: expected a mapping, got {type(data).__name__}", prefix)
    hints = typing.get_type_hints(cls)
    names = {f.name for f in dataclasses.fields(cls)}
    for k in data:
        if k not in names:
            raise ConfigError(f"unknown key '{prefix}{k}'", f"{prefix}{k}")
    kwargs = {}
    for f in dataclasses.fields(cls):
        if f.name not in data:
            continue
        tp = hints[f.name]
        key = prefix + f.name
        if _is_dataclass_type(tp):
            kwargs[f.name] = _build(tp, data[f.name], key + ".")
        else:
            kwargs[f.name] = _coerce(data[f.name], tp, key)
    return cls(**kwargs)


# ---------------------------------------------------------------- validation

def _check(cond: bool, key: str, bound: str) -> None:
    if not cond:
        raise ConfigError(f"invariant violated: {key} must satisfy {bound}", key)


def validate(cfg: RunConfig) -> RunConfig:
    """Check every documented invariant; return ``cfg`` unchanged."""
    _check(0 <= cfg.seed < 2**64, "seed", "0 <= seed < 2**64")
    _check(cfg.task in TASKS, "task", f"one of {TASKS}")
    for key in ("num_envs", "horizon_steps", "iterations", "physics_substeps", "max_episode_steps"):
        _check(getattr(cfg, key) >= 1, key, ">= 1")
    _check(cfg.checkpoint_every >= 0, "checkpoint_every", ">= 0")
    _check(cfg.control_dt > 0, "control_dt", "> 0")

    r = cfg.robot
    _check(r.action_scale > 0, "robot.action_scale", "> 0")
    _check(r.clip_actions > 0, "robot.clip_actions", "> 0")
    for key in ("kp", "kd"):
        gains = getattr(r, key)
        if gains is not None:
            _check(all(g >= 0 for g in gains), f"robot.{key}", ">= 0")

    w = cfg.rewards
    for name in POSITIVE_REWARDS:
        _check(getattr(w, name) >= 0, f"rewards.{name}", ">= 0 (reward)")
    for name in PENALTY_REWARDS:
        _check(getattr(w, name) <= 0, f"rewards.{name}", "<= 0 (penalty)")
    for name in ("sigma_x", "sigma_y", "sigma_yaw", "gait_frequency"):
        _check(getattr(w, name) > 0, f"rewards.{name}", "> 0")
    for name in ("base_height_target", "feet_distance_ref", "swing_height_threshold"):
        _check(getattr(w, name) >= 0, f"rewards.{name}", ">= 0")

    c = cfg.commands
    for name in ("lin_vel_x", "lin_vel_y", "ang_vel_yaw", "resample_time"):
        lo, hi = getattr(c, name)
        _check(lo <= hi, f"commands.{name}", "min <= max")
    _check(c.resample_time[0] > 0, "commands.resample_time", "min > 0")
    _check(0.0 <= c.stand_probability <= 1.0, "commands.stand_probability", "in [0, 1]")
    _check(0.0 <= c.curriculum_init_level <= 1.0, "commands.curriculum_init_level", "in [0, 1]")
    _check(0.0 <= c.curriculum_min_scale <= 1.0, "commands.curriculum_min_scale", "in [0, 1]")
    _check(c.curriculum_step >= 0, "commands.curriculum_step", ">= 0")
    _check(0.0 <= c.curriculum_smoothing < 1.0, "commands.curriculum_smoothing", "in [0, 1)")

    d = cfg.randomization
    for f in dataclasses.fields(d):
        val = getattr(d, f.name)
        if isinstance(val, tuple):
            _check(val[0] <= val[1], f"randomization.{f.name}", "min <= max")
    for name in ("mass_scale", "kp_scale", "kd_scale", "contact_stiffness", "push_interval"):
        _check(getattr(d, name)[0] > 0, f"randomization.{name}", "min > 0")
    for name in ("joint_friction", "contact_friction", "delay", "push_duration"):
        _check(getattr(d, name)[0] >= 0, f"randomization.{name}", "min >= 0")
    _check(0.0 <= d.restitution[0] and d.restitution[1] <= 1.0, "randomization.restitution", "within [0, 1]")
    for name in ("noise_gravity", "noise_ang_vel", "noise_joint_pos", "noise_joint_vel", "reset_joint_noise"):
        _check(getattr(d, name) >= 0, f"randomization.{name}", ">= 0")

    p = cfg.ppo
    _check(0.0 <= p.gamma <= 1.0, "ppo.gamma", "in [0, 1]")
    _check(0.0 <= p.lam <= 1.0, "ppo.lam", "in [0, 1]")
    _check(p.clip_eps > 0, "ppo.clip_eps", "> 0")
    _check(p.c_value >= 0, "ppo.c_value", ">= 0")
    _check(p.c_entropy >= 0, "ppo.c_entropy", ">= 0")
    _check(p.learning_rate > 0, "ppo.learning_rate", "> 0")
    _check(p.num_epochs >= 1, "ppo.num_epochs", ">= 1")
    _check(p.num_minibatches >= 1, "ppo.num_minibatches", ">= 1")
    _check(p.max_grad_norm > 0, "ppo.max_grad_norm", "> 0")
    _check(p.desired_kl > 0, "ppo.desired_kl", "> 0")
    _check(cfg.num_envs * cfg.horizon_steps >= p.num_minibatches, "ppo.num_minibatches",
           "<= num_envs * horizon_steps")

    n = cfg.network
    _check(all(h >= 1 for h in n.actor_hidden), "network.actor_hidden", "sizes >= 1")
    _check(all(h >= 1 for h in n.critic_hidden), "network.critic_hidden", "sizes >= 1")
    _check(n.activation in ACTIVATIONS, "network.activation", f"one of {ACTIVATIONS}")

    t = cfg.termination
    _check(t.min_height_ratio >= 0, "termination.min_height_ratio", ">= 0")
    _check(t.max_base_velocity > 0, "termination.max_base_velocity", "> 0")
    return cfg


# ---------------------------------------------------------------- public API

def from_dict(data: Any) -> RunConfig:
    return validate(_build(RunConfig, data, ""))


def to_dict(cfg: Any) -> dict:
    out = {}
    for f in dataclasses.fields(cfg):
        val = getattr(cfg, f.name)
        if dataclasses.is_dataclass(val):
            out[f.name] = to_dict(val)
        elif isinstance(val, tuple):
            out[f.name] = list(val)
        else:
            out[f.name] = val
    return out


def dumps(cfg: RunConfig) -> str:
    return yaml.safe_dump(to_dict(cfg), sort_keys=False)


def save_config(cfg: RunConfig, path: str | os.PathLike) -> None:
    Path(path).write_text(dumps(cfg))


def loads(text: str) -> RunConfig:
    try:
        data = yaml.safe_load(text)
    except yaml.YAMLError as exc:
        mark = getattr(exc, "problem_mark", None)
        line = mark.line + 1 if mark is not None else None
        where = f" at line {line}" if line is not None else ""
        raise ConfigError(f"could not parse config{where}: {exc}", line=line) from exc
    return from_dict(data)


def load_config(path: str | os.PathLike) -> RunConfig:
    """Read a YAML config file; ``LOCOGYM_SEED`` replaces ``seed`` when set."""
    text = Path(path).read_text()
    cfg = loads(text)
    env_seed = os.environ.get(SEED_ENV_VAR)
    if env_seed:
        try:
            seed = int(env_seed)
        except ValueError as exc:
            raise ConfigError(f"{SEED_ENV_VAR} must be an integer, got {env_seed!r}", "seed") from exc
        cfg = validate(dataclasses.replace(cfg, seed=seed))
    return cfg


def _set_path(obj: Any, parts: Sequence[str], raw: Any, full_key: str) -> Any:
    if not dataclasses.is_dataclass(obj):
        raise ConfigError(f"cannot resolve key '{full_key}'", full_key)
    names = {f.name for f in dataclasses.fields(obj)}
    head = parts[0]
    if head not in names:
        raise ConfigError(f"unknown key '{full_key}'", full_key)
    tp = typing.get_type_hints(type(obj))[head]
    if len(parts) == 1:
        if _is_dataclass_type(tp):
            raise ConfigError(f"'{full_key}' is a section, not a value", full_key)
        return dataclasses.replace(obj, **{head: _coerce(raw, tp, full_key)})
    return dataclasses.replace(obj, **{head: _set_path(getattr(obj, head), parts[1:], raw, full_key)})


def apply_overrides(cfg: RunConfig, overrides: Sequence[str]) -> RunConfig:
    """Apply ``section.key=value`` strings; values are parsed as YAML scalars."""
    for item in overrides:
        if "=" not in item:
            raise ConfigError(f"override '{item}' is not of the form key=value")
        key, _, text = item.partition("=")
        key = key.strip()
        try:
            raw = yaml.safe_load(text)
        except yaml.YAMLError as exc:
            raise ConfigError(f"could not parse value for '{key}': {text!r}", key) from exc
        cfg = _set_path(cfg, key.split("."), raw, key)
    return validate(cfg)


def default_config() -> RunConfig:
    return validate(RunConfig())
