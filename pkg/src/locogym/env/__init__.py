"""Vectorized training environments and their observation, reward and randomization pieces."""

from ..config import ConfigError, RunConfig
from .base import StepResult, env_rng, termination_status
from .biped import BipedEnv
from .commands import STAND_STILL, CommandVector, Curriculum, GaitClock, command_scale, gait_indicator, resample_command
from .delay import DelayLine
from .observations import (
    ObservationBundle,
    ObservationLayout,
    PrivilegedState,
    SensorFrame,
    actor_observation,
    locomotion_layout,
    privileged_observation,
)
from .pointmass import PointMassEnv
from .randomization import RandomizationSample, sample_randomization, sample_within
from .rewards import RewardContext, compute_rewards, reward_terms
from .trajectory import TrajectoryFormatError, TrajectoryWriter, read_trajectory


def make_env(cfg: RunConfig, num_envs: int | None = None, index_offset: int = 0):
    """Environment for ``cfg.task``."""
    if cfg.task == "biped":
        return BipedEnv(cfg, num_envs, index_offset)
    if cfg.task == "pointmass":
        return PointMassEnv(cfg, num_envs, index_offset)
    raise ConfigError(f"unknown task {cfg.task!r}", "task")


__all__ = [
    "StepResult", "env_rng", "termination_status", "BipedEnv", "PointMassEnv", "make_env",
    "STAND_STILL", "CommandVector", "Curriculum", "GaitClock", "command_scale", "gait_indicator", "resample_command",
    "DelayLine",
    "ObservationBundle", "ObservationLayout", "PrivilegedState", "SensorFrame", "actor_observation",
    "locomotion_layout", "privileged_observation", "RandomizationSample", "sample_randomization",
    "sample_within", "RewardContext", "compute_rewards", "reward_terms", "TrajectoryFormatError",
    "TrajectoryWriter", "read_trajectory",
]
