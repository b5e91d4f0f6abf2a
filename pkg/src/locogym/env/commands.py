"""Velocity commands, the gait clock and the command-range curriculum."""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np

from ..config import CommandConfig


@dataclass(frozen=True)
class CommandVector:
    lin_vel_x: float = 0.0
    lin_vel_y: float = 0.0
    ang_vel_yaw: float = 0.0
    stand_still: bool = False

    def __post_init__(self):
        if self.stand_still and (self.lin_vel_x or self.lin_vel_y or self.ang_vel_yaw):
            raise ValueError("a stand-still command must have zero velocities")

    def as_array(self) -> np.ndarray:
        return np.array([self.lin_vel_x, self.lin_vel_y, self.ang_vel_yaw])


STAND_STILL = CommandVector(stand_still=True)


def command_scale(cfg: CommandConfig, level: float) -> float:
    """Multiplier on the configured velocity ranges for a curriculum level in [0, 1]."""
    if not cfg.curriculum:
        return 1.0
    return cfg.curriculum_min_scale + (1.0 - cfg.curriculum_min_scale) * level


def resample_command(cfg: CommandConfig, rng: np.random.Generator, level: float) -> CommandVector:
    """Draw a new command. Planar tasks only use the forward channel.

    Two uniform draws are consumed on every call so an env's random stream
    advances identically whichever branch is taken.
    """
    if not 0.0 <= level <= 1.0:
        raise ValueError("curriculum level must lie in [0, 1]")
    u_stand, u_vel = rng.random(2)
    if u_stand < cfg.stand_probability:
        return STAND_STILL
    lo, hi = cfg.lin_vel_x
    s = command_scale(cfg, level)
    return CommandVector(lin_vel_x=float(s * (lo + (hi - lo) * u_vel)))


@dataclass
class GaitClock:
    frequency: float
    phase: float = 0.0
    active: bool = True

    def observation(self) -> tuple[float, float]:
        if not self.active:
            return 0.0, 0.0
        angle = 2.0 * math.pi * self.phase
        return math.cos(angle), math.sin(angle)

    def advance(self, dt: float) -> None:
        if self.active:
            self.phase = (self.phase + self.frequency * dt) % 1.0

    def set_active(self, active: bool) -> None:
        # standing zeroes the clock; walking restarts it from phase 0
        if active != self.active:
            self.phase = 0.0
        self.active = active


def swing_windows(phase: float, num_feet: int) -> np.ndarray:
    """Foot ``i`` is expected to swing during phase ``[i/num_feet, (i+1)/num_feet)``."""
    return np.array([i / num_feet <= phase < (i + 1) / num_feet for i in range(num_feet)])


def gait_indicator(clock: GaitClock, foot_height, swing_threshold: float) -> tuple[np.ndarray, np.ndarray]:
    """Per foot: (expected to swing, currently swinging). Nothing is expected while standing."""
    foot_height = np.asarray(foot_height, dtype=np.float64)
    swinging = foot_height > swing_threshold
    if not clock.active:
        return np.zeros(foot_height.shape[0], dtype=bool), swinging
    return swing_windows(clock.phase, foot_height.shape[0]), swinging


class Curriculum:
    """Moving average of the normalized forward-tracking reward drives the level up."""

    def __init__(self, cfg: CommandConfig):
        self.cfg = cfg
        self.level = cfg.curriculum_init_level if cfg.curriculum else 1.0
        self.average = 0.0

    def update(self, tracking: float) -> float:
        if not self.cfg.curriculum:
            return self.level
        s = self.cfg.curriculum_smoothing
        self.average = s * self.average + (1.0 - s) * tracking
        if self.average > self.cfg.curriculum_threshold:
            self.level = min(1.0, self.level + self.cfg.curriculum_step)
        return self.level

    def state_dict(self) -> dict:
        return {"level": self.level, "average": self.average}

    def load_state_dict(self, state: dict) -> None:
        self.level = float(state["level"])
        self.average = float(state["average"])
