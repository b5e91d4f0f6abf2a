"""Observation layout and assembly, shared by the training env and the deployment runtime."""

from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property

import numpy as np

# default per-block multipliers applied after noise
DEFAULT_SCALES = {
    "commands": 1.0,
    "gait": 1.0,
    "gravity": 1.0,
    "ang_vel": 0.25,
    "joint_pos": 1.0,
    "joint_vel": 0.05,
    "prev_action": 1.0,
    "body_mass": 0.05,
    "body_com": 10.0,
    "base_lin_vel": 2.0,
    "base_height": 1.0,
    "push_force": 0.02,
    "push_torque": 0.1,
}

PRIVILEGED_BLOCKS = (
    ("body_mass", 1),
    ("body_com", 3),
    ("base_lin_vel", 3),
    ("base_height", 1),
    ("push_force", 2),
    ("push_torque", 3),
)

Block = tuple  # (name, dim, scale)


@dataclass(frozen=True)
class ObservationLayout:
    """Named observation blocks in order, each with a dimension and a multiplier."""

    actor: tuple[Block, ...]
    privileged: tuple[Block, ...] = ()
    num_joints: int = 0

    @property
    def actor_blocks(self) -> tuple[tuple[str, int], ...]:
        return tuple((name, d) for name, d, _ in self.actor)

    @property
    def critic_blocks(self) -> tuple[tuple[str, int], ...]:
        return self.actor_blocks + tuple((name, d) for name, d, _ in self.privileged)

    @property
    def actor_dim(self) -> int:
        return sum(d for _, d, _ in self.actor)

    @property
    def critic_dim(self) -> int:
        return self.actor_dim + sum(d for _, d, _ in self.privileged)

    @cached_property
    def actor_scale(self) -> np.ndarray:
        return np.concatenate([np.full(d, float(s)) for _, d, s in self.actor])

    @cached_property
    def privileged_scale(self) -> np.ndarray:
        if not self.privileged:
            return np.zeros(0)
        return np.concatenate([np.full(d, float(s)) for _, d, s in self.privileged])

    def slices(self, critic: bool = True) -> dict[str, slice]:
        out, start = {}, 0
        for name, d in (self.critic_blocks if critic else self.actor_blocks):
            out[name] = slice(start, start + d)
            start += d
        return out

    def to_dict(self) -> dict:
        return {
            "num_joints": self.num_joints,
            "actor": [[name, int(d), float(s)] for name, d, s in self.actor],
            "privileged": [[name, int(d), float(s)] for name, d, s in self.privileged],
        }

    @classmethod
    def from_dict(cls, data: dict) -> "ObservationLayout":
        return cls(tuple((str(n), int(d), float(s)) for n, d, s in data["actor"]),
                   tuple((str(n), int(d), float(s)) for n, d, s in data.get("privileged", [])),
                   int(data.get("num_joints", 0)))


def locomotion_layout(num_joints: int, scales: dict | None = None) -> ObservationLayout:
    """Proprioceptive actor blocks plus the privileged critic blocks for a legged robot."""
    sc = {**DEFAULT_SCALES, **(scales or {})}
    n = num_joints
    actor = (("commands", 3), ("gait", 2), ("gravity", 3), ("ang_vel", 3),
             ("joint_pos", n), ("joint_vel", n), ("prev_action", n))
    return ObservationLayout(tuple((name, d, sc[name]) for name, d in actor),
                             tuple((name, d, sc[name]) for name, d in PRIVILEGED_BLOCKS), n)


@dataclass(frozen=True)
class SensorFrame:
    """What a robot (real or simulated) reports each control tick."""

    joint_pos: np.ndarray
    joint_vel: np.ndarray
    base_ang_vel: np.ndarray  # (3,) base frame
    gravity: np.ndarray  # (3,) unit gravity direction in the base frame
    timestamp: float = 0.0


@dataclass(frozen=True)
class PrivilegedState:
    body_mass: float
    body_com: np.ndarray  # (3,)
    base_lin_vel: np.ndarray  # (3,) base frame
    base_height: float
    push_force: np.ndarray  # (2,)
    push_torque: np.ndarray  # (3,)


def actor_observation(layout: ObservationLayout, command, gait, sensors: SensorFrame, default_joint_pos,
                      prev_action) -> np.ndarray:
    raw = np.concatenate([
        np.asarray(command, dtype=np.float64),
        np.asarray(gait, dtype=np.float64),
        sensors.gravity,
        sensors.base_ang_vel,
        sensors.joint_pos - default_joint_pos,
        sensors.joint_vel,
        np.asarray(prev_action, dtype=np.float64),
    ])
    if raw.shape[0] != layout.actor_dim:
        raise ValueError(f"actor observation has {raw.shape[0]} entries, layout expects {layout.actor_dim}")
    return raw * layout.actor_scale


def privileged_observation(layout: ObservationLayout, priv: PrivilegedState) -> np.ndarray:
    raw = np.concatenate([
        [priv.body_mass], priv.body_com, priv.base_lin_vel, [priv.base_height], priv.push_force, priv.push_torque,
    ])
    return raw * layout.privileged_scale


@dataclass(frozen=True)
class ObservationBundle:
    actor: np.ndarray
    critic: np.ndarray
