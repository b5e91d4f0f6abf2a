"""Vectorized reward table. Every array has the env batch as its leading axis."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from ..config import REWARD_NAMES, RewardConfig


@dataclass(frozen=True)
class RewardContext:
    command: np.ndarray  # (N, 3)
    base_lin_vel: np.ndarray  # (N, 3) base frame
    base_ang_vel: np.ndarray  # (N, 3) base frame
    prev_base_lin_vel: np.ndarray
    prev_base_ang_vel: np.ndarray
    base_height: np.ndarray  # (N,) above local ground
    base_pitch: np.ndarray  # (N,)
    projected_gravity: np.ndarray  # (N, 3)
    joint_pos: np.ndarray  # (N, n)
    joint_vel: np.ndarray
    prev_joint_vel: np.ndarray
    q_min: np.ndarray  # (N, n)
    q_max: np.ndarray
    torques: np.ndarray  # (N, n) mean over the control step
    tau_max: np.ndarray  # (N, n)
    action: np.ndarray  # (N, n)
    prev_action: np.ndarray
    n_collision: np.ndarray  # (N,)
    gait_active: np.ndarray  # (N,) bool
    gait_phase: np.ndarray  # (N,)
    foot_pos: np.ndarray  # (N, nf, 3)
    foot_vel: np.ndarray  # (N, nf, 3)
    foot_pitch: np.ndarray  # (N, nf)
    foot_height: np.ndarray  # (N, nf)
    foot_contact: np.ndarray  # (N, nf) bool
    dt: float


def _sq(x: np.ndarray) -> np.ndarray:
    return np.sum(x * x, axis=-1)


def swing_expected(phase: np.ndarray, active: np.ndarray, num_feet: int) -> np.ndarray:
    idx = np.arange(num_feet)
    lo = idx / num_feet
    hi = (idx + 1) / num_feet
    inside = (phase[:, None] >= lo) & (phase[:, None] < hi)
    return inside & active[:, None]


def reward_terms(ctx: RewardContext, cfg: RewardConfig) -> dict[str, np.ndarray]:
    """Unweighted value of every table row."""
    N = ctx.command.shape[0]
    t = {}
    t["survival"] = np.ones(N)
    t["tracking_lin_vel_x"] = np.exp(-((ctx.command[:, 0] - ctx.base_lin_vel[:, 0]) ** 2) / cfg.sigma_x)
    t["tracking_lin_vel_y"] = np.exp(-((ctx.command[:, 1] - ctx.base_lin_vel[:, 1]) ** 2) / cfg.sigma_y)
    t["tracking_ang_vel"] = np.exp(-((ctx.command[:, 2] - ctx.base_ang_vel[:, 2]) ** 2) / cfg.sigma_yaw)
    t["base_height"] = (cfg.base_height_target - ctx.base_height) ** 2
    t["orientation"] = _sq(ctx.projected_gravity[:, :2])
    t["torques"] = _sq(ctx.torques)
    t["torque_tiredness"] = _sq(ctx.torques / ctx.tau_max)
    t["power"] = np.maximum(np.sum(ctx.torques * ctx.joint_vel, axis=-1), 0.0)
    t["lin_vel_z"] = ctx.base_lin_vel[:, 2] ** 2
    t["ang_vel_xy"] = _sq(ctx.base_ang_vel[:, :2])
    t["dof_vel"] = _sq(ctx.joint_vel)
    t["dof_acc"] = _sq((ctx.joint_vel - ctx.prev_joint_vel) / ctx.dt)
    t["base_acc"] = (_sq((ctx.base_lin_vel - ctx.prev_base_lin_vel) / ctx.dt)
                     + _sq((ctx.base_ang_vel - ctx.prev_base_ang_vel) / ctx.dt))
    t["action_rate"] = _sq(ctx.action - ctx.prev_action)
    t["dof_pos_limits"] = (np.sum(ctx.joint_pos > ctx.q_max, axis=-1)
                           + np.sum(ctx.joint_pos < ctx.q_min, axis=-1)).astype(np.float64)
    t["collision"] = ctx.n_collision.astype(np.float64)
    nf = ctx.foot_height.shape[1]
    swinging = ctx.foot_height > cfg.swing_height_threshold
    t["feet_swing"] = np.sum(swing_expected(ctx.gait_phase, ctx.gait_active, nf) & swinging, axis=-1).astype(np.float64)
    t["feet_slip"] = np.sum(ctx.foot_contact * _sq(ctx.foot_vel), axis=-1)
    t["feet_yaw"] = _sq(ctx.foot_pitch - ctx.base_pitch[:, None])
    t["feet_roll"] = np.zeros(N)  # no foot roll in the sagittal plane
    if nf >= 2:
        d = ctx.foot_pos[:, 0, :2] - ctx.foot_pos[:, 1, :2]
        t["feet_distance"] = np.maximum(cfg.feet_distance_ref - np.sqrt(_sq(d)), 0.0)
    else:
        t["feet_distance"] = np.zeros(N)
    return t


def compute_rewards(ctx: RewardContext, cfg: RewardConfig) -> tuple[np.ndarray, dict[str, np.ndarray]]:
    """Weighted sum of the table rows, clamped at zero; the breakdown holds weighted rows."""
    terms = reward_terms(ctx, cfg)
    breakdown = {name: getattr(cfg, name) * terms[name] for name in REWARD_NAMES}
    total = np.zeros(ctx.command.shape[0])
    for name in REWARD_NAMES:
        total = total + breakdown[name]
    return np.maximum(total, 0.0), breakdown
