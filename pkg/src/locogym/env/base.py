"""Batch step result and the pieces every vectorized env shares."""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np


def env_rng(seed: int, env_index: int) -> np.random.Generator:
    """Counter-based stream for one env; independent of how many envs run beside it."""
    return np.random.Generator(np.random.Philox(np.random.SeedSequence([seed, env_index])))


@dataclass
class StepResult:
    """One control step for a batch of ``N`` envs.

    ``actor_obs``/``critic_obs`` describe the state the policy sees next (after
    any auto-reset or command resample). ``bootstrap_critic_obs`` is the critic
    view of the state the step actually reached, before reset or resample; the
    trainer evaluates the value function there for timeout and truncation
    bootstrapping. ``q``/``v`` are likewise the pre-reset physics state.
    """

    actor_obs: np.ndarray
    critic_obs: np.ndarray
    bootstrap_critic_obs: np.ndarray
    reward: np.ndarray
    breakdown: dict
    done: np.ndarray
    early: np.ndarray
    timeout: np.ndarray
    truncated: np.ndarray
    episode_step: np.ndarray
    time: np.ndarray
    command: np.ndarray
    action: np.ndarray
    q: np.ndarray
    v: np.ndarray

    @property
    def num_envs(self) -> int:
        return self.reward.shape[0]

    def row(self, i: int) -> dict:
        out = {}
        for name, val in self.__dict__.items():
            if name == "breakdown":
                out[name] = {k: float(x[i]) for k, x in val.items()}
            else:
                out[name] = val[i]
        return out


def stack_results(rows: list[dict], reward_names) -> StepResult:
    """Assemble per-env dicts (fixed env order) into a batch result."""
    def col(key, dtype=np.float64):
        return np.array([r[key] for r in rows], dtype=dtype)

    return StepResult(
        actor_obs=np.stack([r["actor_obs"] for r in rows]),
        critic_obs=np.stack([r["critic_obs"] for r in rows]),
        bootstrap_critic_obs=np.stack([r["bootstrap_critic_obs"] for r in rows]),
        reward=col("reward"),
        breakdown={k: np.array([r["breakdown"][k] for r in rows]) for k in reward_names},
        done=col("done", bool),
        early=col("early", bool),
        timeout=col("timeout", bool),
        truncated=col("truncated", bool),
        episode_step=col("episode_step", np.int64),
        time=col("time"),
        command=np.stack([r["command"] for r in rows]),
        action=np.stack([r["action"] for r in rows]),
        q=np.stack([r["q"] for r in rows]),
        v=np.stack([r["v"] for r in rows]),
    )


def check_actions(actions, num_envs: int, num_actions: int) -> np.ndarray:
    actions = np.asarray(actions, dtype=np.float64)
    if actions.shape != (num_envs, num_actions):
        raise ValueError(f"actions must have shape ({num_envs}, {num_actions}), got {actions.shape}")
    return actions


def termination_status(base_height: float, base_speed: float, step_count: int, min_height: float,
                       max_speed: float, max_steps: int, finite: bool = True) -> str:
    """'early', 'timeout' or 'running'. Early termination wins over a simultaneous timeout."""
    if not finite or not base_height >= min_height or not base_speed <= max_speed:
        return "early"
    if step_count >= max_steps:
        return "timeout"
    return "running"
