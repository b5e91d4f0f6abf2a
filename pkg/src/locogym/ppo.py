"""Rollout collection, advantage estimation and the clipped-surrogate update."""

from __future__ import annotations

import csv
import io
import math
from collections import deque
from dataclasses import dataclass, fields
from pathlib import Path
from typing import Callable, Optional

import numpy as np

from .config import RunConfig
from .env import Curriculum, make_env
from .nn import (
    MLP,
    AdamState,
    GaussianPolicy,
    NonFiniteLoss,
    adam_step,
    entropy_loss,
    sample_action,
    surrogate_loss,
    value_loss,
)

EPISODE_WINDOW = 100  # completed episodes averaged for mean_episode_length


class TrainingError(RuntimeError):
    def __init__(self, message: str, iteration: int | None = None, minibatch: int | None = None):
        self.message = message
        self.iteration = iteration
        self.minibatch = minibatch
        where = []
        if iteration is not None:
            where.append(f"iteration {iteration}")
        if minibatch is not None:
            where.append(f"minibatch {minibatch}")
        super().__init__(f"{message} ({', '.join(where)})" if where else message)


@dataclass
class RolloutBuffer:
    """Arrays over (horizon, num_envs).

    ``next_values`` holds V at the state each step reached, evaluated before
    any auto-reset or command resample. ``bootstrap_values`` is its last row:
    the value of the post-horizon state.
    """

    actor_obs: np.ndarray
    critic_obs: np.ndarray
    actions: np.ndarray
    log_probs: np.ndarray
    rewards: np.ndarray
    values: np.ndarray
    next_values: np.ndarray
    dones: np.ndarray
    early: np.ndarray
    timeouts: np.ndarray
    truncated: np.ndarray
    breakdown: dict

    @property
    def horizon(self) -> int:
        return self.rewards.shape[0]

    @property
    def num_envs(self) -> int:
        return self.rewards.shape[1]

    @property
    def bootstrap_values(self) -> np.ndarray:
        return self.next_values[-1]


@dataclass
class AdvantageTarget:
    advantages: np.ndarray  # normalized over the whole batch
    returns: np.ndarray  # raw advantages + values
    raw_advantages: np.ndarray


def gae(rewards, values, next_values, early, cut, gamma: float, lam: float) -> np.ndarray:
    """Raw advantages by backward recursion over the leading (time) axis.

    ``next_values`` is zeroed where ``early``; the trace stops after any step
    flagged in ``cut`` (termination, timeout or command truncation).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    adv = np.zeros_like(rewards)
    last = np.zeros(rewards.shape[1:])
    for t in range(rewards.shape[0] - 1, -1, -1):
        delta = rewards[t] + gamma * np.where(early[t], 0.0, next_values[t]) - values[t]
        last = delta + gamma * lam * np.where(cut[t], 0.0, last)
        adv[t] = last
    return adv


def compute_gae(buffer: RolloutBuffer, gamma: float, lam: float) -> AdvantageTarget:
    raw = gae(buffer.rewards, buffer.values, buffer.next_values, buffer.early,
              buffer.dones | buffer.truncated, gamma, lam)
    return AdvantageTarget(normalize(raw), raw + buffer.values, raw)


def normalize(x: np.ndarray) -> np.ndarray:
    std = float(np.std(x))
    return (x - np.mean(x)) / (std + 1e-8) if std > 0 else x - np.mean(x)


def critic_values(critic: MLP, obs: np.ndarray) -> np.ndarray:
    return critic.forward(obs)[:, 0]


class EpisodeTracker:
    """Running episode lengths per env and a window of recently completed ones."""

    def __init__(self, num_envs: int, window: int = EPISODE_WINDOW):
        self.current = np.zeros(num_envs, dtype=np.int64)
        self.completed: deque[int] = deque(maxlen=window)

    def update(self, done: np.ndarray) -> None:
        self.current += 1
        for i in np.nonzero(done)[0]:
            self.completed.append(int(self.current[i]))
            self.current[i] = 0

    def mean_length(self) -> float:
        """Mean of the completed window; before any episode ends, the mean running length."""
        if self.completed:
            return float(np.mean(self.completed))
        return float(np.mean(self.current))


def collect_rollout(policy: GaussianPolicy, critic: MLP, env, horizon: int, rng: np.random.Generator,
                    obs=None, tracker: Optional[EpisodeTracker] = None, on_step: Optional[Callable] = None):
    """Step every env ``horizon`` times under the stochastic policy.

    Returns ``(buffer, last_observation)``.
    """
    if obs is None:
        obs = env.reset_all()
    T, N = horizon, env.num_envs
    buf = {k: [] for k in ("actor_obs", "critic_obs", "actions", "log_probs", "rewards", "values",
                           "next_values", "dones", "early", "timeouts", "truncated")}
    breakdown = {k: np.zeros((T, N)) for k in env.reward_names}
    for t in range(T):
        actions, logp = sample_action(policy, obs.actor, rng)
        values = critic_values(critic, obs.critic)
        res = env.step(actions)
        buf["actor_obs"].append(obs.actor)
        buf["critic_obs"].append(obs.critic)
        buf["actions"].append(actions)
        buf["log_probs"].append(logp)
        buf["rewards"].append(res.reward)
        buf["values"].append(values)
        buf["next_values"].append(critic_values(critic, res.bootstrap_critic_obs))
        buf["dones"].append(res.done)
        buf["early"].append(res.early)
        buf["timeouts"].append(res.timeout)
        buf["truncated"].append(res.truncated)
        for k in env.reward_names:
            breakdown[k][t] = res.breakdown[k]
        if tracker is not None:
            tracker.update(res.done)
        if on_step is not None:
            on_step(res)
        obs = type(obs)(res.actor_obs, res.critic_obs)
    arrays = {k: np.stack(v) for k, v in buf.items()}
    return RolloutBuffer(breakdown=breakdown, **arrays), obs


@dataclass
class UpdateStats:
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float
    approx_kl: float
    learning_rate: float


def ppo_update(policy: GaussianPolicy, critic: MLP, buffer: RolloutBuffer, targets: AdvantageTarget, hp,
               adam: AdamState, rng: np.random.Generator, lr: float) -> UpdateStats:
    """``num_epochs`` passes of shuffled minibatch Adam steps on the combined loss."""
    B = buffer.horizon * buffer.num_envs
    flat = lambda a: a.reshape((B,) + a.shape[2:])  # noqa: E731
    actor_obs, critic_obs = flat(buffer.actor_obs), flat(buffer.critic_obs)
    actions, old_logp = flat(buffer.actions), flat(buffer.log_probs)
    adv, returns = flat(targets.advantages), flat(targets.returns)
    params = policy.params + critic.params
    sums = np.zeros(5)
    count = 0
    for _ in range(hp.num_epochs):
        perm = rng.permutation(B)
        for mb, idx in enumerate(np.array_split(perm, hp.num_minibatches)):
            try:
                info, g_pol = surrogate_loss(policy, actor_obs[idx], actions[idx], old_logp[idx], adv[idx],
                                             hp.clip_eps)
                v_loss, g_val = value_loss(critic, critic_obs[idx], returns[idx])
            except NonFiniteLoss as exc:
                raise TrainingError(str(exc), minibatch=count) from exc
            ent, g_ent = entropy_loss(policy)
            grads = [gp - hp.c_entropy * ge for gp, ge in zip(g_pol, g_ent)]
            grads += [hp.c_value * g for g in g_val]
            if not all(np.all(np.isfinite(g)) for g in grads):
                raise TrainingError("non-finite gradient", minibatch=count)
            if hp.adaptive_lr:
                if info.approx_kl > 2.0 * hp.desired_kl:
                    lr = max(1e-5, lr / 1.5)
                elif 0.0 < info.approx_kl < 0.5 * hp.desired_kl:
                    lr = min(1e-2, lr * 1.5)
            adam_step(params, grads, adam, lr, hp.max_grad_norm)
            sums += (info.loss, v_loss, ent, info.clip_fraction, info.approx_kl)
            count += 1
    m = sums / max(count, 1)
    return UpdateStats(*(float(x) for x in m), learning_rate=float(lr))


@dataclass
class TrainStats:
    iteration: int
    mean_reward: float
    mean_episode_length: float
    policy_loss: float
    value_loss: float
    entropy: float
    clip_fraction: float
    approx_kl: float
    learning_rate: float
    curriculum_level: float
    reward_components: dict

    def row(self) -> dict:
        out = {f.name: getattr(self, f.name) for f in fields(self) if f.name != "reward_components"}
        out.update({f"rew_{k}": v for k, v in self.reward_components.items()})
        return out


METRIC_COLUMNS = ("iteration", "mean_reward", "mean_episode_length", "policy_loss", "value_loss", "entropy",
                  "clip_fraction", "approx_kl", "learning_rate", "curriculum_level")


def metric_columns(reward_names) -> list[str]:
    """``metrics.csv`` header: the fixed columns, then one ``rew_<name>`` per reward component."""
    return list(METRIC_COLUMNS) + [f"rew_{k}" for k in reward_names]


def _fmt(x) -> str:
    return str(x) if isinstance(x, (int, np.integer)) else repr(float(x))


class Trainer:
    """Seeded collect, GAE, update loop over one batch env."""

    def __init__(self, cfg: RunConfig, env=None):
        self.cfg = cfg
        self.env = env if env is not None else make_env(cfg)
        net = cfg.network
        init_rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed, spawn_key=(1,))))
        self.rng = np.random.Generator(np.random.Philox(np.random.SeedSequence(cfg.seed, spawn_key=(2,))))
        self.policy = GaussianPolicy.initialized(self.env.actor_dim, net.actor_hidden, self.env.num_actions,
                                                 net.activation, init_rng, cfg.ppo.initial_action_logstd)
        self.critic = MLP.initialized((self.env.critic_dim, *net.critic_hidden, 1), net.activation, init_rng)
        self.adam = AdamState.zeros_like(self.policy.params + self.critic.params)
        self.lr = cfg.ppo.learning_rate
        self.curriculum = Curriculum(cfg.commands)
        self.env.curriculum_level = self.curriculum.level
        self.tracker = EpisodeTracker(self.env.num_envs)
        self.iteration = 0
        self.obs = None

    def step(self, on_step: Optional[Callable] = None) -> TrainStats:
        """One collect, GAE, update iteration."""
        cfg, hp = self.cfg, self.cfg.ppo
        if self.obs is None:
            self.obs = self.env.reset_all()
        it = self.iteration
        try:
            buffer, self.obs = collect_rollout(self.policy, self.critic, self.env, cfg.horizon_steps, self.rng,
                                               self.obs, self.tracker, on_step)
            targets = compute_gae(buffer, hp.gamma, hp.lam)
            upd = ppo_update(self.policy, self.critic, buffer, targets, hp, self.adam, self.rng, self.lr)
        except TrainingError as exc:
            raise TrainingError(exc.message, it, exc.minibatch) from exc
        self.lr = upd.learning_rate
        components = {k: float(np.mean(v)) for k, v in buffer.breakdown.items()}
        weight = getattr(cfg.rewards, "tracking_lin_vel_x", 1.0)
        if weight > 0 and "tracking_lin_vel_x" in components:
            self.curriculum.update(components["tracking_lin_vel_x"] / weight)
            self.env.curriculum_level = self.curriculum.level
        self.iteration += 1
        return TrainStats(
            iteration=it,
            mean_reward=float(np.mean(buffer.rewards)),
            mean_episode_length=self.tracker.mean_length(),
            policy_loss=upd.policy_loss,
            value_loss=upd.value_loss,
            entropy=upd.entropy,
            clip_fraction=upd.clip_fraction,
            approx_kl=upd.approx_kl,
            learning_rate=upd.learning_rate,
            curriculum_level=float(self.curriculum.level),
            reward_components=components,
        )


def format_metrics_row(stats: TrainStats, columns) -> str:
    row = stats.row()
    buf = io.StringIO()
    csv.writer(buf, lineterminator="\n").writerow([_fmt(row[c]) for c in columns])
    return buf.getvalue()


def train(cfg: RunConfig, out_dir: str | Path | None = None, iterations: int | None = None,
          checkpoint: Optional[Callable[["Trainer", int], None]] = None,
          trainer: Optional[Trainer] = None,
          on_iteration: Optional[Callable[[TrainStats], None]] = None) -> tuple[list[TrainStats], Trainer]:
    """Run the training loop; with ``out_dir`` append a ``metrics.csv`` row per iteration.

    ``checkpoint(trainer, iteration)`` is called every ``cfg.checkpoint_every``
    iterations and after the last one.
    """
    trainer = trainer or Trainer(cfg)
    n = cfg.iterations if iterations is None else iterations
    columns = metric_columns(trainer.env.reward_names)
    fh = None
    if out_dir is not None:
        Path(out_dir).mkdir(parents=True, exist_ok=True)
        fh = open(Path(out_dir) / "metrics.csv", "w", encoding="utf-8", newline="")
        fh.write(",".join(columns) + "\n")
    history = []
    try:
        for i in range(n):
            stats = trainer.step()
            if not all(math.isfinite(v) for v in stats.row().values()):
                raise TrainingError("non-finite training statistic", stats.iteration)
            history.append(stats)
            if on_iteration is not None:
                on_iteration(stats)
            if fh is not None:
                fh.write(format_metrics_row(stats, columns))
                fh.flush()
            last = i == n - 1
            if checkpoint is not None and (last or (cfg.checkpoint_every and (i + 1) % cfg.checkpoint_every == 0)):
                checkpoint(trainer, i + 1)
    finally:
        if fh is not None:
            fh.close()
    return history, trainer
