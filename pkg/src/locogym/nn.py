"""Small fully connected networks with hand-written reverse-mode gradients.

Parameters live in plain lists of float64 arrays so the optimizer, the
snapshot writer and the finite-difference tests can all walk them the same
way. Hidden layers use the configured activation; the output layer is linear.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np

ACTIVATIONS = ("elu", "tanh")
LOG_2PI = math.log(2.0 * math.pi)


class NonFiniteLoss(FloatingPointError):
    def __init__(self, term: str, detail: str = ""):
        self.term = term
        super().__init__(f"non-finite {term} loss{': ' + detail if detail else ''}")


def _act(name: str, x: np.ndarray) -> np.ndarray:
    if name == "tanh":
        return np.tanh(x)
    return np.where(x > 0, x, np.expm1(np.minimum(x, 0.0)))


def _act_grad(name: str, x: np.ndarray, y: np.ndarray) -> np.ndarray:
    """Derivative of the activation given its input ``x`` and output ``y``."""
    if name == "tanh":
        return 1.0 - y * y
    return np.where(x > 0, 1.0, y + 1.0)


@dataclass
class MLP:
    sizes: tuple[int, ...]
    activation: str = "elu"
    params: list[np.ndarray] = field(default_factory=list)  # W0, b0, W1, b1, ...

    def __post_init__(self):
        self.sizes = tuple(int(s) for s in self.sizes)
        if len(self.sizes) < 2 or min(self.sizes) < 1:
            raise ValueError(f"layer sizes must have >= 2 positive entries, got {self.sizes}")
        if self.activation not in ACTIVATIONS:
            raise ValueError(f"activation must be one of {ACTIVATIONS}")
        if not self.params:
            self.params = []
            for a, b in zip(self.sizes[:-1], self.sizes[1:]):
                self.params += [np.zeros((a, b)), np.zeros(b)]
        self._check()

    def _check(self) -> None:
        if len(self.params) != 2 * (len(self.sizes) - 1):
            raise ValueError("parameter count does not match the layer sizes")
        for i, (a, b) in enumerate(zip(self.sizes[:-1], self.sizes[1:])):
            if self.params[2 * i].shape != (a, b) or self.params[2 * i + 1].shape != (b,):
                raise ValueError(f"layer {i} expects weight ({a}, {b}) and bias ({b},)")

    @classmethod
    def initialized(cls, sizes: Sequence[int], activation: str, rng: np.random.Generator,
                    output_gain: float = 1.0) -> "MLP":
        """Scaled-normal weights (variance 1/fan_in), zero biases; the last layer is scaled by ``output_gain``."""
        net = cls(tuple(sizes), activation)
        n_layers = len(net.sizes) - 1
        for i, (a, b) in enumerate(zip(net.sizes[:-1], net.sizes[1:])):
            gain = output_gain if i == n_layers - 1 else 1.0
            net.params[2 * i] = rng.standard_normal((a, b)) * (gain / math.sqrt(a))
        return net

    @property
    def in_dim(self) -> int:
        return self.sizes[0]

    @property
    def out_dim(self) -> int:
        return self.sizes[-1]

    def forward(self, x: np.ndarray, keep: bool = False):
        """Output for a batch ``(B, in_dim)``; with ``keep`` also return what ``backward`` needs."""
        x = np.asarray(x, dtype=np.float64)
        if x.ndim != 2 or x.shape[1] != self.in_dim:
            raise ValueError(f"input must have shape (B, {self.in_dim}), got {x.shape}")
        cache = [x]
        h = x
        n_layers = len(self.sizes) - 1
        for i in range(n_layers):
            z = h @ self.params[2 * i] + self.params[2 * i + 1]
            if i < n_layers - 1:
                h = _act(self.activation, z)
                cache += [z, h]
            else:
                h = z
        return (h, cache) if keep else h

    def backward(self, cache: list, grad_out: np.ndarray) -> list[np.ndarray]:
        """Parameter gradients of ``sum(grad_out * output)``."""
        n_layers = len(self.sizes) - 1
        grads: list[np.ndarray] = [None] * len(self.params)  # type: ignore[list-item]
        g = grad_out
        for i in range(n_layers - 1, -1, -1):
            h_in = cache[0] if i == 0 else cache[2 * i]
            grads[2 * i] = h_in.T @ g
            grads[2 * i + 1] = g.sum(axis=0)
            if i > 0:
                g = g @ self.params[2 * i].T
                z, h = cache[2 * i - 1], cache[2 * i]
                g = g * _act_grad(self.activation, z, h)
        return grads

    def num_params(self) -> int:
        return sum(p.size for p in self.params)


@dataclass
class GaussianPolicy:
    """Diagonal Gaussian over actions: MLP mean and a state-independent log-std vector."""

    mean_net: MLP
    log_std: np.ndarray

    def __post_init__(self):
        self.log_std = np.asarray(self.log_std, dtype=np.float64)
        if self.log_std.shape != (self.mean_net.out_dim,):
            raise ValueError("log_std must have one entry per action")

    @classmethod
    def initialized(cls, obs_dim: int, hidden: Sequence[int], num_actions: int, activation: str,
                    rng: np.random.Generator, init_log_std: float = 0.0) -> "GaussianPolicy":
        net = MLP.initialized((obs_dim, *hidden, num_actions), activation, rng, output_gain=0.01)
        return cls(net, np.full(num_actions, float(init_log_std)))

    @property
    def params(self) -> list[np.ndarray]:
        return self.mean_net.params + [self.log_std]

    def forward(self, obs) -> tuple[np.ndarray, np.ndarray]:
        return self.mean_net.forward(np.atleast_2d(obs)), self.log_std

    def log_prob(self, obs, actions) -> np.ndarray:
        mean, log_std = self.forward(obs)
        return gaussian_log_prob(actions, mean, log_std)

    def entropy(self) -> float:
        return float(np.sum(self.log_std + 0.5 * (LOG_2PI + 1.0)))


def gaussian_log_prob(actions, mean, log_std) -> np.ndarray:
    z = (np.asarray(actions) - mean) * np.exp(-log_std)
    return np.sum(-0.5 * z * z - log_std - 0.5 * LOG_2PI, axis=-1)


def sample_action(policy: GaussianPolicy, obs, rng: np.random.Generator) -> tuple[np.ndarray, np.ndarray]:
    mean, log_std = policy.forward(obs)
    actions = mean + np.exp(log_std) * rng.standard_normal(mean.shape)
    return actions, gaussian_log_prob(actions, mean, log_std)


# ---------------------------------------------------------------- losses

@dataclass
class PolicyLossInfo:
    loss: float
    clip_fraction: float
    approx_kl: float


def surrogate_loss(policy: GaussianPolicy, obs, actions, old_log_prob, advantages, clip_eps: float,
                   with_grad: bool = True):
    """Clipped surrogate ``-mean(min(r A, clip(r, 1-eps, 1+eps) A))`` and its gradient.

    Returns ``(info, grads)`` where ``grads`` follows ``policy.params``.
    """
    mean, cache = policy.mean_net.forward(np.atleast_2d(obs), keep=True)
    log_std = policy.log_std
    logp = gaussian_log_prob(actions, mean, log_std)
    log_ratio = logp - old_log_prob
    ratio = np.exp(log_ratio)
    surr1 = ratio * advantages
    surr2 = np.clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * advantages
    B = ratio.shape[0]
    loss = -float(np.mean(np.minimum(surr1, surr2)))
    info = PolicyLossInfo(
        loss=loss,
        clip_fraction=float(np.mean(np.abs(ratio - 1.0) > clip_eps)),
        approx_kl=float(np.mean((ratio - 1.0) - log_ratio)),
    )
    if not math.isfinite(loss):
        raise NonFiniteLoss("policy")
    if not with_grad:
        return info, None
    # the unclipped branch carries gradient; the clipped one is flat in the parameters
    active = surr1 <= surr2
    dlogp = np.where(active, -advantages * ratio / B, 0.0)
    inv_var = np.exp(-2.0 * log_std)
    diff = np.asarray(actions) - mean
    g_mean = dlogp[:, None] * diff * inv_var
    g_log_std = np.sum(dlogp[:, None] * (diff * diff * inv_var - 1.0), axis=0)
    return info, policy.mean_net.backward(cache, g_mean) + [g_log_std]


def entropy_loss(policy: GaussianPolicy):
    """Entropy of the action distribution (identical for every observation) and its gradient."""
    grads = [np.zeros_like(p) for p in policy.mean_net.params] + [np.ones_like(policy.log_std)]
    return policy.entropy(), grads


def value_loss(critic: MLP, obs, targets, with_grad: bool = True):
    """Mean squared error ``mean((V(s) - target)^2)`` and its gradient."""
    values, cache = critic.forward(np.atleast_2d(obs), keep=True)
    err = values[:, 0] - targets
    loss = float(np.mean(err * err))
    if not math.isfinite(loss):
        raise NonFiniteLoss("value")
    if not with_grad:
        return loss, None
    g = (2.0 / err.shape[0]) * err[:, None]
    return loss, critic.backward(cache, g)


# ---------------------------------------------------------------- optimizer

@dataclass
class AdamState:
    m: list[np.ndarray]
    v: list[np.ndarray]
    step: int = 0
    beta1: float = 0.9
    beta2: float = 0.999
    eps: float = 1e-8

    @classmethod
    def zeros_like(cls, params: Sequence[np.ndarray], **kw) -> "AdamState":
        return cls([np.zeros_like(p) for p in params], [np.zeros_like(p) for p in params], **kw)


def global_norm(grads: Sequence[np.ndarray]) -> float:
    return math.sqrt(sum(float(np.sum(g * g)) for g in grads))


def adam_step(params: Sequence[np.ndarray], grads: Sequence[np.ndarray], state: AdamState, lr: float,
              max_grad_norm: float | None = None) -> float:
    """Bias-corrected Adam update applied to ``params`` in place.

    Gradients are first rescaled so their global norm is at most
    ``max_grad_norm``. Returns the pre-clipping norm.
    """
    if len(params) != len(grads) or len(params) != len(state.m):
        raise ValueError("params, grads and optimizer state differ in length")
    for p, g, m in zip(params, grads, state.m):
        if p.shape != g.shape or p.shape != m.shape:
            raise ValueError(f"shape mismatch: param {p.shape}, grad {g.shape}, moment {m.shape}")
    norm = global_norm(grads)
    scale = 1.0
    if max_grad_norm is not None and norm > max_grad_norm:
        scale = max_grad_norm / norm
    state.step += 1
    b1, b2 = state.beta1, state.beta2
    c1 = 1.0 - b1 ** state.step
    c2 = 1.0 - b2 ** state.step
    for p, g, m, v in zip(params, grads, state.m, state.v):
        g = g * scale
        m *= b1
        m += (1.0 - b1) * g
        v *= b2
        v += (1.0 - b2) * g * g
        p -= lr * (m / c1) / (np.sqrt(v / c2) + state.eps)
    return norm


def flatten(arrays: Sequence[np.ndarray]) -> np.ndarray:
    return np.concatenate([a.ravel() for a in arrays]) if arrays else np.zeros(0)


def assign_flat(arrays: Sequence[np.ndarray], flat: np.ndarray) -> None:
    """Write ``flat`` back into ``arrays`` in place."""
    i = 0
    for a in arrays:
        a[...] = flat[i:i + a.size].reshape(a.shape)
        i += a.size
    if i != flat.size:
        raise ValueError("flat vector length does not match the parameters")
