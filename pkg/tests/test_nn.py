import math

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from locogym.nn import (
    MLP,
    AdamState,
    GaussianPolicy,
    NonFiniteLoss,
    adam_step,
    assign_flat,
    entropy_loss,
    flatten,
    gaussian_log_prob,
    global_norm,
    sample_action,
    surrogate_loss,
    value_loss,
)

from models import tiny_actor_critic
from oracles import fd_gradient, gaussian_density_log, mlp_forward_reference, relative_error

ACTS = ["elu", "tanh"]


def policy_batch(rng, policy, B=16, spread=0.15):
    """Observations, actions and behaviour log-probs away from the clip kinks."""
    obs = rng.normal(size=(B, policy.mean_net.in_dim))
    mean = policy.mean_net.forward(obs)
    actions = mean + np.exp(policy.log_std) * rng.normal(size=mean.shape)
    old = gaussian_log_prob(actions, mean, policy.log_std) + rng.normal(0.0, spread, B)
    adv = rng.normal(size=B)
    return obs, actions, old, adv


# ---------------------------------------------------------------- forward

def test_zero_network_outputs_zero(rng):
    net = MLP((5, 7, 3), "elu")
    assert np.array_equal(net.forward(rng.normal(size=(4, 5))), np.zeros((4, 3)))


def test_tanh_one_by_one():
    net = MLP((1, 1, 1), "tanh", [np.ones((1, 1)), np.zeros(1), np.ones((1, 1)), np.zeros(1)])
    assert net.forward(np.zeros((1, 1)))[0, 0] == 0.0
    assert net.forward(np.ones((1, 1)))[0, 0] == math.tanh(1.0)


@pytest.mark.parametrize("act", ACTS)
def test_forward_matches_reference(act, rng):
    net = MLP.initialized((8, 16, 2), act, rng)
    for p in net.params[1::2]:
        p[...] = rng.normal(size=p.shape)
    x = rng.normal(size=(5, 8))
    assert np.max(np.abs(net.forward(x) - mlp_forward_reference(net.sizes, net.params, act, x))) < 1e-12


def test_forward_batch_order_independent(rng):
    net = MLP.initialized((6, 10, 3), "elu", rng)
    x = rng.normal(size=(9, 6))
    perm = rng.permutation(9)
    assert np.array_equal(net.forward(x)[perm], net.forward(x[perm]))
    # a lone row may take a different BLAS kernel, so only ulp-level agreement is promised
    assert np.allclose(net.forward(x[2:3])[0], net.forward(x)[2], rtol=1e-14, atol=1e-14)


def test_shape_errors(rng):
    net = MLP((3, 2), "tanh")
    with pytest.raises(ValueError):
        net.forward(np.zeros((2, 4)))
    with pytest.raises(ValueError):
        MLP((3, 2), "relu")
    with pytest.raises(ValueError):
        MLP((3, 2), "tanh", [np.zeros((2, 3)), np.zeros(2)])
    with pytest.raises(ValueError):
        GaussianPolicy(net, np.zeros(3))


# ---------------------------------------------------------------- sampling

def test_tiny_std_gives_mean(rng):
    net = MLP.initialized((3, 4, 2), "elu", rng)
    pol = GaussianPolicy(net, np.full(2, -20.0))
    obs = rng.normal(size=(5, 3))
    a, _ = sample_action(pol, obs, rng)
    assert np.allclose(a, net.forward(obs), atol=1e-7)


def test_log_prob_at_mode():
    assert gaussian_log_prob(np.zeros((1, 3)), np.zeros((1, 3)), np.zeros(3))[0] == pytest.approx(
        -1.5 * math.log(2 * math.pi), abs=1e-15)


def test_sampled_log_prob_matches_density(rng):
    pol, _ = tiny_actor_critic(rng, "tanh")
    obs = rng.normal(size=(50, 3))
    a, logp = sample_action(pol, obs, rng)
    mean = pol.mean_net.forward(obs)
    for i in range(50):
        assert abs(logp[i] - gaussian_density_log(a[i], mean[i], np.exp(pol.log_std))) < 1e-12


def test_sampling_statistics(rng):
    mu, log_std = np.array([0.3, -1.0]), np.array([0.0, -1.2])
    net = MLP((1, 2), "tanh", [np.zeros((1, 2)), mu.copy()])
    pol = GaussianPolicy(net, log_std)
    n = 100_000
    a, _ = sample_action(pol, np.zeros((n, 1)), rng)
    sigma = np.exp(log_std)
    assert np.all(np.abs(a.mean(0) - mu) < 3 * sigma / math.sqrt(n))
    # standard error of the sample std is about sigma / sqrt(2 n)
    assert np.all(np.abs(a.std(0) - sigma) < 3 * sigma / math.sqrt(2 * n))


def test_entropy_closed_form():
    pol = GaussianPolicy(MLP((2, 3), "elu"), np.array([0.1, -0.4, 0.0]))
    expected = sum(0.5 * math.log(2 * math.pi * math.e * math.exp(2 * s)) for s in pol.log_std)
    assert pol.entropy() == pytest.approx(expected, abs=1e-12)


# ---------------------------------------------------------------- gradients

@pytest.mark.parametrize("act", ACTS)
def test_surrogate_gradient_fd(act, rng):
    for _ in range(10):
        pol, _ = tiny_actor_critic(rng, act)
        obs, actions, old, adv = policy_batch(rng, pol)
        _, g = surrogate_loss(pol, obs, actions, old, adv, 0.2)
        num = fd_gradient(lambda: surrogate_loss(pol, obs, actions, old, adv, 0.2, with_grad=False)[0].loss,
                          pol.params)
        assert relative_error(g, num) < 1e-4


@pytest.mark.parametrize("act", ACTS)
def test_value_gradient_fd(act, rng):
    for _ in range(10):
        _, critic = tiny_actor_critic(rng, act)
        obs, targets = rng.normal(size=(12, 4)), rng.normal(size=12)
        _, g = value_loss(critic, obs, targets)
        num = fd_gradient(lambda: value_loss(critic, obs, targets, with_grad=False)[0], critic.params)
        assert relative_error(g, num) < 1e-4


def test_entropy_gradient_fd(rng):
    pol, _ = tiny_actor_critic(rng, "elu")
    _, g = entropy_loss(pol)
    num = fd_gradient(pol.entropy, pol.params)
    assert relative_error(g, num) < 1e-4


def test_constant_loss_zero_gradient(rng):
    pol, _ = tiny_actor_critic(rng, "elu")
    obs, actions, old, _ = policy_batch(rng, pol)
    _, g = surrogate_loss(pol, obs, actions, old, np.zeros(len(obs)), 0.2)
    assert all(np.all(x == 0.0) for x in g)


def test_value_loss_leaves_policy_untouched(rng):
    pol, critic = tiny_actor_critic(rng, "tanh")
    before = [p.copy() for p in pol.params]
    _, g = value_loss(critic, rng.normal(size=(8, 4)), rng.normal(size=8))
    adam = AdamState.zeros_like(pol.params + critic.params)
    adam_step(pol.params + critic.params, [np.zeros_like(p) for p in pol.params] + g, adam, 1e-2)
    assert all(np.array_equal(a, b) for a, b in zip(before, pol.params))


def test_clipped_branch_value():
    pol = GaussianPolicy(MLP((1, 1), "tanh"), np.zeros(1))
    obs, act = np.zeros((1, 1)), np.zeros((1, 1))
    logp = gaussian_log_prob(act, np.zeros((1, 1)), np.zeros(1))
    old = logp - math.log(1.5)  # ratio 1.5
    info, g = surrogate_loss(pol, obs, act, old, np.ones(1), 0.2)
    assert info.loss == pytest.approx(-1.2, abs=1e-12)
    assert info.clip_fraction == 1.0
    assert all(np.all(x == 0.0) for x in g)
    info, _ = surrogate_loss(pol, obs, act, old, -np.ones(1), 0.2)
    assert info.loss == pytest.approx(1.5, abs=1e-12)  # min picks the unclipped, more pessimistic term


def test_same_policy_ratio_is_one(rng):
    pol, _ = tiny_actor_critic(rng, "elu")
    obs = rng.normal(size=(20, 3))
    actions, logp = sample_action(pol, obs, rng)
    adv = rng.normal(size=20)
    info, _ = surrogate_loss(pol, obs, actions, logp, adv, 0.2)
    assert info.clip_fraction == 0.0
    assert info.loss == pytest.approx(-adv.mean(), abs=1e-14)
    assert info.approx_kl == 0.0


def test_non_finite_loss_reported(rng):
    pol, critic = tiny_actor_critic(rng, "elu")
    obs = rng.normal(size=(4, 3))
    with pytest.raises(NonFiniteLoss) as err:
        surrogate_loss(pol, obs, np.zeros((4, 2)), np.zeros(4), np.array([1, np.nan, 0, 0.0]), 0.2)
    assert err.value.term == "policy"
    with pytest.raises(NonFiniteLoss) as err:
        value_loss(critic, rng.normal(size=(2, 4)), np.array([np.inf, 0.0]))
    assert err.value.term == "value"


# ---------------------------------------------------------------- Adam

def test_adam_zero_grad_is_null_update():
    p = [np.array([1.0, 2.0])]
    st_ = AdamState.zeros_like(p)
    adam_step(p, [np.zeros(2)], st_, 0.1)
    assert np.array_equal(p[0], [1.0, 2.0]) and st_.step == 1


def test_adam_first_step_closed_form():
    p = [np.array([0.5])]
    st_ = AdamState.zeros_like(p)
    adam_step(p, [np.array([1.0])], st_, 1e-3)
    assert p[0][0] == pytest.approx(0.5 - 1e-3 / (1.0 + 1e-8), abs=1e-15)


def test_adam_clips_global_norm():
    p = [np.zeros(2)]
    st_ = AdamState.zeros_like(p)
    norm = adam_step(p, [np.array([6.0, 8.0])], st_, 1e-3, max_grad_norm=1.0)
    assert norm == 10.0
    assert np.allclose(st_.m[0], 0.1 * np.array([0.6, 0.8]))


def test_adam_shape_mismatch():
    p = [np.zeros(2)]
    with pytest.raises(ValueError):
        adam_step(p, [np.zeros(3)], AdamState.zeros_like(p), 1e-3)


def test_flatten_round_trip(rng):
    arrays = [rng.normal(size=(2, 3)), rng.normal(size=4)]
    flat = flatten(arrays)
    targets = [np.zeros((2, 3)), np.zeros(4)]
    assign_flat(targets, flat)
    assert all(np.array_equal(a, b) for a, b in zip(arrays, targets))
    with pytest.raises(ValueError):
        assign_flat(targets, np.zeros(11))
    assert global_norm(arrays) == pytest.approx(np.linalg.norm(flat))


@settings(max_examples=40, deadline=None)
@given(g=st.lists(st.floats(-1e3, 1e3), min_size=1, max_size=6), cap=st.floats(0.01, 10.0))
def test_clipped_first_step_bounded(g, cap):
    """After clipping, each first Adam step moves every entry by at most lr."""
    g = np.array(g)
    p = [np.zeros(g.size)]
    adam_step(p, [g], AdamState.zeros_like(p), 0.01, max_grad_norm=cap)
    assert np.all(np.abs(p[0]) <= 0.01 + 1e-12)
