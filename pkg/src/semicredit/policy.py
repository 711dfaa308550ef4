"""Decentralized Gaussian actors, centralized critics, GAE, and PPO updates.

Each agent owns an independent tanh-bounded Gaussian policy over its own
observation; critics see the global state (and the joint action, for the
Q variant). Updating one actor never touches another's parameters. There
is no entropy bonus and no parameter sharing.
"""

from __future__ import annotations

import warnings
from dataclasses import dataclass, field
from typing import NamedTuple

import numpy as np

from .errors import ContractError
from .numcore import Adam, Mlp, Tape, Tensor, as_tensor, backward, clip, exp, grad_of, minimum

LOG_2PI = float(np.log(2.0 * np.pi))


class Critic:
    """State-value network V(s)."""

    def __init__(self, state_dim: int, rng: np.random.Generator, hidden=(32, 32, 32), lr: float = 1e-3):
        self.net = Mlp([state_dim, *hidden, 1], hidden_activation="tanh", rng=rng)
        self.opt = Adam(self.net.parameters(), lr=lr)

    def values(self, states: np.ndarray) -> np.ndarray:
        return self.net.forward_np(np.atleast_2d(states))[:, 0]

    def value(self, state: np.ndarray) -> float:
        return float(self.values(state[None, :])[0])


class QCritic:
    """Joint action-value network Q(s, a_1..a_n)."""

    def __init__(
        self,
        state_dim: int,
        action_total: int,
        rng: np.random.Generator,
        hidden=(32, 32, 32),
        lr: float = 1e-3,
    ):
        self.state_dim = state_dim
        self.action_total = action_total
        self.net = Mlp([state_dim + action_total, *hidden, 1], hidden_activation="tanh", rng=rng)
        self.opt = Adam(self.net.parameters(), lr=lr)

    def values(self, states: np.ndarray, flat_actions: np.ndarray) -> np.ndarray:
        x = np.concatenate([np.atleast_2d(states), np.atleast_2d(flat_actions)], axis=1)
        return self.net.forward_np(x)[:, 0]


class ActSample(NamedTuple):
    action: np.ndarray
    raw_action: np.ndarray
    log_prob: float


class GaussianActor:
    """Diagonal Gaussian policy with a tanh-bounded mean network.

    The log standard deviation is a free parameter vector, independent of
    the observation. Sampled actions are clamped to [-1, 1]; log
    probabilities are always taken at the unclamped draw, and the unclamped
    draw is what later updates must see, so both are returned by ``act``.
    """

    def __init__(
        self,
        obs_dim: int,
        act_dim: int,
        rng: np.random.Generator,
        hidden=(32, 32, 32),
        log_std_init: float = -0.5,
        lr: float = 3e-4,
    ):
        self.obs_dim = obs_dim
        self.act_dim = act_dim
        self.mean_net = Mlp([obs_dim, *hidden, act_dim], hidden_activation="tanh", output_activation="tanh", rng=rng)
        self.log_std = Tensor(np.full(act_dim, float(log_std_init)), requires_grad=True)
        self.opt = Adam(self.parameters(), lr=lr)

    def parameters(self) -> list[Tensor]:
        return self.mean_net.parameters() + [self.log_std]

    def named_parameters(self, prefix: str = "") -> dict[str, Tensor]:
        named = self.mean_net.named_parameters(prefix)
        named[f"{prefix}log_std"] = self.log_std
        return named

    def mean_actions(self, obs: np.ndarray) -> np.ndarray:
        return self.mean_net.forward_np(np.atleast_2d(obs))

    def act(self, obs: np.ndarray, rng: np.random.Generator | None = None, deterministic: bool = False) -> ActSample:
        mean = self.mean_actions(obs[None, :])[0]
        if deterministic:
            logp = float(np.sum(-self.log_std.data - 0.5 * LOG_2PI))
            return ActSample(mean.copy(), mean.copy(), logp)
        if rng is None:
            raise ContractError("stochastic act needs a generator")
        std = np.exp(self.log_std.data)
        noise = rng.standard_normal(self.act_dim)
        raw = mean + std * noise
        logp = float(np.sum(-0.5 * noise * noise - self.log_std.data - 0.5 * LOG_2PI))
        return ActSample(np.clip(raw, -1.0, 1.0), raw, logp)

    def log_probs_np(self, obs: np.ndarray, raw_actions: np.ndarray) -> np.ndarray:
        mean = self.mean_actions(obs)
        z = (np.atleast_2d(raw_actions) - mean) / np.exp(self.log_std.data)
        return np.sum(-0.5 * z * z - self.log_std.data - 0.5 * LOG_2PI, axis=1)

    def log_probs_taped(self, obs: np.ndarray, raw_actions: np.ndarray):
        """Differentiable log pi(raw | obs) as a (batch,) tensor."""
        mean = self.mean_net(obs)
        diff = as_tensor(raw_actions) - mean
        inv_std = exp(self.log_std * -1.0)
        z = diff * inv_std
        quad = (z * z).sum(axis=1)
        return quad * -0.5 - self.log_std.sum() - 0.5 * self.act_dim * LOG_2PI


@dataclass
class PolicySet:
    """One decentralized actor per agent plus the centralized critic(s)."""

    actors: list[GaussianActor]
    critic: Critic | None = None
    q_critic: QCritic | None = None


@dataclass
class RolloutBatch:
    """A fixed number of environment steps collected under one policy.

    Episodes are laid out back to back; ``dones`` marks their last steps.
    ``returns`` holds discounted reward-to-go, bootstrapped with
    ``bootstrap_value`` when the final episode was cut off mid-flight.
    ``raw_actions`` are the unclamped Gaussian draws that match
    ``behavior_logp``; ``actions`` are what the environment executed.
    """

    states: np.ndarray
    next_states: np.ndarray
    observations: list[np.ndarray]
    actions: np.ndarray
    raw_actions: np.ndarray
    behavior_logp: np.ndarray
    rewards: np.ndarray
    dones: np.ndarray
    returns: np.ndarray
    bootstrap_value: float
    episode_rewards: list[float] = field(default_factory=list)

    @property
    def length(self) -> int:
        return self.states.shape[0]

    @property
    def n_agents(self) -> int:
        return self.actions.shape[1]

    def flat_actions(self) -> np.ndarray:
        return self.actions.reshape(self.length, -1)

    def check(self, gamma: float, tol: float = 1e-9) -> None:
        """Verify the return recursion G_t = r_t + gamma * G_{t+1} within episodes."""
        nxt = np.append(self.returns[1:], self.bootstrap_value)
        expected = self.rewards + gamma * (1.0 - self.dones) * nxt
        gap = float(np.max(np.abs(expected - self.returns)))
        if gap > tol:
            raise ContractError(f"return recursion violated by {gap:.3e}")


def compute_returns(rewards: np.ndarray, dones: np.ndarray, gamma: float, bootstrap_value: float) -> np.ndarray:
    """Discounted reward-to-go, restarting at episode ends."""
    T = len(rewards)
    out = np.zeros(T)
    running = float(bootstrap_value)
    for t in range(T - 1, -1, -1):
        running = rewards[t] + gamma * (1.0 - dones[t]) * running
        out[t] = running
    return out


def gae(
    rewards: np.ndarray,
    values: np.ndarray,
    bootstrap_value: float,
    dones: np.ndarray,
    gamma: float,
    lam: float,
) -> np.ndarray:
    """Generalized advantage estimates; the recursion resets at episode ends.

    lam=0 reduces to one-step TD residuals; lam=1 on episodic data gives
    exactly (discounted reward-to-go minus value).
    """
    rewards = np.asarray(rewards, dtype=np.float64)
    values = np.asarray(values, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    if not (len(rewards) == len(values) == len(dones)):
        raise ContractError("rewards, values, dones must have equal lengths")
    T = len(rewards)
    adv = np.zeros(T)
    next_values = np.append(values[1:], bootstrap_value)
    last = 0.0
    for t in range(T - 1, -1, -1):
        nonterminal = 1.0 - dones[t]
        delta = rewards[t] + gamma * next_values[t] * nonterminal - values[t]
        last = delta + gamma * lam * nonterminal * last
        adv[t] = last
    return adv


def standardize(x: np.ndarray) -> np.ndarray:
    """Zero-mean unit-variance rescaling with a stability floor."""
    x = np.asarray(x, dtype=np.float64)
    return (x - x.mean()) / (x.std() + 1e-8)


def _minibatch_slices(count: int, minibatch_size: int, rng: np.random.Generator) -> list[np.ndarray]:
    order = rng.permutation(count)
    if count < minibatch_size:
        return [order]
    usable = count - (count % minibatch_size)
    return np.split(order[:usable], usable // minibatch_size)


def critic_update(
    critic: Critic,
    batch: RolloutBatch,
    epochs: int = 10,
    minibatch_size: int = 64,
    rng: np.random.Generator | None = None,
) -> list[float]:
    """Regress V(s_t) onto the empirical returns; returns per-epoch MSE."""
    if rng is None:
        rng = np.random.default_rng()
    states = batch.states
    targets = batch.returns.reshape(-1, 1)
    losses = []
    for _ in range(epochs):
        for idx in _minibatch_slices(batch.length, minibatch_size, rng):
            _regression_step(critic.net, critic.opt, states[idx], targets[idx])
        residual = critic.values(states) - batch.returns
        losses.append(float(np.mean(residual * residual)))
    return losses


def q_critic_update(
    q_critic: QCritic,
    batch: RolloutBatch,
    epochs: int = 10,
    minibatch_size: int = 64,
    rng: np.random.Generator | None = None,
) -> list[float]:
    """Regress Q(s_t, a_t) onto the empirical returns; returns per-epoch MSE."""
    if rng is None:
        rng = np.random.default_rng()
    x = np.concatenate([batch.states, batch.flat_actions()], axis=1)
    targets = batch.returns.reshape(-1, 1)
    losses = []
    for _ in range(epochs):
        for idx in _minibatch_slices(batch.length, minibatch_size, rng):
            _regression_step(q_critic.net, q_critic.opt, x[idx], targets[idx])
        residual = q_critic.net.forward_np(x)[:, 0] - batch.returns
        losses.append(float(np.mean(residual * residual)))
    return losses


def _regression_step(net: Mlp, opt: Adam, x: np.ndarray, target: np.ndarray) -> None:
    with Tape() as tape:
        diff = net(x) - as_tensor(target)
        loss = (diff * diff).mean()
    grads = backward(tape, loss, params=net.parameters())
    opt.step([grad_of(grads, p) for p in net.parameters()])


@dataclass
class PpoStats:
    objective_per_epoch: list[float]
    skipped_minibatches: int


def ppo_actor_update(
    actor: GaussianActor,
    batch: RolloutBatch,
    agent: int,
    advantages: np.ndarray,
    clip_eps: float = 0.2,
    epochs: int = 10,
    minibatch_size: int = 64,
    rng: np.random.Generator | None = None,
) -> PpoStats:
    """Clipped-surrogate ascent on one agent's policy.

    Maximizes mean(min(rho * psi, clip(rho, 1 - eps, 1 + eps) * psi)) where
    rho is the likelihood ratio against the behavior policy at the stored
    unclamped actions. Minibatches with non-finite ratios are skipped with
    a warning rather than poisoning the parameters.
    """
    if rng is None:
        rng = np.random.default_rng()
    obs = batch.observations[agent]
    raw = batch.raw_actions[:, agent, :]
    old_logp = batch.behavior_logp[:, agent]
    advantages = np.asarray(advantages, dtype=np.float64)
    if advantages.shape != (batch.length,):
        raise ContractError(f"advantages shape {advantages.shape}, expected ({batch.length},)")

    stats = PpoStats([], 0)
    params = actor.parameters()
    for _ in range(epochs):
        epoch_obj = []
        for idx in _minibatch_slices(batch.length, minibatch_size, rng):
            with Tape() as tape:
                logp = actor.log_probs_taped(obs[idx], raw[idx])
                ratio = exp(logp - as_tensor(old_logp[idx]))
                if not np.all(np.isfinite(ratio.data)):
                    stats.skipped_minibatches += 1
                    continue
                adv = as_tensor(advantages[idx])
                surrogate = minimum(ratio * adv, clip(ratio, 1.0 - clip_eps, 1.0 + clip_eps) * adv)
                objective = surrogate.mean()
                loss = objective * -1.0
            grads = backward(tape, loss, params=params)
            actor.opt.step([grad_of(grads, p) for p in params])
            epoch_obj.append(float(objective.data))
        stats.objective_per_epoch.append(float(np.mean(epoch_obj)) if epoch_obj else float("nan"))
    if stats.skipped_minibatches:
        warnings.warn(
            f"agent {agent}: skipped {stats.skipped_minibatches} minibatches with non-finite ratios",
            RuntimeWarning,
        )
    return stats
