"""Learned one-step dynamics and reward models.

The dynamics net predicts the normalized state change, added back onto the
input state, so an untrained (or zeroed) net predicts "nothing moves".
The reward net predicts the normalized shared reward. Input and target
statistics are tracked over all data ever seen, and both nets warm-start
across fit calls: each training iteration refits on its newest rollout
only, relying on the persistent parameters for memory of older data.
"""

from __future__ import annotations

from dataclasses import dataclass, field

import numpy as np

from .errors import ContractError
from .numcore import Adam, Mlp, Tape, as_tensor, backward, grad_of

STD_FLOOR = 1e-8


class RunningMoments:
    """Per-coordinate mean and variance accumulated over batches."""

    def __init__(self, dim: int):
        self.count = 0.0
        self.mean = np.zeros(dim)
        self.m2 = np.zeros(dim)

    def update(self, rows: np.ndarray) -> None:
        rows = np.atleast_2d(rows)
        batch_count = rows.shape[0]
        if batch_count == 0:
            return
        batch_mean = rows.mean(axis=0)
        batch_m2 = ((rows - batch_mean) ** 2).sum(axis=0)
        delta = batch_mean - self.mean
        total = self.count + batch_count
        self.mean = self.mean + delta * (batch_count / total)
        self.m2 = self.m2 + batch_m2 + delta * delta * (self.count * batch_count / total)
        self.count = total

    def std(self) -> np.ndarray:
        if self.count == 0:
            return np.ones_like(self.mean)
        return np.maximum(np.sqrt(self.m2 / self.count), STD_FLOOR)

    def normalize(self, rows: np.ndarray) -> np.ndarray:
        return (rows - self.mean) / self.std()

    def denormalize(self, rows: np.ndarray) -> np.ndarray:
        return rows * self.std() + self.mean

    def scale_only(self, rows: np.ndarray) -> np.ndarray:
        return rows / self.std()

    def unscale_only(self, rows: np.ndarray) -> np.ndarray:
        return rows * self.std()

    def named_arrays(self, prefix: str) -> dict[str, np.ndarray]:
        return {
            f"{prefix}count": np.array(self.count),
            f"{prefix}mean": self.mean,
            f"{prefix}m2": self.m2,
        }

    def load_arrays(self, named: dict[str, np.ndarray], prefix: str) -> None:
        self.count = float(named[f"{prefix}count"])
        self.mean = np.asarray(named[f"{prefix}mean"], dtype=np.float64)
        self.m2 = np.asarray(named[f"{prefix}m2"], dtype=np.float64)


@dataclass
class FitStats:
    """Raw-space training errors measured on the fitted batch."""

    delta_mse_before: float
    delta_mse_after: float
    reward_mse_before: float
    reward_mse_after: float
    epochs: int
    delta_mse_per_epoch: list[float] = field(default_factory=list)
    reward_mse_per_epoch: list[float] = field(default_factory=list)


class WorldModel:
    """Residual dynamics model f_s and reward model f_r over (state, actions).

    The state delta target is normalized by scale alone (no mean shift), so
    a zero dynamics net predicts exactly the input state. The reward target
    keeps its mean: a zero reward net predicts the running target mean,
    which is 0 before any fitting.
    """

    def __init__(
        self,
        state_dim: int,
        action_total: int,
        rng: np.random.Generator,
        hidden_state: tuple[int, ...] = (128, 128, 128, 128),
        hidden_reward: tuple[int, ...] = (128, 128, 128),
        lr: float = 1e-3,
    ):
        self.state_dim = state_dim
        self.action_total = action_total
        in_dim = state_dim + action_total
        self.f_s = Mlp([in_dim, *hidden_state, state_dim], hidden_activation="relu", rng=rng)
        self.f_r = Mlp([in_dim, *hidden_reward, 1], hidden_activation="relu", rng=rng)
        self.input_stats = RunningMoments(in_dim)
        self.delta_stats = RunningMoments(state_dim)
        self.reward_stats = RunningMoments(1)
        self.opt_s = Adam(self.f_s.parameters(), lr=lr)
        self.opt_r = Adam(self.f_r.parameters(), lr=lr)

    def _inputs(self, states: np.ndarray, flat_actions: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(states)
        flat_actions = np.atleast_2d(flat_actions)
        if states.shape[1] != self.state_dim or flat_actions.shape[1] != self.action_total:
            raise ContractError(
                f"expected widths ({self.state_dim}, {self.action_total}), "
                f"got ({states.shape[1]}, {flat_actions.shape[1]})"
            )
        return self.input_stats.normalize(np.concatenate([states, flat_actions], axis=1))

    def predict(self, states: np.ndarray, flat_actions: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Predicted next states and rewards for a batch of decision points."""
        states = np.atleast_2d(states)
        x = self._inputs(states, flat_actions)
        delta = self.delta_stats.unscale_only(self.f_s.forward_np(x))
        rewards = self.reward_stats.denormalize(self.f_r.forward_np(x))[:, 0]
        return states + delta, rewards

    def predict_next_states(self, states: np.ndarray, flat_actions: np.ndarray) -> np.ndarray:
        states = np.atleast_2d(states)
        x = self._inputs(states, flat_actions)
        return states + self.delta_stats.unscale_only(self.f_s.forward_np(x))

    def predict_rewards(self, states: np.ndarray, flat_actions: np.ndarray) -> np.ndarray:
        x = self._inputs(states, flat_actions)
        return self.reward_stats.denormalize(self.f_r.forward_np(x))[:, 0]

    def raw_mse(self, states, flat_actions, next_states, rewards) -> tuple[float, float]:
        pred_s, pred_r = self.predict(states, flat_actions)
        delta_mse = float(np.mean((pred_s - np.atleast_2d(next_states)) ** 2))
        reward_mse = float(np.mean((pred_r - np.asarray(rewards)) ** 2))
        return delta_mse, reward_mse

    def fit(
        self,
        states: np.ndarray,
        flat_actions: np.ndarray,
        next_states: np.ndarray,
        rewards: np.ndarray,
        epochs: int = 10,
        minibatch_size: int = 64,
        rng: np.random.Generator | None = None,
    ) -> FitStats:
        """Supervised regression on one batch of same-episode transitions.

        Callers must pass transitions whose next_state belongs to the same
        episode as state; pairs straddling a reset must never be formed.
        Batches smaller than one minibatch train full-batch. Normalizer
        statistics absorb the batch before the epochs run.
        """
        states = np.atleast_2d(np.asarray(states, dtype=np.float64))
        flat_actions = np.atleast_2d(np.asarray(flat_actions, dtype=np.float64))
        next_states = np.atleast_2d(np.asarray(next_states, dtype=np.float64))
        rewards = np.asarray(rewards, dtype=np.float64).reshape(-1, 1)
        count = states.shape[0]
        if not (count == flat_actions.shape[0] == next_states.shape[0] == rewards.shape[0]):
            raise ContractError("transition arrays have mismatched lengths")
        if count == 0:
            raise ContractError("cannot fit on an empty batch")
        if rng is None:
            rng = np.random.default_rng()

        before = self.raw_mse(states, flat_actions, next_states, rewards[:, 0])

        raw_inputs = np.concatenate([states, flat_actions], axis=1)
        self.input_stats.update(raw_inputs)
        self.delta_stats.update(next_states - states)
        self.reward_stats.update(rewards)

        x = self.input_stats.normalize(raw_inputs)
        delta_t = self.delta_stats.scale_only(next_states - states)
        reward_t = self.reward_stats.normalize(rewards)

        stats = FitStats(before[0], 0.0, before[1], 0.0, epochs)
        for _ in range(epochs):
            order = rng.permutation(count)
            if count < minibatch_size:
                slices = [order]
            else:
                usable = count - (count % minibatch_size)
                slices = np.split(order[:usable], usable // minibatch_size)
            for idx in slices:
                self._step(self.f_s, self.opt_s, x[idx], delta_t[idx])
                self._step(self.f_r, self.opt_r, x[idx], reward_t[idx])
            epoch_mse = self.raw_mse(states, flat_actions, next_states, rewards[:, 0])
            stats.delta_mse_per_epoch.append(epoch_mse[0])
            stats.reward_mse_per_epoch.append(epoch_mse[1])
        stats.delta_mse_after, stats.reward_mse_after = self.raw_mse(
            states, flat_actions, next_states, rewards[:, 0]
        )
        return stats

    @staticmethod
    def _step(net: Mlp, opt: Adam, x: np.ndarray, target: np.ndarray) -> None:
        with Tape() as tape:
            diff = net(x) - as_tensor(target)
            loss = (diff * diff).mean()
        grads = backward(tape, loss, params=net.parameters())
        opt.step([grad_of(grads, p) for p in net.parameters()])

    def named_parameters(self) -> dict[str, np.ndarray]:
        named = {}
        for key, tensor in self.f_s.named_parameters("fs/").items():
            named[key] = tensor.data
        for key, tensor in self.f_r.named_parameters("fr/").items():
            named[key] = tensor.data
        named.update(self.input_stats.named_arrays("norm/in/"))
        named.update(self.delta_stats.named_arrays("norm/delta/"))
        named.update(self.reward_stats.named_arrays("norm/reward/"))
        return named

    def load_named_parameters(self, named: dict[str, np.ndarray]) -> None:
        for key, tensor in self.f_s.named_parameters("fs/").items():
            tensor.data = np.asarray(named[key], dtype=np.float64)
        for key, tensor in self.f_r.named_parameters("fr/").items():
            tensor.data = np.asarray(named[key], dtype=np.float64)
        self.input_stats.load_arrays(named, "norm/in/")
        self.delta_stats.load_arrays(named, "norm/delta/")
        self.reward_stats.load_arrays(named, "norm/reward/")
