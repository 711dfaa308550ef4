"""Per-agent credit from coalition values of masked joint actions.

The coalition value of C at a decision point (s, a) is the estimated team
value when the members of C play their chosen actions and everyone else
plays a fixed default:

    model evaluator:  v(C, s, a) = f_r(s, mask(a, C)) + gamma * V(f_s-next-state)
    q evaluator:      v(C, s, a) = Q(s, mask(a, C))

Per-agent advantages are semivalues of these games, one per timestep. Each
(timestep, agent) pair owns a private random stream, so the result is
independent of the order in which agents or timesteps are processed, and
identical estimates can be reproduced one point at a time. Advantages are
reported as raw semivalues; they are not re-centered by the empty
coalition's value.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .coopgame import (
    CoalitionEvaluator,
    enumerate_coalition_rows,
    sample_coalitions,
    semivalue_spec,
)
from .errors import ContractError
from .policy import Critic, QCritic, RolloutBatch, gae
from .seeding import SeedTree
from .worldmodel import WorldModel

EXACT_AGENT_LIMIT = 10
_CHUNK = 16384

EVALUATOR_KINDS = ("model", "qvalue")


@dataclass(frozen=True)
class CreditConfig:
    """How per-agent advantages are computed."""

    spec_id: str = "shapley"
    samples_per_agent: int = 5
    evaluator: str = "model"
    gamma: float = 0.99
    exact: bool = False

    def __post_init__(self):
        if self.samples_per_agent < 1:
            raise ContractError("samples_per_agent must be at least 1")
        if self.evaluator not in EVALUATOR_KINDS:
            raise ContractError(f"evaluator must be one of {EVALUATOR_KINDS}")
        if not 0.0 <= self.gamma <= 1.0:
            raise ContractError(f"gamma {self.gamma} outside [0, 1]")
        # The id must be well formed; whether a fixed size fits the agent
        # count is only knowable once the evaluator is attached.
        if self.spec_id.startswith("fixed:"):
            size = int(self.spec_id.split(":", 1)[1])
            semivalue_spec(self.spec_id, size + 1)
        else:
            semivalue_spec(self.spec_id, 2)


def zero_defaults(n_agents: int, act_dim: int) -> np.ndarray:
    return np.zeros((n_agents, act_dim))


def _broadcast_rows(states, joint_actions, member_masks, n_agents):
    masks = np.asarray(member_masks, dtype=bool)
    if masks.ndim != 2 or masks.shape[1] != n_agents:
        raise ContractError(f"member_masks shape {masks.shape}, expected (batch, {n_agents})")
    count = masks.shape[0]
    states = np.asarray(states, dtype=np.float64)
    if states.ndim == 1:
        states = np.broadcast_to(states, (count, states.size))
    actions = np.asarray(joint_actions, dtype=np.float64)
    if actions.ndim == 2:
        actions = np.broadcast_to(actions, (count, *actions.shape))
    if states.shape[0] != count or actions.shape[0] != count:
        raise ContractError("states/actions batch does not match mask batch")
    return states, actions, masks


class ModelBasedEvaluator(CoalitionEvaluator):
    """Coalition values from a frozen world model and a frozen critic.

    The reward head scores the masked action directly; the dynamics head
    rolls it one step forward and the critic values the imagined state,
    discounted by gamma. With gamma = 0 the critic and dynamics are never
    consulted.
    """

    def __init__(self, model: WorldModel, critic: Critic | None, gamma: float, defaults: np.ndarray):
        defaults = np.asarray(defaults, dtype=np.float64)
        if defaults.ndim != 2:
            raise ContractError("defaults must have shape (n_agents, act_dim)")
        if gamma > 0.0 and critic is None:
            raise ContractError("gamma > 0 needs a critic for the imagined next state")
        self.model = model
        self.critic = critic
        self.gamma = float(gamma)
        self.defaults = defaults
        self.n_agents = defaults.shape[0]

    def values(self, states, joint_actions, member_masks) -> np.ndarray:
        states, actions, masks = _broadcast_rows(states, joint_actions, member_masks, self.n_agents)
        count = masks.shape[0]
        masked = np.where(masks[:, :, None], actions, self.defaults)
        flat = masked.reshape(count, -1)
        out = np.empty(count)
        for lo in range(0, count, _CHUNK):
            hi = min(lo + _CHUNK, count)
            if self.gamma == 0.0:
                out[lo:hi] = self.model.predict_rewards(states[lo:hi], flat[lo:hi])
            else:
                next_states, rewards = self.model.predict(states[lo:hi], flat[lo:hi])
                out[lo:hi] = rewards + self.gamma * self.critic.values(next_states)
        return out


class QValueEvaluator(CoalitionEvaluator):
    """Coalition values straight from a frozen joint-action critic."""

    def __init__(self, q_critic: QCritic, defaults: np.ndarray):
        defaults = np.asarray(defaults, dtype=np.float64)
        if defaults.ndim != 2:
            raise ContractError("defaults must have shape (n_agents, act_dim)")
        self.q_critic = q_critic
        self.defaults = defaults
        self.n_agents = defaults.shape[0]

    def values(self, states, joint_actions, member_masks) -> np.ndarray:
        states, actions, masks = _broadcast_rows(states, joint_actions, member_masks, self.n_agents)
        count = masks.shape[0]
        masked = np.where(masks[:, :, None], actions, self.defaults)
        flat = masked.reshape(count, -1)
        out = np.empty(count)
        for lo in range(0, count, _CHUNK):
            hi = min(lo + _CHUNK, count)
            out[lo:hi] = self.q_critic.values(states[lo:hi], flat[lo:hi])
        return out


def coalition_value(evaluator: CoalitionEvaluator, state, joint_action, coalition) -> float:
    """Value of one coalition at one decision point."""
    return evaluator.value(state, joint_action, coalition)


def per_agent_advantages(
    batch: RolloutBatch,
    config: CreditConfig,
    evaluator: CoalitionEvaluator,
    seed_tree: SeedTree,
    agent_order=None,
) -> np.ndarray:
    """Semivalue credit psi[t][i] for every timestep and agent.

    Monte Carlo mode draws ``samples_per_agent`` coalitions per (t, i) from
    the stream ``seed_tree.child(t, i)``; exact mode enumerates all
    coalitions (agent counts up to 10 only). A point mass at size n-1
    (leave-one-out) needs no sampling and is evaluated directly. The
    columns are independent computations, so ``agent_order`` changes
    nothing but the schedule.
    """
    n = batch.n_agents
    if evaluator.n_agents != n:
        raise ContractError(f"evaluator covers {evaluator.n_agents} agents, batch has {n}")
    spec = semivalue_spec(config.spec_id, n)
    T = batch.length
    s_count = config.samples_per_agent
    psi = np.zeros((T, n))
    order = list(range(n)) if agent_order is None else [int(i) for i in agent_order]

    if config.exact:
        if n > EXACT_AGENT_LIMIT:
            raise ContractError(f"exact credit enumerates 2^(n-1) coalitions; n={n} exceeds {EXACT_AGENT_LIMIT}")
        for i in order:
            masks, weights = enumerate_coalition_rows(i, n, spec)
            rows = masks.shape[0]
            without = np.tile(masks, (T, 1))
            with_i = without.copy()
            with_i[:, i] = True
            states = np.repeat(batch.states, rows, axis=0)
            actions = np.repeat(batch.actions, rows, axis=0)
            diff = evaluator.values(states, actions, with_i) - evaluator.values(states, actions, without)
            psi[:, i] = diff.reshape(T, rows) @ weights
        return psi

    if spec.weights()[n - 1] == 1.0:
        # Leave one out: the sampled coalition is always everyone else.
        v_full = evaluator.values(batch.states, batch.actions, np.ones((T, n), dtype=bool))
        for i in order:
            without = np.ones((T, n), dtype=bool)
            without[:, i] = False
            psi[:, i] = v_full - evaluator.values(batch.states, batch.actions, without)
        return psi

    for i in order:
        drawn = [
            sample_coalitions(i, spec, s_count, seed_tree.child(t, i).generator())
            for t in range(T)
        ]
        without = np.concatenate(drawn, axis=0)
        with_i = without.copy()
        with_i[:, i] = True
        states = np.repeat(batch.states, s_count, axis=0)
        actions = np.repeat(batch.actions, s_count, axis=0)
        diff = evaluator.values(states, actions, with_i) - evaluator.values(states, actions, without)
        psi[:, i] = diff.reshape(T, s_count).mean(axis=1)
    return psi


def shared_advantages(batch: RolloutBatch, critic: Critic, gamma: float, lam: float) -> np.ndarray:
    """One common advantage signal for all agents (the flat baseline)."""
    values = critic.values(batch.states)
    bootstrap = critic.value(batch.next_states[-1])
    return gae(batch.rewards, values, bootstrap, batch.dones, gamma, lam)


def save_credit_report(
    path: str | Path, iteration: int, psi: np.ndarray, coalition_samples: int
) -> None:
    """Long-format CSV: one row per (timestep, agent) with its credit."""
    psi = np.atleast_2d(psi)
    lines = ["iteration,t,agent,psi,coalition_samples"]
    for t in range(psi.shape[0]):
        for i in range(psi.shape[1]):
            lines.append(f"{iteration},{t},{i},{psi[t, i]:.17g},{coalition_samples}")
    Path(path).write_text("\n".join(lines) + "\n")
