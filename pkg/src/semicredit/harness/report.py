"""Post-training evaluation rollouts and per-agent credit reports.

Evaluation always runs the deterministic policy (mean actions, no
exploration noise), so scores measure what the policy has actually learned
rather than its sampling luck. Credit reports recompute per-agent
advantages along such a rollout from the estimators stored in a checkpoint.

A checkpoint directory is self-describing: its manifest embeds the full
run config, so reports can start from either a run directory or a bare
checkpoint path.
"""

from __future__ import annotations

from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import seeding
from ..credit import (
    CreditConfig,
    ModelBasedEvaluator,
    QValueEvaluator,
    per_agent_advantages,
    save_credit_report,
)
from ..envs import Env, make_env
from ..errors import ConfigError, ContractError
from ..policy import RolloutBatch, compute_returns
from ..seeding import SeedTree
from .config import TrainConfig, method_credit_spec, method_uses_q, parse_config
from .train import Learner, load_checkpoint, read_manifest


def load_checkpoint_dir(checkpoint_dir, env_id: str | None = None) -> tuple[TrainConfig, Env, Learner, dict]:
    """Rebuild a learner from a checkpoint directory alone."""
    checkpoint_dir = Path(checkpoint_dir)
    manifest = read_manifest(checkpoint_dir)
    if "config" not in manifest:
        raise ContractError(f"{checkpoint_dir} has no embedded config; not a loadable checkpoint")
    config = parse_config(manifest["config"])
    if env_id is not None and env_id != config.env:
        raise ContractError(f"checkpoint was trained on {config.env!r}, not {env_id!r}")
    env = make_env(config.env)
    learner = Learner(config, env, SeedTree(config.seed).child(seeding.INIT))
    load_checkpoint(checkpoint_dir, learner)
    return config, env, learner, manifest


def load_run(run_dir, checkpoint: str = "final") -> tuple[TrainConfig, Env, Learner, dict]:
    """Rebuild the learner saved under ``run_dir/checkpoints/<checkpoint>``."""
    run_dir = Path(run_dir)
    target = run_dir / "checkpoints" / checkpoint
    if not target.exists():
        raise ContractError(f"{run_dir} has no checkpoint {checkpoint!r}")
    return load_checkpoint_dir(target)


def deterministic_rollout(
    env: Env,
    learner: Learner,
    tree: SeedTree,
    gamma: float,
    episodes: int | None = None,
    steps: int | None = None,
) -> RolloutBatch:
    """Roll the mean policy; no learning, no noise.

    Exactly one of ``episodes`` (whole episodes) or ``steps`` (a fixed
    transition count, truncating the last episode) must be given.
    """
    if (episodes is None) == (steps is None):
        raise ContractError("give exactly one of episodes or steps")
    if episodes is not None and episodes < 1:
        raise ContractError("episodes must be at least 1")
    if steps is not None and steps < 1:
        raise ContractError("steps must be at least 1")

    n = env.spec.n_agents
    states, next_states, rewards, dones = [], [], [], []
    actions, raws, logps = [], [], []
    obs_cols: list[list[np.ndarray]] = [[] for _ in range(n)]
    episode_rewards = []
    episode = 0
    while (episodes is not None and episode < episodes) or (steps is not None and len(states) < steps):
        state, obs = env.reset(tree.child(episode).integer_seed())
        total = 0.0
        done = False
        while not done:
            samples = [learner.actors[i].act(obs[i], deterministic=True) for i in range(n)]
            joint = np.stack([s.action for s in samples])
            result = env.step(joint)
            states.append(state)
            next_states.append(result.state)
            for i in range(n):
                obs_cols[i].append(obs[i])
            actions.append(joint)
            raws.append(np.stack([s.raw_action for s in samples]))
            logps.append([s.log_prob for s in samples])
            rewards.append(result.reward)
            done = result.done
            dones.append(1.0 if done else 0.0)
            total += result.reward
            state, obs = result.state, result.observations
        episode_rewards.append(total)
        episode += 1

    rewards = np.asarray(rewards, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    keep = slice(None) if steps is None else slice(0, steps)
    returns = compute_returns(rewards, dones, gamma, 0.0)
    return RolloutBatch(
        states=np.asarray(states, dtype=np.float64)[keep],
        next_states=np.asarray(next_states, dtype=np.float64)[keep],
        observations=[np.asarray(col, dtype=np.float64)[keep] for col in obs_cols],
        actions=np.asarray(actions, dtype=np.float64)[keep],
        raw_actions=np.asarray(raws, dtype=np.float64)[keep],
        behavior_logp=np.asarray(logps, dtype=np.float64)[keep],
        rewards=rewards[keep],
        dones=dones[keep],
        returns=returns[keep],
        bootstrap_value=0.0,
        episode_rewards=episode_rewards,
    )


@dataclass
class EvalResult:
    episode_rewards: list[float]
    mean_reward: float
    std_reward: float
    mean_abs_action: np.ndarray
    steps: int


def evaluate_policy(env: Env, learner: Learner, episodes: int, seed: int, gamma: float = 0.99) -> EvalResult:
    batch = deterministic_rollout(env, learner, SeedTree(seed).child(seeding.EVAL), gamma, episodes=episodes)
    return EvalResult(
        episode_rewards=list(batch.episode_rewards),
        mean_reward=float(np.mean(batch.episode_rewards)),
        std_reward=float(np.std(batch.episode_rewards)),
        mean_abs_action=np.abs(batch.actions).mean(axis=(0, 2)),
        steps=batch.length,
    )


def evaluate_checkpoint(checkpoint_dir, env_id: str | None = None, episodes: int = 10, seed: int = 0) -> EvalResult:
    config, env, learner, _ = load_checkpoint_dir(checkpoint_dir, env_id)
    return evaluate_policy(env, learner, episodes, seed, gamma=config.gamma)


def evaluate_run(run_dir, checkpoint: str = "final", episodes: int = 10, seed: int = 0) -> EvalResult:
    config, env, learner, _ = load_run(run_dir, checkpoint)
    return evaluate_policy(env, learner, episodes, seed, gamma=config.gamma)


def credit_report_for_checkpoint(
    checkpoint_dir,
    out_path,
    steps: int | None = None,
    seed: int = 0,
    samples_per_agent: int | None = None,
    env_id: str | None = None,
) -> np.ndarray:
    """Write per-timestep, per-agent credit CSV from a stored checkpoint.

    The advantages are recomputed along a fresh deterministic rollout of
    ``steps`` transitions (default: one episode horizon) using the
    checkpointed estimators. Only methods that assign per-agent credit can
    be reported; the shared-advantage baseline has nothing to export.
    """
    config, env, learner, manifest = load_checkpoint_dir(checkpoint_dir, env_id)
    spec_id = method_credit_spec(config.method)
    if spec_id is None:
        raise ConfigError(f"method {config.method!r} assigns no per-agent credit")
    if steps is None:
        steps = env.spec.max_episode_steps
    tree = SeedTree(seed)
    batch = deterministic_rollout(env, learner, tree.child(seeding.EVAL), config.gamma, steps=steps)
    credit_config = CreditConfig(
        spec_id=spec_id,
        samples_per_agent=samples_per_agent or config.samples_per_agent,
        evaluator="qvalue" if method_uses_q(config.method) else "model",
        gamma=config.gamma,
        exact=config.exact_credit,
    )
    if method_uses_q(config.method):
        evaluator = QValueEvaluator(learner.q_critic, learner.defaults)
    else:
        evaluator = ModelBasedEvaluator(learner.model, learner.critic, config.gamma, learner.defaults)
    psi = per_agent_advantages(batch, credit_config, evaluator, tree.child(seeding.REPORT))
    save_credit_report(out_path, manifest["iteration"], psi, credit_config.samples_per_agent)
    return psi


def credit_report_for_run(
    run_dir,
    out_path,
    checkpoint: str = "final",
    steps: int | None = None,
    seed: int = 0,
    samples_per_agent: int | None = None,
) -> np.ndarray:
    run_dir = Path(run_dir)
    target = run_dir / "checkpoints" / checkpoint
    if not target.exists():
        raise ContractError(f"{run_dir} has no checkpoint {checkpoint!r}")
    return credit_report_for_checkpoint(
        target, out_path, steps=steps, seed=seed, samples_per_agent=samples_per_agent
    )
