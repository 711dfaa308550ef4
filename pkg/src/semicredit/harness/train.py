"""The training loop: rollouts, model fits, per-agent credit, PPO updates.

Each iteration runs in a fixed order: collect fresh on-policy rollouts,
fit the value estimator used for coalition values (dynamics plus reward
model, or the joint-action Q net), compute per-agent advantages with the
critic as it stood when the data was collected, update every actor with
clipped-surrogate ascent, and only then regress the critic onto the new
returns. Randomness is drawn from per-purpose seed subtrees keyed by the
iteration index, so any stage can be replayed in isolation.

Non-finite numbers anywhere in the update path abort the run: the run log
gets a final row whose status names the failure, the current parameters are
dumped to ``checkpoints/abort``, and TrainAbort is raised. Nothing is
silently clamped.
"""

from __future__ import annotations

import json
import time
from dataclasses import dataclass
from pathlib import Path

import numpy as np

from .. import __version__, seeding
from ..credit import (
    CreditConfig,
    ModelBasedEvaluator,
    QValueEvaluator,
    per_agent_advantages,
    shared_advantages,
    zero_defaults,
)
from ..envs import Env, make_env, split_observations
from ..errors import ContractError, GradientError, TrainAbort
from ..numcore import load_params, save_params
from ..policy import (
    Critic,
    GaussianActor,
    QCritic,
    RolloutBatch,
    compute_returns,
    critic_update,
    ppo_actor_update,
    q_critic_update,
    standardize,
)
from ..seeding import SeedTree
from ..worldmodel import WorldModel
from .config import (
    TrainConfig,
    method_credit_spec,
    method_uses_model,
    method_uses_q,
    parse_sizes,
)
from .runlog import RunLog, RunRecord

CHECKPOINT_FORMAT = 1


class Learner:
    """Every learnable piece a method needs on a given environment.

    Methods with per-agent credit from a dynamics model carry a state-value
    critic and a world model; the Q variant carries a joint-action value net
    and no state-value critic; the shared-advantage baseline carries only
    the critic. All of them own one independent actor per agent.
    """

    def __init__(self, config: TrainConfig, env: Env, init_tree: SeedTree):
        self.config = config
        self.spec = env.spec
        n = self.spec.n_agents
        act_dim = self.spec.action_dim
        state_dim = self.spec.global_state_dim

        clip = config.grad_clip_norm if config.grad_clip_norm > 0 else None
        self.actors = []
        for i in range(n):
            actor = GaussianActor(
                self.spec.obs_dims[i],
                act_dim,
                rng=init_tree.child(0, i).generator(),
                hidden=parse_sizes(config.actor_hidden),
                log_std_init=config.log_std_init,
                lr=config.actor_lr,
            )
            actor.opt.max_grad_norm = clip
            self.actors.append(actor)

        self.critic: Critic | None = None
        self.q_critic: QCritic | None = None
        self.model: WorldModel | None = None
        if method_uses_q(config.method):
            self.q_critic = QCritic(
                state_dim,
                n * act_dim,
                rng=init_tree.child(1).generator(),
                hidden=parse_sizes(config.critic_hidden),
                lr=config.critic_lr,
            )
            self.q_critic.opt.max_grad_norm = clip
        else:
            self.critic = Critic(
                state_dim,
                rng=init_tree.child(1).generator(),
                hidden=parse_sizes(config.critic_hidden),
                lr=config.critic_lr,
            )
            self.critic.opt.max_grad_norm = clip
        if method_uses_model(config.method):
            self.model = WorldModel(
                state_dim,
                n * act_dim,
                rng=init_tree.child(2).generator(),
                hidden_state=parse_sizes(config.model_state_hidden),
                hidden_reward=parse_sizes(config.model_reward_hidden),
                lr=config.model_lr,
            )
            for opt in (self.model.opt_s, self.model.opt_r):
                opt.max_grad_norm = clip
        self.defaults = zero_defaults(n, act_dim)

    def mean_joint_action(self, state: np.ndarray) -> np.ndarray:
        obs = split_observations(state, self.spec)
        return np.stack([actor.mean_actions(o[None, :])[0] for actor, o in zip(self.actors, obs)])

    def tail_value(self, state: np.ndarray) -> float:
        """Value used to bootstrap a rollout cut off mid-episode."""
        if self.critic is not None:
            return self.critic.value(state)
        flat = self.mean_joint_action(state).reshape(1, -1)
        return float(self.q_critic.values(state[None, :], flat)[0])

    def named_arrays(self) -> dict[str, np.ndarray]:
        named = {}
        for i, actor in enumerate(self.actors):
            for key, tensor in actor.named_parameters(f"actor{i}/").items():
                named[key] = tensor.data
        if self.critic is not None:
            for key, tensor in self.critic.net.named_parameters("critic/").items():
                named[key] = tensor.data
        if self.q_critic is not None:
            for key, tensor in self.q_critic.net.named_parameters("q/").items():
                named[key] = tensor.data
        if self.model is not None:
            named.update(self.model.named_parameters())
        return named

    def load_arrays(self, named: dict[str, np.ndarray]) -> None:
        current = self.named_arrays()
        if set(named) != set(current):
            missing = sorted(set(current) - set(named))
            extra = sorted(set(named) - set(current))
            raise ContractError(f"checkpoint keys mismatch: missing {missing[:3]}, extra {extra[:3]}")
        for key, arr in named.items():
            if np.asarray(arr).shape != current[key].shape:
                raise ContractError(f"{key}: checkpoint shape {np.asarray(arr).shape} != {current[key].shape}")
        for i, actor in enumerate(self.actors):
            for key, tensor in actor.named_parameters(f"actor{i}/").items():
                tensor.data = np.asarray(named[key], dtype=np.float64)
        if self.critic is not None:
            for key, tensor in self.critic.net.named_parameters("critic/").items():
                tensor.data = np.asarray(named[key], dtype=np.float64)
        if self.q_critic is not None:
            for key, tensor in self.q_critic.net.named_parameters("q/").items():
                tensor.data = np.asarray(named[key], dtype=np.float64)
        if self.model is not None:
            self.model.load_named_parameters(named)


def collect_rollout(
    env: Env,
    learner: Learner,
    steps: int,
    env_tree: SeedTree,
    action_rng: np.random.Generator,
    gamma: float,
) -> RolloutBatch:
    """Run fresh episodes until ``steps`` transitions are banked.

    Episode resets are seeded from ``env_tree`` children indexed by episode
    number. A trailing cut-off episode is bootstrapped with the learner's
    current tail value, so returns stay unbiased under the critic in hand.
    """
    n = env.spec.n_agents
    states, next_states, rewards, dones = [], [], [], []
    actions, raws, logps = [], [], []
    obs_cols: list[list[np.ndarray]] = [[] for _ in range(n)]
    episode_rewards: list[float] = []

    episode = 0
    state, obs = env.reset(env_tree.child(episode).integer_seed())
    episode_total = 0.0
    for _ in range(steps):
        samples = [learner.actors[i].act(obs[i], rng=action_rng) for i in range(n)]
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
        dones.append(1.0 if result.done else 0.0)
        episode_total += result.reward

        if result.done:
            episode_rewards.append(episode_total)
            episode_total = 0.0
            episode += 1
            state, obs = env.reset(env_tree.child(episode).integer_seed())
        else:
            state, obs = result.state, result.observations

    rewards = np.asarray(rewards, dtype=np.float64)
    dones = np.asarray(dones, dtype=np.float64)
    bootstrap = 0.0 if dones[-1] else learner.tail_value(next_states[-1])
    return RolloutBatch(
        states=np.asarray(states, dtype=np.float64),
        next_states=np.asarray(next_states, dtype=np.float64),
        observations=[np.asarray(col, dtype=np.float64) for col in obs_cols],
        actions=np.asarray(actions, dtype=np.float64),
        raw_actions=np.asarray(raws, dtype=np.float64),
        behavior_logp=np.asarray(logps, dtype=np.float64),
        rewards=rewards,
        dones=dones,
        returns=compute_returns(rewards, dones, gamma, bootstrap),
        bootstrap_value=float(bootstrap),
        episode_rewards=episode_rewards,
    )


def save_checkpoint(directory, learner: Learner, iteration: int) -> Path:
    directory = Path(directory)
    directory.mkdir(parents=True, exist_ok=True)
    save_params(directory / "params.txt", learner.named_arrays())
    manifest = {
        "format_version": CHECKPOINT_FORMAT,
        "package_version": __version__,
        "config_hash": learner.config.hash(),
        "config": learner.config.to_text(),
        "iteration": iteration,
        "env": learner.config.env,
        "method": learner.config.method,
        "n_agents": learner.spec.n_agents,
    }
    (directory / "manifest.json").write_text(json.dumps(manifest, indent=2) + "\n")
    return directory


def read_manifest(directory) -> dict:
    path = Path(directory) / "manifest.json"
    if not path.exists():
        raise ContractError(f"{directory} has no manifest.json; not a checkpoint directory")
    manifest = json.loads(path.read_text())
    if manifest.get("format_version") != CHECKPOINT_FORMAT:
        raise ContractError(f"checkpoint format {manifest.get('format_version')!r}, expected {CHECKPOINT_FORMAT}")
    return manifest


def load_checkpoint(directory, learner: Learner) -> dict:
    directory = Path(directory)
    manifest = read_manifest(directory)
    for key, want in (("env", learner.config.env), ("method", learner.config.method), ("n_agents", learner.spec.n_agents)):
        if manifest.get(key) != want:
            raise ContractError(f"checkpoint {key}={manifest.get(key)!r} does not match config {want!r}")
    learner.load_arrays(load_params(directory / "params.txt"))
    return manifest


@dataclass
class TrainResult:
    config: TrainConfig
    run_dir: Path
    runlog_path: Path
    final_checkpoint: Path
    iterations_completed: int
    status: str
    wall_clock: float


class Trainer:
    """Owns one run directory and drives the iteration loop."""

    def __init__(self, config: TrainConfig, clock=time.monotonic):
        self.config = config
        self.clock = clock
        self.env = make_env(config.env)
        self.tree = SeedTree(config.seed)
        self.learner = Learner(config, self.env, self.tree.child(seeding.INIT))
        self.run_dir = Path(config.out) / config.run_name
        spec_id = method_credit_spec(config.method)
        self.credit_config = None
        if spec_id is not None:
            self.credit_config = CreditConfig(
                spec_id=spec_id,
                samples_per_agent=config.samples_per_agent,
                evaluator="qvalue" if method_uses_q(config.method) else "model",
                gamma=config.gamma,
                exact=config.exact_credit,
            )

    def advantages(self, batch: RolloutBatch, credit_tree: SeedTree) -> np.ndarray:
        """Per-agent advantage matrix (T, n) for this iteration's batch."""
        n = self.env.spec.n_agents
        if self.credit_config is None:
            shared = shared_advantages(batch, self.learner.critic, self.config.gamma, self.config.gae_lambda)
            return np.tile(shared[:, None], (1, n))
        if self.learner.q_critic is not None:
            evaluator = QValueEvaluator(self.learner.q_critic, self.learner.defaults)
        else:
            evaluator = ModelBasedEvaluator(
                self.learner.model, self.learner.critic, self.config.gamma, self.learner.defaults
            )
        return per_agent_advantages(batch, self.credit_config, evaluator, credit_tree)

    def _iteration(self, k: int) -> tuple[RolloutBatch, np.ndarray, float, float, float]:
        cfg = self.config
        batch = collect_rollout(
            self.env,
            self.learner,
            cfg.steps_per_iteration,
            self.tree.child(seeding.ENV, k),
            self.tree.child(seeding.ROLLOUT, k).generator(),
            cfg.gamma,
        )
        batch.check(cfg.gamma)

        model_delta_mse = float("nan")
        model_reward_mse = float("nan")
        critic_loss = float("nan")
        if self.learner.model is not None:
            stats = self.learner.model.fit(
                batch.states,
                batch.flat_actions(),
                batch.next_states,
                batch.rewards,
                epochs=cfg.model_epochs,
                minibatch_size=cfg.minibatch_size,
                rng=self.tree.child(seeding.MODEL_FIT, k).generator(),
            )
            model_delta_mse = stats.delta_mse_after
            model_reward_mse = stats.reward_mse_after
        if self.learner.q_critic is not None:
            losses = q_critic_update(
                self.learner.q_critic,
                batch,
                epochs=cfg.critic_epochs,
                minibatch_size=cfg.minibatch_size,
                rng=self.tree.child(seeding.CRITIC_FIT, k).generator(),
            )
            critic_loss = losses[-1]

        psi = self.advantages(batch, self.tree.child(seeding.CREDIT, k))
        if not np.all(np.isfinite(psi)):
            raise GradientError("non-finite per-agent advantages")

        for i, actor in enumerate(self.learner.actors):
            column = standardize(psi[:, i]) if cfg.standardize_advantages else psi[:, i]
            ppo_actor_update(
                actor,
                batch,
                i,
                column,
                clip_eps=cfg.clip_eps,
                epochs=cfg.ppo_epochs,
                minibatch_size=cfg.minibatch_size,
                rng=self.tree.child(seeding.ACTOR_FIT, k, i).generator(),
            )

        if self.learner.critic is not None:
            losses = critic_update(
                self.learner.critic,
                batch,
                epochs=cfg.critic_epochs,
                minibatch_size=cfg.minibatch_size,
                rng=self.tree.child(seeding.CRITIC_FIT, k).generator(),
            )
            critic_loss = losses[-1]
        return batch, psi, model_delta_mse, model_reward_mse, critic_loss

    def run(self) -> TrainResult:
        cfg = self.config
        self.run_dir.mkdir(parents=True, exist_ok=True)
        cfg.save(self.run_dir / "config.txt")
        n = self.env.spec.n_agents
        runlog_path = self.run_dir / "runlog.csv"
        start = self.clock()
        status = "ok"
        completed = 0
        with RunLog(runlog_path, n) as log:
            for k in range(cfg.iterations):
                try:
                    batch, psi, delta_mse, reward_mse, critic_loss = self._iteration(k)
                except GradientError as err:
                    status = f"abort:{err}".replace(",", ";")
                    log.append(
                        RunRecord(
                            iteration=k,
                            env_steps=k * cfg.steps_per_iteration,
                            mean_episode_reward=float("nan"),
                            reward_std=float("nan"),
                            mean_abs_action=np.full(n, np.nan),
                            model_delta_mse=float("nan"),
                            model_reward_mse=float("nan"),
                            critic_loss=float("nan"),
                            mean_psi=np.full(n, np.nan),
                            wall_clock=self.clock() - start,
                            status=status,
                        )
                    )
                    save_checkpoint(self.run_dir / "checkpoints" / "abort", self.learner, k)
                    raise TrainAbort(status) from err
                completed = k + 1
                if batch.episode_rewards:
                    mean_reward = float(np.mean(batch.episode_rewards))
                    reward_std = float(np.std(batch.episode_rewards))
                else:
                    # Nothing finished; report the lone partial episode honestly.
                    mean_reward = float(np.sum(batch.rewards))
                    reward_std = float("nan")
                log.append(
                    RunRecord(
                        iteration=k,
                        env_steps=completed * cfg.steps_per_iteration,
                        mean_episode_reward=mean_reward,
                        reward_std=reward_std,
                        mean_abs_action=np.abs(batch.actions).mean(axis=(0, 2)),
                        model_delta_mse=delta_mse,
                        model_reward_mse=reward_mse,
                        critic_loss=critic_loss,
                        mean_psi=psi.mean(axis=0),
                        wall_clock=self.clock() - start,
                        status="ok",
                    )
                )
                if cfg.checkpoint_every > 0 and completed % cfg.checkpoint_every == 0:
                    save_checkpoint(self.run_dir / "checkpoints" / f"iter_{completed:06d}", self.learner, completed)
        final = save_checkpoint(self.run_dir / "checkpoints" / "final", self.learner, completed)
        return TrainResult(
            config=cfg,
            run_dir=self.run_dir,
            runlog_path=runlog_path,
            final_checkpoint=final,
            iterations_completed=completed,
            status=status,
            wall_clock=self.clock() - start,
        )


def train(config: TrainConfig, clock=time.monotonic) -> TrainResult:
    return Trainer(config, clock=clock).run()
