"""Actors, critics, GAE identities, and PPO update behavior."""

import numpy as np
import pytest
from scipy import stats as sps

from semicredit import policy as pol
from semicredit.errors import ContractError


def make_actor(seed=0, obs_dim=3, act_dim=2, **kw):
    return pol.GaussianActor(obs_dim, act_dim, rng=np.random.default_rng(seed), **kw)


def toy_batch(T=64, n=2, obs_dim=3, act_dim=1, seed=0, gamma=0.9):
    """Random episodic rollout data satisfying the return recursion."""
    rng = np.random.default_rng(seed)
    states = rng.normal(size=(T, obs_dim * n))
    next_states = rng.normal(size=(T, obs_dim * n))
    obs = [states[:, i * obs_dim : (i + 1) * obs_dim].copy() for i in range(n)]
    raw = rng.normal(size=(T, n, act_dim))
    actions = np.clip(raw, -1, 1)
    logp = rng.normal(size=(T, n))
    rewards = rng.normal(size=T)
    dones = np.zeros(T)
    dones[T // 3] = 1.0
    dones[2 * T // 3] = 1.0
    bootstrap = 0.37
    returns = pol.compute_returns(rewards, dones, gamma, bootstrap)
    return pol.RolloutBatch(
        states=states,
        next_states=next_states,
        observations=obs,
        actions=actions,
        raw_actions=raw,
        behavior_logp=logp,
        rewards=rewards,
        dones=dones,
        returns=returns,
        bootstrap_value=bootstrap,
    )


class TestGaussianActor:
    def test_deterministic_act_returns_bounded_mean(self):
        actor = make_actor()
        obs = np.array([0.3, -0.5, 1.2])
        sample = actor.act(obs, deterministic=True)
        np.testing.assert_array_equal(sample.action, actor.mean_actions(obs[None, :])[0])
        assert np.all(np.abs(sample.action) <= 1.0)

    def test_log_prob_of_mean_closed_form(self):
        actor = make_actor(log_std_init=-0.5)
        sample = actor.act(np.zeros(3), deterministic=True)
        expected = 2 * (0.5 - 0.5 * np.log(2 * np.pi))
        assert sample.log_prob == pytest.approx(expected, abs=1e-12)

    def test_sampled_log_prob_matches_scipy(self):
        actor = make_actor(seed=3)
        obs = np.array([0.1, 0.2, -0.3])
        rng = np.random.default_rng(17)
        sample = actor.act(obs, rng=rng)
        mean = actor.mean_actions(obs[None, :])[0]
        std = np.exp(actor.log_std.data)
        expected = float(np.sum(sps.norm.logpdf(sample.raw_action, loc=mean, scale=std)))
        assert sample.log_prob == pytest.approx(expected, abs=1e-10)

    def test_sampled_actions_clamped_log_prob_is_not(self):
        actor = make_actor(seed=5, log_std_init=1.5)
        rng = np.random.default_rng(2)
        samples = [actor.act(np.zeros(3), rng=rng) for _ in range(50)]
        assert all(np.all(np.abs(s.action) <= 1.0) for s in samples)
        assert any(np.any(np.abs(s.raw_action) > 1.0) for s in samples)

    def test_ratio_is_one_at_behavior_policy(self):
        actor = make_actor(seed=9, act_dim=2)
        rng = np.random.default_rng(4)
        obs = rng.normal(size=(40, 3))
        raws, logps = [], []
        for row in obs:
            s = actor.act(row, rng=rng)
            raws.append(s.raw_action)
            logps.append(s.log_prob)
        recomputed = actor.log_probs_np(obs, np.array(raws))
        ratio = np.exp(recomputed - np.array(logps))
        np.testing.assert_allclose(ratio, 1.0, atol=1e-12)

    def test_taped_log_probs_match_numpy_path(self):
        actor = make_actor(seed=11)
        rng = np.random.default_rng(0)
        obs = rng.normal(size=(8, 3))
        raw = rng.normal(size=(8, 2))
        np.testing.assert_allclose(
            actor.log_probs_taped(obs, raw).data, actor.log_probs_np(obs, raw), atol=1e-12
        )


class TestReturnsAndGae:
    def test_worked_example(self):
        adv = pol.gae(
            rewards=np.array([1.0, 1.0]),
            values=np.array([0.5, 0.4]),
            bootstrap_value=0.0,
            dones=np.zeros(2),
            gamma=1.0,
            lam=0.5,
        )
        np.testing.assert_allclose(adv, [1.2, 0.6], atol=1e-12)

    def test_lambda_zero_is_td_residual(self):
        rng = np.random.default_rng(8)
        T = 50
        rewards = rng.normal(size=T)
        values = rng.normal(size=T)
        dones = (rng.uniform(size=T) < 0.1).astype(float)
        boot = 0.7
        adv = pol.gae(rewards, values, boot, dones, gamma=0.97, lam=0.0)
        nxt = np.append(values[1:], boot)
        expected = rewards + 0.97 * nxt * (1 - dones) - values
        np.testing.assert_allclose(adv, expected, atol=1e-9)

    def test_lambda_one_is_return_minus_value(self):
        rng = np.random.default_rng(9)
        T = 80
        rewards = rng.normal(size=T)
        values = rng.normal(size=T)
        dones = np.zeros(T)
        dones[[19, 52, 79]] = 1.0
        adv = pol.gae(rewards, values, 0.0, dones, gamma=0.95, lam=1.0)
        returns = pol.compute_returns(rewards, dones, 0.95, 0.0)
        np.testing.assert_allclose(adv, returns - values, atol=1e-9)

    def test_recursion_resets_at_episode_ends(self):
        rewards = np.array([1.0, 1.0, 1.0, 1.0])
        values = np.zeros(4)
        dones = np.array([0.0, 1.0, 0.0, 0.0])
        adv = pol.gae(rewards, values, 0.0, dones, gamma=1.0, lam=1.0)
        # first episode: [2, 1]; second: [2, 1]; no leakage across the reset
        np.testing.assert_allclose(adv, [2.0, 1.0, 2.0, 1.0], atol=1e-12)

    def test_returns_oracle_brute_force(self):
        rng = np.random.default_rng(10)
        rewards = rng.normal(size=12)
        dones = np.zeros(12)
        dones[[5, 11]] = 1.0
        gamma = 0.9
        returns = pol.compute_returns(rewards, dones, gamma, bootstrap_value=0.0)
        for start, end in [(0, 6), (6, 12)]:
            for t in range(start, end):
                expected = sum(gamma ** (k - t) * rewards[k] for k in range(t, end))
                assert returns[t] == pytest.approx(expected, abs=1e-9)

    def test_batch_check_validates_recursion(self):
        batch = toy_batch(gamma=0.9)
        batch.check(0.9)
        batch.returns[3] += 1e-3
        with pytest.raises(ContractError):
            batch.check(0.9)


class TestCriticUpdates:
    def test_critic_regression_reduces_loss(self):
        batch = toy_batch(T=256, seed=1)
        critic = pol.Critic(batch.states.shape[1], rng=np.random.default_rng(0))
        losses = pol.critic_update(critic, batch, epochs=15, minibatch_size=64, rng=np.random.default_rng(1))
        assert losses[-1] < losses[0]

    def test_q_critic_regression_reduces_loss(self):
        batch = toy_batch(T=256, seed=2)
        q = pol.QCritic(batch.states.shape[1], batch.flat_actions().shape[1], rng=np.random.default_rng(0))
        losses = pol.q_critic_update(q, batch, epochs=15, minibatch_size=64, rng=np.random.default_rng(1))
        assert losses[-1] < losses[0]

    def test_small_batch_runs_full_batch_steps(self):
        batch = toy_batch(T=10, seed=3)
        critic = pol.Critic(batch.states.shape[1], rng=np.random.default_rng(0))
        losses = pol.critic_update(critic, batch, epochs=3, minibatch_size=64, rng=np.random.default_rng(1))
        assert len(losses) == 3


class TestPpoUpdate:
    def test_zero_advantages_leave_parameters_unchanged(self):
        batch = toy_batch(T=64, seed=4)
        actor = make_actor(seed=1, obs_dim=3, act_dim=1)
        # behavior data must come from this actor for finite ratios
        relabel(batch, actor, agent=0)
        before = [p.data.copy() for p in actor.parameters()]
        pol.ppo_actor_update(actor, batch, 0, np.zeros(batch.length), rng=np.random.default_rng(0))
        for b, p in zip(before, actor.parameters()):
            np.testing.assert_array_equal(b, p.data)

    def test_positive_advantage_raises_log_prob_negative_lowers(self):
        for sign in (+1.0, -1.0):
            batch = toy_batch(T=1, seed=5)
            actor = make_actor(seed=2, obs_dim=3, act_dim=1)
            relabel(batch, actor, agent=0)
            obs = batch.observations[0]
            raw = batch.raw_actions[:, 0, :]
            before = actor.log_probs_np(obs, raw)[0]
            pol.ppo_actor_update(
                actor, batch, 0, np.array([sign]), epochs=1, minibatch_size=1, rng=np.random.default_rng(0)
            )
            after = actor.log_probs_np(obs, raw)[0]
            if sign > 0:
                assert after >= before
            else:
                assert after <= before

    def test_clip_plateau_has_zero_gradient(self):
        """Ratio beyond 1 + eps with positive advantage: objective flat."""
        batch = toy_batch(T=4, seed=6)
        actor = make_actor(seed=3, obs_dim=3, act_dim=1)
        relabel(batch, actor, agent=0)
        batch.behavior_logp[:, 0] -= 0.5  # forces ratio = e^0.5 > 1.2 everywhere
        before = [p.data.copy() for p in actor.parameters()]
        stats = pol.ppo_actor_update(
            actor, batch, 0, np.ones(batch.length), clip_eps=0.2, epochs=1, minibatch_size=4,
            rng=np.random.default_rng(0),
        )
        assert stats.objective_per_epoch[0] == pytest.approx(1.2, abs=1e-12)
        for b, p in zip(before, actor.parameters()):
            np.testing.assert_array_equal(b, p.data)

    def test_non_finite_ratio_skips_minibatch(self):
        batch = toy_batch(T=8, seed=7)
        actor = make_actor(seed=4, obs_dim=3, act_dim=1)
        relabel(batch, actor, agent=0)
        batch.behavior_logp[:, 0] = -np.inf
        before = [p.data.copy() for p in actor.parameters()]
        with pytest.warns(RuntimeWarning, match="non-finite"):
            stats = pol.ppo_actor_update(
                actor, batch, 0, np.ones(8), epochs=1, minibatch_size=8, rng=np.random.default_rng(0)
            )
        assert stats.skipped_minibatches == 1
        for b, p in zip(before, actor.parameters()):
            np.testing.assert_array_equal(b, p.data)

    def test_updating_one_actor_leaves_others_untouched(self):
        batch = toy_batch(T=32, seed=8)
        actors = [make_actor(seed=k, obs_dim=3, act_dim=1) for k in range(2)]
        for agent, actor in enumerate(actors):
            relabel(batch, actor, agent=agent)
        frozen = [p.data.copy() for p in actors[1].parameters()]
        pol.ppo_actor_update(actors[0], batch, 0, np.ones(32), rng=np.random.default_rng(0))
        for b, p in zip(frozen, actors[1].parameters()):
            np.testing.assert_array_equal(b, p.data)


def relabel(batch: pol.RolloutBatch, actor: pol.GaussianActor, agent: int) -> None:
    """Rewrite one agent's behavior log-probs as if this actor had acted."""
    batch.behavior_logp[:, agent] = actor.log_probs_np(
        batch.observations[agent], batch.raw_actions[:, agent, :]
    )


class TestStandardize:
    def test_zero_mean_unit_scale(self):
        x = np.random.default_rng(0).normal(3.0, 2.0, size=500)
        z = pol.standardize(x)
        assert abs(z.mean()) < 1e-12
        assert z.std() == pytest.approx(1.0, abs=1e-6)

    def test_constant_input_stays_finite(self):
        z = pol.standardize(np.full(10, 4.2))
        assert np.all(np.isfinite(z))
        np.testing.assert_allclose(z, 0.0, atol=1e-6)
