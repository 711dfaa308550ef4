"""Credit assignment: evaluators, batched semivalues, and reports."""

import numpy as np
import pytest

from semicredit import coopgame as cg
from semicredit import credit as cr
from semicredit import policy as pol
from semicredit.errors import ContractError
from semicredit.policy import Critic, QCritic, RolloutBatch
from semicredit.seeding import SeedTree
from semicredit.worldmodel import WorldModel


class SeparableEvaluator(cg.CoalitionEvaluator):
    """v(C) = sum over members of w_i * (1 - (a_i - 0.5)^2), defaults at 0.

    Marginals are coalition-independent, so every semivalue equals
    w_i * ((1 - (a_i - 0.5)^2) - 0.75) exactly and Monte Carlo sampling
    carries no variance. This pins down the whole credit pipeline.
    """

    def __init__(self, weights):
        self.weights = np.asarray(weights, dtype=np.float64)
        self.n_agents = self.weights.size
        self.defaults = np.zeros((self.n_agents, 1))

    def values(self, states, joint_actions, member_masks) -> np.ndarray:
        masks = np.asarray(member_masks, dtype=bool)
        actions = np.asarray(joint_actions, dtype=np.float64)
        if actions.ndim == 2:
            actions = np.broadcast_to(actions, (masks.shape[0], *actions.shape))
        masked = np.where(masks[:, :, None], actions, self.defaults)
        return np.sum(self.weights * (1.0 - (masked[:, :, 0] - 0.5) ** 2), axis=1)


def make_batch(T: int, n: int, state_dim: int, seed: int) -> RolloutBatch:
    rng = np.random.default_rng(seed)
    states = rng.normal(size=(T, state_dim))
    raw = rng.normal(scale=0.7, size=(T, n, 1))
    actions = np.clip(raw, -1, 1)
    rewards = rng.normal(size=T)
    dones = np.zeros(T)
    dones[-1] = 1.0
    obs_dim = state_dim // n
    obs = [states[:, i * obs_dim : (i + 1) * obs_dim].copy() for i in range(n)]
    returns = pol.compute_returns(rewards, dones, 0.9, 0.0)
    return RolloutBatch(
        states=states,
        next_states=rng.normal(size=(T, state_dim)),
        observations=obs,
        actions=actions,
        raw_actions=raw,
        behavior_logp=rng.normal(size=(T, n)),
        rewards=rewards,
        dones=dones,
        returns=returns,
        bootstrap_value=0.0,
    )


class TestCreditConfig:
    def test_valid(self):
        cr.CreditConfig(spec_id="banzhaf", samples_per_agent=3, evaluator="qvalue", gamma=0.95)

    def test_rejects_bad_fields(self):
        with pytest.raises(ContractError):
            cr.CreditConfig(samples_per_agent=0)
        with pytest.raises(ContractError):
            cr.CreditConfig(evaluator="oracle")
        with pytest.raises(ContractError):
            cr.CreditConfig(gamma=1.5)
        with pytest.raises(ContractError):
            cr.CreditConfig(spec_id="egalitarian")


class TestModelBasedEvaluator:
    def setup_method(self):
        self.n, self.act = 3, 1
        self.state_dim = 6
        self.model = WorldModel(self.state_dim, self.n * self.act, rng=np.random.default_rng(0))
        self.critic = Critic(self.state_dim, rng=np.random.default_rng(1))
        self.defaults = cr.zero_defaults(self.n, self.act)

    def test_masking_consistency(self):
        """Values depend on an agent's action only through membership."""
        ev = cr.ModelBasedEvaluator(self.model, self.critic, 0.9, self.defaults)
        state = np.random.default_rng(2).normal(size=self.state_dim)
        a1 = np.array([[0.3], [0.7], [-0.2]])
        a2 = a1.copy()
        a2[1, 0] = -0.9  # non-member changes its mind
        coalition = cg.Coalition.of([0, 2], 3)
        v1 = cr.coalition_value(ev, state, a1, coalition)
        v2 = cr.coalition_value(ev, state, a2, coalition)
        assert v1 == v2
        v3 = cr.coalition_value(ev, state, a2, coalition.add(1))
        assert v3 != v1

    def test_gamma_zero_is_reward_model_only(self):
        ev = cr.ModelBasedEvaluator(self.model, None, 0.0, self.defaults)
        state = np.random.default_rng(3).normal(size=self.state_dim)
        actions = np.array([[0.5], [-0.5], [0.1]])
        coalition = cg.Coalition.of([0], 3)
        masked = cg.mask_action(actions, coalition, self.defaults)
        expected = self.model.predict_rewards(state[None, :], masked.reshape(1, -1))[0]
        assert cr.coalition_value(ev, state, actions, coalition) == pytest.approx(expected, abs=1e-12)

    def test_discounted_value_uses_critic_on_imagined_state(self):
        gamma = 0.9
        ev = cr.ModelBasedEvaluator(self.model, self.critic, gamma, self.defaults)
        state = np.random.default_rng(4).normal(size=self.state_dim)
        actions = np.array([[0.5], [-0.5], [0.1]])
        coalition = cg.Coalition.full(3)
        flat = actions.reshape(1, -1)
        next_state, reward = self.model.predict(state[None, :], flat)
        expected = reward[0] + gamma * self.critic.values(next_state)[0]
        assert cr.coalition_value(ev, state, actions, coalition) == pytest.approx(expected, abs=1e-12)

    def test_empty_coalition_value_not_forced_to_zero(self):
        ev = cr.ModelBasedEvaluator(self.model, None, 0.0, self.defaults)
        state = np.zeros(self.state_dim)
        actions = np.ones((3, 1))
        v_empty = cr.coalition_value(ev, state, actions, cg.Coalition.empty(3))
        assert v_empty != 0.0

    def test_gamma_needs_critic(self):
        with pytest.raises(ContractError):
            cr.ModelBasedEvaluator(self.model, None, 0.5, self.defaults)


class TestQValueEvaluator:
    def test_matches_q_net_on_masked_actions(self):
        n, state_dim = 3, 6
        q = QCritic(state_dim, n, rng=np.random.default_rng(5))
        ev = cr.QValueEvaluator(q, cr.zero_defaults(n, 1))
        state = np.random.default_rng(6).normal(size=state_dim)
        actions = np.array([[0.2], [0.4], [-0.6]])
        coalition = cg.Coalition.of([1], 3)
        masked = cg.mask_action(actions, coalition, ev.defaults)
        expected = q.values(state[None, :], masked.reshape(1, -1))[0]
        assert cr.coalition_value(ev, state, actions, coalition) == pytest.approx(expected, abs=1e-12)


class TestPerAgentAdvantages:
    def test_separable_game_closed_form_for_all_specs(self):
        w = np.array([1.0, 2.0, 3.0, 4.0])
        ev = SeparableEvaluator(w)
        batch = make_batch(T=16, n=4, state_dim=8, seed=0)
        tree = SeedTree(7)
        closed = w * ((1.0 - (batch.actions[:, :, 0] - 0.5) ** 2) - 0.75)
        for spec_id in ("shapley", "banzhaf", "loo", "fixed:2"):
            cfg = cr.CreditConfig(spec_id=spec_id, samples_per_agent=3, gamma=0.0)
            psi = cr.per_agent_advantages(batch, cfg, ev, tree)
            np.testing.assert_allclose(psi, closed, atol=1e-9)

    def test_dummy_agent_gets_exactly_zero(self):
        """An agent whose executed action equals its default cannot matter."""
        ev = SeparableEvaluator(np.array([1.0, 2.0, 3.0]))
        batch = make_batch(T=8, n=3, state_dim=6, seed=1)
        batch.actions[:, 1, :] = 0.0  # the default
        cfg = cr.CreditConfig(spec_id="shapley", samples_per_agent=4, gamma=0.0)
        psi = cr.per_agent_advantages(batch, cfg, ev, SeedTree(9))
        np.testing.assert_array_equal(psi[:, 1], np.zeros(8))

    def test_dummy_agent_zero_under_model_evaluator(self):
        n, state_dim = 3, 6
        model = WorldModel(state_dim, n, rng=np.random.default_rng(7))
        critic = Critic(state_dim, rng=np.random.default_rng(8))
        ev = cr.ModelBasedEvaluator(model, critic, 0.9, cr.zero_defaults(n, 1))
        batch = make_batch(T=8, n=3, state_dim=6, seed=2)
        batch.actions[:, 0, :] = 0.0
        cfg = cr.CreditConfig(spec_id="banzhaf", samples_per_agent=3, gamma=0.9)
        psi = cr.per_agent_advantages(batch, cfg, ev, SeedTree(10))
        np.testing.assert_array_equal(psi[:, 0], np.zeros(8))

    def test_loo_is_exact_for_any_sample_count(self):
        game = cg.TabularGame(np.random.default_rng(11).uniform(size=16))
        batch = make_batch(T=6, n=4, state_dim=8, seed=3)
        cfg1 = cr.CreditConfig(spec_id="loo", samples_per_agent=1, gamma=0.0)
        cfg5 = cr.CreditConfig(spec_id="loo", samples_per_agent=5, gamma=0.0)
        psi1 = cr.per_agent_advantages(batch, cfg1, game, SeedTree(1))
        psi5 = cr.per_agent_advantages(batch, cfg5, game, SeedTree(2))
        np.testing.assert_array_equal(psi1, psi5)
        full = game.table[-1]
        for i in range(4):
            expected = full - game.table[15 & ~(1 << i)]
            np.testing.assert_allclose(psi1[:, i], expected, atol=1e-12)

    def test_matches_pointwise_estimator_stream_for_stream(self):
        """The batched path reproduces semivalue_mc draw for draw."""
        game = cg.TabularGame(np.random.default_rng(12).uniform(size=32))
        batch = make_batch(T=5, n=5, state_dim=10, seed=4)
        cfg = cr.CreditConfig(spec_id="shapley", samples_per_agent=4, gamma=0.0)
        tree = SeedTree(21)
        psi = cr.per_agent_advantages(batch, cfg, game, tree)
        spec = cg.shapley_spec(5)
        for t in range(5):
            for i in range(5):
                ref = cg.semivalue_mc(
                    i, None, None, game, spec, 4, tree.child(t, i).generator()
                )
                assert psi[t, i] == pytest.approx(ref, abs=1e-9)

    def test_agent_order_does_not_change_bits(self):
        game = cg.TabularGame(np.random.default_rng(13).uniform(size=16))
        batch = make_batch(T=12, n=4, state_dim=8, seed=5)
        cfg = cr.CreditConfig(spec_id="banzhaf", samples_per_agent=5, gamma=0.0)
        tree = SeedTree(33)
        a = cr.per_agent_advantages(batch, cfg, game, tree, agent_order=[0, 1, 2, 3])
        b = cr.per_agent_advantages(batch, cfg, game, tree, agent_order=[3, 1, 0, 2])
        np.testing.assert_array_equal(a, b)

    def test_exact_mode_matches_semivalue_exact(self):
        game = cg.TabularGame(np.random.default_rng(14).uniform(size=16))
        batch = make_batch(T=4, n=4, state_dim=8, seed=6)
        cfg = cr.CreditConfig(spec_id="shapley", samples_per_agent=1, gamma=0.0, exact=True)
        psi = cr.per_agent_advantages(batch, cfg, game, SeedTree(5))
        spec = cg.shapley_spec(4)
        for i in range(4):
            ref = cg.semivalue_exact(i, None, None, game, spec)
            np.testing.assert_allclose(psi[:, i], ref, atol=1e-12)

    def test_exact_mode_guards_agent_count(self):
        game = cg.TabularGame(np.zeros(1 << 11))
        batch = make_batch(T=2, n=11, state_dim=22, seed=7)
        cfg = cr.CreditConfig(spec_id="shapley", exact=True)
        with pytest.raises(ContractError):
            cr.per_agent_advantages(batch, cfg, game, SeedTree(0))

    def test_shapley_exact_rows_sum_to_grand_minus_empty(self):
        n = 4
        model = WorldModel(8, n, rng=np.random.default_rng(15))
        critic = Critic(8, rng=np.random.default_rng(16))
        ev = cr.ModelBasedEvaluator(model, critic, 0.9, cr.zero_defaults(n, 1))
        batch = make_batch(T=6, n=n, state_dim=8, seed=8)
        cfg = cr.CreditConfig(spec_id="shapley", gamma=0.9, exact=True)
        psi = cr.per_agent_advantages(batch, cfg, ev, SeedTree(2))
        full = ev.values(batch.states, batch.actions, np.ones((6, n), dtype=bool))
        empty = ev.values(batch.states, batch.actions, np.zeros((6, n), dtype=bool))
        np.testing.assert_allclose(psi.sum(axis=1), full - empty, atol=1e-6)


class TestSharedAdvantages:
    def test_equals_gae_on_critic_values(self):
        batch = make_batch(T=32, n=4, state_dim=8, seed=9)
        critic = Critic(8, rng=np.random.default_rng(17))
        adv = cr.shared_advantages(batch, critic, gamma=0.95, lam=0.8)
        values = critic.values(batch.states)
        boot = critic.value(batch.next_states[-1])
        expected = pol.gae(batch.rewards, values, boot, batch.dones, 0.95, 0.8)
        np.testing.assert_array_equal(adv, expected)


class TestCreditReport:
    def test_csv_layout_and_round_trip(self, tmp_path):
        psi = np.array([[0.125, -3.5], [1e-17, 2.0]])
        path = tmp_path / "credit.csv"
        cr.save_credit_report(path, iteration=7, psi=psi, coalition_samples=5)
        lines = path.read_text().splitlines()
        assert lines[0] == "iteration,t,agent,psi,coalition_samples"
        assert len(lines) == 5
        it, t, agent, val, samples = lines[1].split(",")
        assert (it, t, agent, samples) == ("7", "0", "0", "5")
        assert float(val) == 0.125
        parsed = np.array([float(row.split(",")[3]) for row in lines[1:]]).reshape(2, 2)
        np.testing.assert_array_equal(parsed, psi)
