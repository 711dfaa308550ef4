"""Environment contracts: seeding, clamping, obs layout, and dynamics."""

import numpy as np
import pytest

from semicredit import envs
from semicredit.errors import ContractError


ALL_IDS = ["chain4", "chain6", "additive", "linear"]


@pytest.mark.parametrize("env_id", ALL_IDS)
class TestCommonContract:
    def test_observations_concatenate_to_state(self, env_id):
        env = envs.make_env(env_id)
        state, obs = env.reset(seed=3)
        assert [o.size for o in obs] == list(env.spec.obs_dims)
        np.testing.assert_array_equal(np.concatenate(obs), state)
        rng = np.random.default_rng(0)
        for _ in range(5):
            a = rng.uniform(-1, 1, size=(env.spec.n_agents, env.spec.action_dim))
            res = env.step(a)
            np.testing.assert_array_equal(np.concatenate(res.observations), res.state)
            if res.done:
                env.reset(seed=4)

    def test_reset_and_rollout_deterministic(self, env_id):
        def rollout():
            env = envs.make_env(env_id)
            state, _ = env.reset(seed=11)
            rng = np.random.default_rng(5)
            trace = [state]
            rewards = []
            for _ in range(7):
                res = env.step(rng.uniform(-1, 1, size=(env.spec.n_agents, env.spec.action_dim)))
                trace.append(res.state)
                rewards.append(res.reward)
                if res.done:
                    env.reset(seed=12)
            return np.concatenate(trace), np.array(rewards)

        t1, r1 = rollout()
        t2, r2 = rollout()
        np.testing.assert_array_equal(t1, t2)
        np.testing.assert_array_equal(r1, r2)

    def test_out_of_range_actions_clamp(self, env_id):
        env = envs.make_env(env_id)
        env.reset(seed=1)
        big = np.full((env.spec.n_agents, env.spec.action_dim), 7.5)
        res_big = env.step(big)
        env.reset(seed=1)
        res_one = env.step(np.ones_like(big))
        np.testing.assert_array_equal(res_big.state, res_one.state)
        assert res_big.reward == res_one.reward

    def test_nan_action_rejected(self, env_id):
        env = envs.make_env(env_id)
        env.reset(seed=1)
        bad = np.zeros((env.spec.n_agents, env.spec.action_dim))
        bad[0, 0] = np.nan
        with pytest.raises(ContractError):
            env.step(bad)

    def test_wrong_shape_rejected(self, env_id):
        env = envs.make_env(env_id)
        env.reset(seed=1)
        with pytest.raises(ContractError):
            env.step(np.zeros(env.spec.n_agents + 1))


class TestChainWorld:
    def test_rest_is_a_fixed_point(self):
        env = envs.ChainWorld(4)
        env.reset(seed=0)
        env._theta[:] = 0.0  # exact rest, bypassing the randomized reset
        state_before = env._state()
        zero_cost = envs.ChainWorld(4, action_cost=0.0)
        zero_cost.reset(seed=0)
        zero_cost._theta[:] = 0.0
        res = zero_cost.step(np.zeros((4, 1)))
        assert res.reward == 0.0
        np.testing.assert_allclose(res.state, state_before, atol=1e-12)

    def test_zero_torque_energy_decays(self):
        env = envs.ChainWorld(4)
        env.reset(seed=7)
        env._theta = np.array([0.8, -0.6, 0.5, -0.9])
        env._omega = np.array([1.0, -1.0, 0.5, 0.0])

        def energy():
            spring = 0.5 * env.SPRING * np.sum(env._theta**2)
            couple = 0.5 * env.COUPLING * np.sum(np.diff(env._theta) ** 2)
            kinetic = 0.5 * env.JOINT_INERTIA * np.sum(env._omega**2)
            body = 0.5 * env.LINK_MASS * env.n_links * env._v**2
            return spring + couple + kinetic + body

        start = energy()
        for _ in range(400):
            env.step(np.zeros((4, 1)))
        assert energy() < 1e-3 * start

    def test_reward_is_velocity_minus_action_cost(self):
        env = envs.ChainWorld(4, action_cost=0.05)
        env.reset(seed=3)
        a = np.full((4, 1), 0.5)
        res = env.step(a)
        expected = res.state[1] - 0.05 * np.sum(a**2)
        assert res.reward == pytest.approx(expected, abs=1e-12)

    def test_horizon_terminates(self):
        env = envs.ChainWorld(4, horizon=5)
        env.reset(seed=0)
        for k in range(5):
            res = env.step(np.zeros((4, 1)))
        assert res.done

    def test_paddling_moves_the_chain_forward(self):
        """An asymmetric stroke cycle produces sustained positive displacement."""
        env = envs.ChainWorld(4)
        env.reset(seed=1)
        displacement = 0.0
        for t in range(200):
            phase = t % 10
            a = np.full((4, 1), 1.0 if phase < 3 else -0.35)
            res = env.step(a)
        assert res.info["displacement"] > 1.0

    def test_states_stay_bounded_under_extreme_torques(self):
        env = envs.ChainWorld(6)
        env.reset(seed=2)
        rng = np.random.default_rng(0)
        for t in range(400):
            a = np.sign(rng.normal(size=(6, 1)))
            res = env.step(a)
            if res.done:
                env.reset(seed=3)
        assert np.all(np.abs(env._omega) < 50)
        assert abs(env._v) < 50


class TestAdditiveTeam:
    def test_reward_closed_form(self):
        env = envs.AdditiveTeam(weights=[1.0, 2.0, 3.0, 4.0], targets=[0.5] * 4)
        env.reset(seed=0)
        a = np.array([[0.5], [0.0], [1.0], [-1.0]])
        res = env.step(a)
        expected = 1.0 * 1.0 + 2.0 * (1 - 0.25) + 3.0 * (1 - 0.25) + 4.0 * (1 - 2.25)
        assert res.reward == pytest.approx(expected, abs=1e-12)
        assert res.done

    def test_optimum_at_targets(self):
        env = envs.AdditiveTeam(weights=[1.0, 2.0], targets=[0.3, -0.4])
        env.reset(seed=0)
        res = env.step(np.array([[0.3], [-0.4]]))
        assert res.reward == pytest.approx(3.0, abs=1e-12)

    def test_episodes_are_single_step(self):
        env = envs.make_env("additive")
        env.reset(seed=0)
        assert env.step(np.zeros((4, 1))).done


class TestLinearTeam:
    def test_transition_matches_matrices(self):
        env = envs.LinearTeam()
        s0, _ = env.reset(seed=0)
        a = np.array([[0.2], [-0.7], [0.4]])
        res = env.step(a)
        expected = env.A @ s0 + env.B @ a[:, 0]
        np.testing.assert_allclose(res.state, expected, atol=1e-12)
        expected_r = -expected @ expected - 0.1 * float(a[:, 0] @ a[:, 0])
        assert res.reward == pytest.approx(expected_r, abs=1e-12)

    def test_fixed_initial_state(self):
        env = envs.LinearTeam()
        s_a, _ = env.reset(seed=1)
        s_b, _ = env.reset(seed=999)
        np.testing.assert_array_equal(s_a, s_b)

    def test_spectral_radius_below_one(self):
        env = envs.LinearTeam()
        eigs = np.abs(np.linalg.eigvals(env.A))
        assert np.all(eigs < 1.0)


def test_unknown_env_id():
    with pytest.raises(ContractError):
        envs.make_env("gridworld")
