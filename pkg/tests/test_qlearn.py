import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from swarmlink.qlearn import (
    ExplicitMdp,
    LearnAction,
    LearnState,
    QTable,
    RewardWeights,
    bellman_residual,
    effective_action,
    q_update,
    rate_energy_mdp,
    reward,
    select_action,
    value_iteration_oracle,
)
from swarmlink.world import RngStream


class TestQUpdate:
    def test_alpha_zero_is_fixpoint(self):
        q = QTable(2, 2, alpha=0.5, gamma=0.9)
        q.values[:] = 1.23
        before = q.values.copy()
        q_update(q, LearnState(0, 0), LearnAction.HOLD, 5.0, LearnState(1, 1), alpha=0.0)
        assert np.array_equal(q.values, before)

    def test_alpha_one_gamma_zero_is_pure_reward(self):
        q = QTable(2, 2, alpha=1.0, gamma=0.0)
        q_update(q, LearnState(0, 0), LearnAction.RATE_UP, 5.0, LearnState(1, 1))
        assert q.q(LearnState(0, 0), LearnAction.RATE_UP) == 5.0

    def test_hand_evaluated_update(self):
        # q=1, max next=2, r=0, alpha=0.5, gamma=0.9 -> 0.5*1 + 0.5*1.8 = 1.4
        q = QTable(2, 2, alpha=0.5, gamma=0.9)
        s, a = LearnState(0, 0), LearnAction.HOLD
        q.values[0, 0, a] = 1.0
        q.values[1, 1, :] = [2.0, 0.0, 1.0]
        q_update(q, s, a, 0.0, LearnState(1, 1))
        assert q.q(s, a) == pytest.approx(1.4)

    def test_touches_exactly_one_cell(self):
        q = QTable(3, 3, alpha=0.7, gamma=0.5)
        q.values[:] = np.arange(27).reshape(3, 3, 3)
        before = q.values.copy()
        q_update(q, LearnState(1, 2), LearnAction.RATE_DOWN, 3.0, LearnState(0, 0))
        diff = q.values != before
        assert diff.sum() == 1
        assert diff[1, 2, LearnAction.RATE_DOWN]

    @given(
        st.integers(0, 2), st.integers(0, 2), st.sampled_from(list(LearnAction)),
        st.floats(-5, 5), st.integers(0, 2), st.integers(0, 2),
    )
    @settings(max_examples=100, deadline=None)
    def test_bounded_by_geometric_series(self, rb, eb, a, r, rb2, eb2):
        r_max = 5.0
        q = QTable(3, 3, alpha=1.0, gamma=0.9)
        for _ in range(50):
            q_update(q, LearnState(rb, eb), a, r, LearnState(rb2, eb2))
        assert np.all(np.abs(q.values) <= r_max / (1 - 0.9) + 1e-9)


class TestSelectAction:
    def test_greedy_when_epsilon_zero(self):
        q = QTable(2, 2, epsilon=0.0)
        q.values[0, 0] = [0.0, 3.0, 1.0]
        rng = RngStream(1, "a")
        assert all(select_action(q, LearnState(0, 0), rng) is LearnAction.RATE_DOWN
                   for _ in range(20))

    def test_all_equal_tie_breaks_lowest_index(self):
        q = QTable(2, 2, epsilon=0.0)
        assert select_action(q, LearnState(0, 0), RngStream(1, "a")) is LearnAction.RATE_UP

    def test_epsilon_one_uniform_within_3_sigma(self):
        q = QTable(2, 2, epsilon=1.0)
        rng = RngStream(5, "uniform")
        n = 10_000
        counts = np.zeros(3)
        for _ in range(n):
            counts[select_action(q, LearnState(0, 0), rng)] += 1
        p = 1 / 3
        sigma = np.sqrt(n * p * (1 - p))
        assert np.all(np.abs(counts - n * p) < 3 * sigma)


class TestReward:
    def test_zero_inputs(self):
        assert reward(0, 0, 0.0) == 0.0

    def test_weighted_sum(self):
        assert reward(10, 2, 5.0) == pytest.approx(10 - 2 - 0.5)

    def test_symmetry(self):
        assert reward(7, 7, 0.0, RewardWeights(1.0, 1.0, 0.1)) == 0.0

    def test_negative_counts_rejected(self):
        with pytest.raises(ValueError):
            reward(-1, 0, 0.0)


class TestValueIterationOracle:
    def test_single_state_geometric_series(self):
        mdp = ExplicitMdp(1, 1, np.zeros((1, 1), dtype=np.int64),
                          np.ones((1, 1)), gamma=0.5)
        q = value_iteration_oracle(mdp)
        assert q[0, 0] == pytest.approx(2.0, abs=1e-9)

    def test_gamma_zero_is_immediate_reward(self):
        mdp = rate_energy_mdp(3, 3, gamma=0.0)
        q = value_iteration_oracle(mdp)
        assert np.allclose(q, mdp.rewards)

    def test_fixed_point_residual(self):
        mdp = rate_energy_mdp(3, 3, gamma=0.5)
        q = value_iteration_oracle(mdp)
        assert bellman_residual(mdp, q) < 1e-10

    def test_contraction_is_monotone(self):
        mdp = rate_energy_mdp(3, 3, gamma=0.5)
        q = np.zeros((mdp.n_states, mdp.n_actions))
        residuals = []
        for _ in range(40):
            q_new = mdp.rewards + mdp.gamma * q.max(axis=1)[mdp.next_state]
            residuals.append(np.abs(q_new - q).max())
            q = q_new
        for prev, cur in zip(residuals, residuals[1:]):
            assert cur <= mdp.gamma * prev + 1e-12

    def test_large_mdp_rejected(self):
        with pytest.raises(ValueError):
            ExplicitMdp(31, 2, np.zeros((31, 2), dtype=np.int64),
                        np.zeros((31, 2)), gamma=0.5)


class TestConvergenceToOracle:
    def test_greedy_policy_matches_oracle(self):
        # 1/visit-count learning rate, epsilon 0.2, deterministic 3x3 MDP:
        # the learned greedy policy must agree with value iteration within
        # 50k steps (argmax compared modulo the boundary-action equivalence)
        mdp = rate_energy_mdp(3, 3, gamma=0.5)
        q_star = value_iteration_oracle(mdp)
        assert bellman_residual(mdp, q_star) < 1e-10
        for seed in range(3):
            q = QTable(3, 3, alpha=1.0, gamma=0.5, epsilon=0.2)
            rng = RngStream(seed, "qlearn-test")
            s = 0
            for _ in range(50_000):
                st_ = LearnState(s // 3, s % 3)
                a = select_action(q, st_, rng)
                s2 = int(mdp.next_state[s, a])
                n = q.visits[st_.rate_bucket, st_.energy_bucket, a]
                q_update(q, st_, a, float(mdp.rewards[s, a]),
                         LearnState(s2 // 3, s2 % 3), alpha=1.0 / (n + 1))
                s = s2
            for s_i in range(9):
                rb, eb = divmod(s_i, 3)
                learned = effective_action(
                    LearnAction(int(np.argmax(q.values[rb, eb]))), rb, 3)
                oracle = effective_action(
                    LearnAction(int(np.argmax(q_star[s_i]))), rb, 3)
                assert learned == oracle, (seed, s_i)


class TestEffectiveAction:
    def test_boundaries_act_as_hold(self):
        assert effective_action(LearnAction.RATE_UP, 2, 3) is LearnAction.HOLD
        assert effective_action(LearnAction.RATE_DOWN, 0, 3) is LearnAction.HOLD
        assert effective_action(LearnAction.RATE_UP, 1, 3) is LearnAction.RATE_UP

    def test_parameter_validation(self):
        with pytest.raises(ValueError):
            QTable(2, 2, alpha=0.0)
        with pytest.raises(ValueError):
            QTable(2, 2, gamma=1.0)
        with pytest.raises(ValueError):
            QTable(2, 2, epsilon=1.5)
