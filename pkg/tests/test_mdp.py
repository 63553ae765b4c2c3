import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from regretlab import (ArgumentError, ContractError, FiniteHorizonMDP, StationaryPolicy,
                       TabularMDP, TimePolicy, Trajectory, chain, classify, heaven_hell,
                       random_mdp, simulate, step, two_point_bandit)
from regretlab.envs import build_named_env
from regretlab.mdp import Bernoulli, PointMass, end_components, is_weakly_communicating


def single_state(reward=1.0, kind="point"):
    return TabularMDP(np.ones((1, 1, 1)), np.array([[reward]]), kind == "bernoulli")


class TestTabularMDP:
    def test_rejects_bad_rows(self):
        P = np.array([[[0.5, 0.4]], [[1.0, 0.0]]])
        with pytest.raises(ArgumentError):
            TabularMDP(P, np.zeros((2, 1)), False)

    def test_rejects_negative_probability(self):
        P = np.array([[[1.5, -0.5]], [[1.0, 0.0]]])
        with pytest.raises(ArgumentError):
            TabularMDP(P, np.zeros((2, 1)), False)

    def test_rejects_reward_outside_unit_interval(self):
        with pytest.raises(ArgumentError):
            TabularMDP(np.ones((1, 1, 1)), np.array([[1.5]]), False)

    def test_arrays_are_read_only(self):
        m = chain(3)
        with pytest.raises(ValueError):
            m.transitions[0, 0, 0] = 0.5

    def test_reward_models(self):
        assert Bernoulli(0.3).mean == 0.3
        assert PointMass(0.7).mean == 0.7
        assert PointMass(0.7).deterministic and not Bernoulli(0.3).deterministic
        with pytest.raises(ArgumentError):
            Bernoulli(1.2)

    def test_finite_horizon_defaults_to_uniform_start(self):
        fh = FiniteHorizonMDP(chain(3), 4)
        assert np.allclose(fh.initial_dist, 1 / 3)
        with pytest.raises(ArgumentError):
            FiniteHorizonMDP(chain(3), 0)
        with pytest.raises(ArgumentError):
            FiniteHorizonMDP(chain(3), 2, np.array([0.5, 0.6, 0.0]))


class TestStep:
    def test_point_mass_single_state(self, rng):
        m = single_state(1.0)
        assert all(step(m, 0, 0, rng) == (1.0, 0) for _ in range(20))

    def test_heaven_hell_first_move(self, rng):
        m = heaven_hell(1)
        assert all(step(m, 0, 0, rng)[1] == 1 for _ in range(50))
        assert all(step(m, 0, 1, rng)[1] == 2 for _ in range(50))

    def test_bernoulli_reward_mean(self):
        m = single_state(0.3, "bernoulli")
        rng = np.random.default_rng(7)
        draws = [step(m, 0, 0, rng)[0] for _ in range(100_000)]
        assert set(draws) <= {0.0, 1.0}
        assert abs(np.mean(draws) - 0.3) < 0.01

    def test_out_of_range(self, rng):
        with pytest.raises(ArgumentError):
            step(chain(3), 3, 0, rng)
        with pytest.raises(ArgumentError):
            step(chain(3), 0, 2, rng)

    def test_empirical_transitions_match_rows(self):
        m = random_mdp(3, 2, seed=4)
        rng = np.random.default_rng(0)
        counts = np.zeros(3)
        for _ in range(100_000):
            counts[step(m, 1, 0, rng)[1]] += 1
        assert np.max(np.abs(counts / counts.sum() - m.transitions[1, 0])) < 0.01


class TestSimulate:
    def test_heaven_arm_pays_every_step(self, rng):
        tr = simulate(heaven_hell(1), StationaryPolicy(np.array([0, 0, 0])), 0, 3, rng)
        assert tr.rewards.tolist() == [1.0, 1.0, 1.0]
        assert tr.states.tolist() == [0, 1, 1]

    def test_single_step(self, rng):
        tr = simulate(chain(3), StationaryPolicy(np.array([1, 1, 1])), 0, 1, rng)
        assert tr.T == 1 and tr.episode_starts == (1,)

    def test_zero_reward_mdp(self, rng):
        tr = simulate(single_state(0.0), StationaryPolicy(np.array([0])), 0, 50, rng)
        assert tr.rewards.sum() == 0

    def test_same_seed_is_bit_identical(self):
        m, pol = random_mdp(4, 2, seed=3), StationaryPolicy(np.array([0, 1, 1, 0]))
        a = simulate(m, pol, 0, 500, np.random.default_rng(9))
        b = simulate(m, pol, 0, 500, np.random.default_rng(9))
        for f in ("states", "actions", "rewards", "next_states"):
            assert np.array_equal(getattr(a, f), getattr(b, f))

    def test_steps_chain(self, rng):
        tr = simulate(chain(3), StationaryPolicy(np.array([1, 0, 1])), 2, 200, rng)
        assert np.array_equal(tr.states[1:], tr.next_states[:-1])

    def test_finite_horizon_resets(self):
        fh = heaven_hell(1, horizon=4)
        pol = TimePolicy(np.zeros((4, 3), dtype=np.int64))
        tr = simulate(fh, pol, None, 12, np.random.default_rng(0))
        assert tr.episode_starts == (1, 5, 9)
        assert tr.states[[0, 4, 8]].tolist() == [0, 0, 0]
        assert tr.rewards.tolist() == [1.0] * 12

    def test_time_policy_needs_horizon(self, rng):
        with pytest.raises(ContractError):
            simulate(chain(3), TimePolicy(np.zeros((2, 3), dtype=np.int64)), 0, 4, rng)


class TestTrajectory:
    def test_episode_bookkeeping(self):
        tr = Trajectory(0, np.zeros(6, int), np.zeros(6, int), np.ones(6), np.zeros(6, int), (1, 3, 6))
        assert tr.n_episodes == 3
        assert tr.episode_lengths.tolist() == [2, 3, 1]
        assert tr.episode_index.tolist() == [1, 1, 2, 2, 2, 3]

    def test_starts_must_begin_at_one(self):
        with pytest.raises(ArgumentError):
            Trajectory(0, np.zeros(3, int), np.zeros(3, int), np.ones(3), np.zeros(3, int), (2,))


class TestClassify:
    def test_heaven_hell(self):
        rep = classify(heaven_hell(1))
        assert not rep.communicating and not rep.weakly_communicating
        assert not rep.unichain and not rep.ergodic
        assert rep.witness and rep.method == "exhaustive"

    def test_single_state_all_true(self):
        assert all(classify(single_state()).flags.values())

    def test_uniform_two_state_is_ergodic(self):
        m = TabularMDP(np.full((2, 2, 2), 0.5), np.zeros((2, 2)), False)
        assert classify(m).ergodic

    def test_chain_communicating(self):
        rep = classify(chain(3))
        assert rep.communicating and rep.weakly_communicating

    def test_two_point_bandit_gain(self):
        from regretlab import gain
        assert gain(two_point_bandit(1), StationaryPolicy(np.array([0])))[0] == 1.0
        assert gain(two_point_bandit(0), StationaryPolicy(np.array([0])))[0] == 0.0

    def test_weakly_communicating_with_transient_state(self):
        # state 2 only leaves; states 0, 1 communicate
        P = np.zeros((3, 1, 3))
        P[0, 0, 1] = P[1, 0, 0] = P[2, 0, 0] = 1.0
        m = TabularMDP(P, np.zeros((3, 1)), False)
        rep = classify(m)
        assert rep.weakly_communicating and not rep.communicating and rep.unichain

    def test_end_components(self):
        ecs = end_components(heaven_hell(1))
        assert sorted(map(sorted, ecs)) == [[1], [2]]

    def test_capped_report(self):
        m = random_mdp(8, 2, seed=0, support=2)
        rep = classify(m, policy_cap=100)
        assert rep.method == "capped"

    @settings(max_examples=60, deadline=None)
    @given(S=st.integers(1, 5), A=st.integers(1, 3), seed=st.integers(0, 10**6),
           support=st.integers(1, 3))
    def test_implication_chain(self, S, A, seed, support):
        rep = classify(random_mdp(S, A, seed=seed, support=support))
        if rep.ergodic:
            assert rep.unichain and rep.communicating
        if rep.communicating:
            assert rep.weakly_communicating
        assert rep.weakly_communicating == is_weakly_communicating(random_mdp(S, A, seed=seed, support=support))


class TestBuilders:
    @pytest.mark.parametrize("name,params", [("heaven_hell", {}), ("two_point_bandit", {"R": 0}),
                                             ("chain", {"n": 5}), ("random", {"S": 4, "A": 3})])
    def test_rows_sum_to_one(self, name, params):
        m = build_named_env(name, params)
        assert np.all(np.abs(m.transitions.sum(axis=2) - 1) <= 1e-12)

    def test_unknown_name(self):
        with pytest.raises(ArgumentError):
            build_named_env("gridworld")

    def test_heaven_hell_is_not_communicating(self):
        assert not classify(build_named_env("heaven_hell", {"heaven": 2})).communicating

    @settings(max_examples=40, deadline=None)
    @given(S=st.integers(1, 6), A=st.integers(1, 3), seed=st.integers(0, 10**6),
           conc=st.floats(0.05, 5.0))
    def test_random_rows_are_distributions(self, S, A, seed, conc):
        m = random_mdp(S, A, seed=seed, concentration=conc)
        assert np.all(m.transitions >= 0)
        assert np.all(np.abs(m.transitions.sum(axis=2) - 1) <= 1e-12)
