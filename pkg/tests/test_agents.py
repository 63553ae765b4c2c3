import math

import numpy as np
import pytest

from regretlab import (PSRL, FiniteHorizonMDP, FiniteSupportBelief, FixedLength, LazyPSRL,
                       Never, OptimisticRL, RewardThreshold, SmoothedPSRL, StationaryPolicy,
                       VisitCountDoubling, chain, conjugate_prior, gain, heaven_hell,
                       make_agent, optimal_gain, random_mdp, two_point_prior)
from regretlab.engine import run_agent
from regretlab.errors import ArgumentError
from regretlab.oracles import exact_heaven_hell
from regretlab.regret import decompose_finite, decompose_gain
from regretlab.signals import replay_boundaries


def rng(seed=0):
    return np.random.default_rng(seed)


class TestPSRL:
    def test_known_mdp_has_no_optimism_gap(self):
        m = chain(3)
        agent = PSRL(FiniteSupportBelief([m], [1.0]), 5, rng())
        traj, eps = run_agent(agent, m, 0, 50, rng(1))
        _, pi_star = __import__("regretlab").backward_induction(FiniteHorizonMDP(m, 5))
        assert all(ep.policy == pi_star for ep in eps)
        assert all(d_opt == 0 for d_opt, _ in decompose_finite(eps, FiniteHorizonMDP(m, 5)))

    @pytest.mark.parametrize("T", [1, 4, 9])
    def test_heaven_hell_single_episode_is_half_T(self, T):
        # one episode covering the whole run
        assert exact_heaven_hell(T, 0.5, H=T) == T / 2

    def test_episodes_have_fixed_length(self):
        agent = PSRL(conjugate_prior(3, 2), 4, rng())
        traj, eps = run_agent(agent, chain(3), 0, 30, rng(2))
        assert traj.episode_starts == tuple(range(1, 31, 4))
        assert [e.length for e in eps] == [4] * 7 + [2]

    def test_rejects_bad_horizon(self):
        with pytest.raises(ArgumentError):
            PSRL(conjugate_prior(2, 2), 0, rng())

    def test_learns_on_chain(self):
        def per_step(T, seeds):
            out = []
            for s in seeds:
                agent = PSRL(conjugate_prior(3, 2), 5, rng(s))
                traj, _ = run_agent(agent, chain(3), 0, T, rng(s + 1000))
                out.append(traj.rewards.mean())
            return np.mean(out)
        seeds = range(20)
        assert per_step(3000, seeds) > per_step(300, seeds)


class TestLazyPSRL:
    @pytest.mark.parametrize("R,length", [(1, 1), (0, 1000)])
    def test_reward_threshold_first_episode(self, R, length):
        b = two_point_prior(0.5)
        agent = LazyPSRL(b, RewardThreshold(1, 1000), rng())
        _, eps = run_agent(agent, b.atoms[R], 0, 1500, rng(1))
        assert eps[0].length == length

    def test_never_means_one_episode(self):
        agent = LazyPSRL(conjugate_prior(3, 2), Never(), rng())
        traj, eps = run_agent(agent, chain(3), 0, 200, rng(1))
        assert len(eps) == 1 and traj.n_episodes == 1

    def test_fixed_length_matches_psrl_draws(self):
        b = FiniteSupportBelief([chain(3, small=x) for x in (0.05, 0.5, 0.95)], [0.2, 0.3, 0.5])
        lazy = LazyPSRL(b, FixedLength(4), rng(7))
        psrl = PSRL(b, 4, rng(7))
        truth = b.atoms[2]
        t1, e1 = run_agent(lazy, truth, 0, 40, rng(8))
        t2, e2 = run_agent(psrl, truth, 0, 40, rng(8))
        assert t1.episode_starts == t2.episode_starts
        assert [e.atom for e in e1][:1] == [e.atom for e in e2][:1]

    def test_logged_gain_is_planned_gain(self):
        agent = LazyPSRL(conjugate_prior(3, 2), VisitCountDoubling(), rng(3))
        _, eps = run_agent(agent, chain(3), 0, 300, rng(4))
        for ep in eps:
            assert ep.sampled_gain == optimal_gain(ep.sampled).gain[ep.start_state]


class TestOptimisticRL:
    def test_beats_uniform_random(self):
        m, T = chain(3), 10_000
        lam = optimal_gain(m).gain[0]
        agent = OptimisticRL(3, 2, rng())
        traj, eps = run_agent(agent, m, 0, T, rng(1))
        ofu_regret = T * lam - traj.rewards.sum()
        uniform_gain = np.mean([gain(m, StationaryPolicy(np.array(p)))[0]
                                for p in np.ndindex(2, 2, 2)])
        r = rng(2)
        s, total = 0, 0.0
        for _ in range(T):
            rew, s = m.dynamics.step(s, int(r.integers(2)), r)
            total += rew
        random_regret = T * lam - total
        assert ofu_regret * 2 <= random_regret
        assert uniform_gain < lam

    def test_episode_count_is_logarithmic(self):
        S, A, T = 3, 2, 10_000
        agent = OptimisticRL(S, A, rng())
        traj, eps = run_agent(agent, chain(3), 0, T, rng(1))
        assert len(eps) <= S * A * math.log2(T) + S * A

    def test_first_plan_is_fully_optimistic(self):
        agent = OptimisticRL(3, 2, rng())
        agent.act(0)
        assert abs(agent.episodes[0].sampled_gain - 1.0) < 1e-6

    def test_rejects_bad_delta(self):
        with pytest.raises(ArgumentError):
            OptimisticRL(3, 2, rng(), delta=1.5)


class TestSmoothedPSRL:
    def test_point_mass_stays_on_truth(self):
        m = chain(3)
        agent = SmoothedPSRL(FiniteSupportBelief([m], [1.0]), 0.9, rng())
        _, eps = run_agent(agent, m, 0, 30, rng(1))
        for ep in eps:
            assert np.array_equal(ep.sampled.transitions, m.transitions)
            assert np.array_equal(ep.sampled.reward_mean, m.reward_mean)

    @pytest.mark.parametrize("gamma", [0.5, 0.99])
    def test_rows_move_slowly_and_stay_stochastic(self, gamma):
        agent = SmoothedPSRL(conjugate_prior(3, 2), gamma, rng())
        _, eps = run_agent(agent, chain(3), 0, 200, rng(1))
        for prev, cur in zip(eps, eps[1:]):
            P, Q = prev.sampled.transitions, cur.sampled.transitions
            assert np.all(Q >= 0) and np.allclose(Q.sum(axis=2), 1.0, atol=1e-12)
            assert np.abs(Q - P).sum(axis=2).max() <= 2 * (1 - gamma) + 1e-12

    def test_rejects_bad_gamma(self):
        with pytest.raises(ArgumentError):
            SmoothedPSRL(conjugate_prior(2, 2), 1.0, rng())


SPECS = [{"agent": "psrl", "H": 3}, {"agent": "lazy_psrl"},
         {"agent": "lazy_psrl", "signal": {"kind": "reward_threshold", "threshold": 2, "h_max": 9}},
         {"agent": "ofu"}, {"agent": "smoothed_psrl", "gamma": 0.8}]


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s["agent"] + str(len(s)))
def test_boundaries_replay_from_own_statistics(spec):
    m = random_mdp(3, 2, seed=6)
    agent = make_agent(spec, conjugate_prior(3, 2), 3, 2, rng())
    traj, _ = run_agent(agent, m, 0, 400, rng(1))
    assert replay_boundaries(traj, agent.signal, 3, 2) == traj.episode_starts


@pytest.mark.parametrize("spec", SPECS, ids=lambda s: s["agent"] + str(len(s)))
def test_deterministic_given_seed(spec):
    def once():
        agent = make_agent(spec, conjugate_prior(3, 2), 3, 2, rng(5))
        return run_agent(agent, chain(3), 0, 150, rng(6))[0]
    a, b = once(), once()
    assert np.array_equal(a.actions, b.actions) and a.episode_starts == b.episode_starts


def test_decomposition_identity_gain_form():
    m = chain(3)
    agent = LazyPSRL(conjugate_prior(3, 2), VisitCountDoubling(), rng(9))
    _, eps = run_agent(agent, m, 0, 500, rng(10))
    lam = optimal_gain(m).gain[0]
    for ep, (d_opt, d_conc) in zip(eps, decompose_gain(eps, m)):
        true_gain = gain(m, ep.policy)[ep.start_state]
        assert abs(d_opt + d_conc - ep.length * (lam - true_gain)) < 1e-9


def test_unknown_agent():
    with pytest.raises(ArgumentError):
        make_agent({"agent": "q_learning"}, None, 2, 2, rng())
