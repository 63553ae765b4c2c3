"""Regret accounting and the optimism / concentration decomposition."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np

from .errors import ArgumentError, ContractError
from .mdp import FiniteHorizonMDP, StationaryPolicy, TabularMDP, TimePolicy, Trajectory
from .planner import backward_induction, gain, optimal_gain, policy_value_finite


@dataclass
class EpisodeRecord:
    k: int
    start: int
    length: int
    delta_opt: Optional[float] = None
    delta_conc: Optional[float] = None

    @property
    def delta(self) -> Optional[float]:
        if self.delta_opt is None:
            return None
        return self.delta_opt + self.delta_conc


@dataclass
class RegretReport:
    cumulative: np.ndarray
    lambda_star: float
    episodes: list = field(default_factory=list)
    seed: Optional[int] = None

    @property
    def T(self) -> int:
        return len(self.cumulative)

    @property
    def final(self) -> float:
        return float(self.cumulative[-1])

    def optimism_sum(self) -> float:
        return sum_in_order(e.delta_opt for e in self.episodes)

    def concentration_sum(self) -> float:
        return sum_in_order(e.delta_conc for e in self.episodes)


def sum_in_order(values) -> float:
    total = 0.0
    for v in values:
        total += v
    return total


def regret_curve(traj: Trajectory, lambda_star: float, decomposition: Optional[Sequence] = None,
                 seed: Optional[int] = None) -> RegretReport:
    """Cumulative sums of ``lambda_star - r_t`` plus one record per annotated episode."""
    if not 0.0 <= lambda_star <= 1.0:
        raise ArgumentError("lambda_star must lie in [0, 1]")
    cumulative = np.cumsum(lambda_star - np.asarray(traj.rewards, dtype=float))
    lengths = traj.episode_lengths.tolist()
    records = [EpisodeRecord(k, start, length)
               for k, (start, length) in enumerate(zip(traj.episode_starts, lengths), start=1)]
    if decomposition is not None:
        if len(decomposition) != len(records):
            raise ArgumentError("one (delta_opt, delta_conc) pair is needed per episode")
        for rec, (d_opt, d_conc) in zip(records, decomposition):
            rec.delta_opt, rec.delta_conc = d_opt, d_conc
    return RegretReport(cumulative, lambda_star, records, seed)


def decompose_finite(episodes: Sequence, true_mdp: FiniteHorizonMDP) -> list[tuple[float, float]]:
    """Per-episode (optimism, concentration) split of the value shortfall.

    Optimism is V*(s_k1) under the true MDP minus the sampled MDP's value of
    its own policy; concentration is that sampled value minus the true value
    of the followed policy. Both are evaluated at the episode's start state.
    """
    optimal, _ = backward_induction(true_mdp)
    H = true_mdp.horizon
    out = []
    for ep in episodes:
        if ep.sampled is None or not isinstance(ep.policy, TimePolicy):
            raise ContractError(f"episode {ep.k} has no logged sampled MDP and time policy")
        s = ep.start_state
        imagined = policy_value_finite(FiniteHorizonMDP(ep.sampled, H), ep.policy).V(1)[s]
        actual = policy_value_finite(FiniteHorizonMDP(true_mdp.base, H), ep.policy).V(1)[s]
        out.append((float(optimal.V(1)[s] - imagined), float(imagined - actual)))
    return out


def decompose_gain(episodes: Sequence, true_mdp: TabularMDP, start_state: Optional[int] = None,
                   lambda_star: Optional[float] = None) -> list[tuple[float, float]]:
    """Length-weighted gain decomposition ``L_k (l** - l_k^k)`` and ``L_k (l_k^k - l_k^*)``.

    ``l_k^k`` is the logged gain of the episode's plan (the sampled or
    optimistic MDP), ``l_k^*`` the true gain of the followed policy from the
    episode's start state, and ``l**`` the true optimal gain from the run's
    start state.
    """
    if not episodes:
        return []
    if lambda_star is None:
        s1 = episodes[0].start_state if start_state is None else start_state
        lambda_star = optimal_gain(true_mdp).gain[s1]
    cache = {}
    out = []
    for ep in episodes:
        if not isinstance(ep.policy, StationaryPolicy):
            raise ContractError(f"episode {ep.k} has no logged stationary policy")
        lam_k = ep.sampled_gain
        if lam_k is None:
            if ep.sampled is None:
                raise ContractError(f"episode {ep.k} has neither a logged gain nor a sampled MDP")
            lam_k = optimal_gain(ep.sampled).gain[ep.start_state]
        key = ep.policy
        if key not in cache:
            cache[key] = gain(true_mdp, ep.policy)
        lam_true = cache[key][ep.start_state]
        L = ep.length
        out.append((L * (lambda_star - lam_k), L * (lam_k - lam_true)))
    return out
