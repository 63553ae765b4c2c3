"""Exact enumeration oracles and the stratified posterior-sampling check.

The enumerator walks every reachable (truth, surviving hypotheses, current
sample, state, episode statistics) configuration with rational weights,
merging identical configurations at each step. It is exact whenever the
truth and every hypothesis are deterministic.
"""
from __future__ import annotations

import math
from collections import defaultdict
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np
from scipy import stats

from .belief import FiniteSupportBelief, heaven_hell_prior, two_point_prior
from .engine import Problem, iter_outcomes, optimal_average
from .errors import ArgumentError, InsufficientDataError
from .mdp import FiniteHorizonMDP, TabularMDP
from .planner import _backward, optimal_gain
from .regret import decompose_finite
from .signals import EpisodeSignal, EpisodeTracker, FixedLength, RewardThreshold

MIN_STRATUM = 30
QUANTILE_BINS = 10


def _q(x) -> Fraction:
    return x if isinstance(x, Fraction) else Fraction(x)


@dataclass(frozen=True)
class ExactSums:
    """Expected totals over the first T steps."""

    optimism_gap: Fraction      # sum_t E[lambda** - lambda_k(t)]
    regret: Fraction            # sum_t E[lambda** - r_t]


def exact_sums(prior: FiniteSupportBelief, signal: EpisodeSignal, T: int,
               timed_horizon: Optional[int] = None, s1: int = 0,
               weights: Optional[Sequence] = None) -> ExactSums:
    """Exact expectations for posterior sampling over a deterministic finite prior.

    With ``timed_horizon`` the agent follows the sample's H-step time policy
    (and ``signal`` should be FixedLength(H)); otherwise it follows the
    sample's gain-optimal stationary policy. ``weights`` overrides the prior
    weights with exact rationals.
    """
    if T < 1:
        raise ArgumentError("T must be at least 1")
    if not prior.deterministic:
        raise ArgumentError("exact enumeration needs deterministic hypotheses")
    atoms = prior.atoms
    m = len(atoms)
    w = [_q(x) for x in (prior.prior if weights is None else weights)]
    if sum(w) != 1:
        raise ArgumentError("weights must sum to 1")
    S, A = prior.n_states, prior.n_actions
    nxt = [np.argmax(a.transitions == 1.0, axis=2).tolist() for a in atoms]
    rew = [[[_q(float(r)) for r in row] for row in a.reward_mean.tolist()] for a in atoms]
    lam_star = [_q(optimal_average(a, s1)) for a in atoms]
    if timed_horizon is None:
        plans = [optimal_gain(a) for a in atoms]
        policy = [p.policy.actions.tolist() for p in plans]
        lam_plan = [[_q(float(g)) for g in p.gain.gain] for p in plans]
    else:
        plans = [_backward(a.transitions, a.reward_mean, timed_horizon) for a in atoms]
        policy = [p[2].tolist() for p in plans]
        lam_plan = [[_q(float(x)) / timed_horizon for x in p[1][0]] for p in plans]
    doubling = signal.kind == "visit_count_doubling"

    # node: (truth, live mask, sample or -1, state, elapsed, episode reward, visits) -> weight
    full = tuple(w[i] > 0 for i in range(m))
    nodes = {(e, full, -1, s1, 0, Fraction(0), None, Fraction(0)): w[e] for e in range(m) if w[e] > 0}
    gap = Fraction(0)
    regret = Fraction(0)
    tracker = EpisodeTracker(S, A)
    for _ in range(T):
        drawn = defaultdict(Fraction)
        for (e, live, b, s, el, er, vis, lk), pr in nodes.items():
            if b >= 0:
                drawn[(e, live, b, s, el, er, vis, lk)] += pr
                continue
            total = sum(w[i] for i in range(m) if live[i])
            for i in range(m):
                if live[i]:
                    drawn[(e, live, i, s, 0, Fraction(0), vis, lam_plan[i][s])] += pr * w[i] / total
        nodes = defaultdict(Fraction)
        for (e, live, b, s, el, er, vis, lk), pr in drawn.items():
            a = policy[b][el][s] if timed_horizon is not None else policy[b][s]
            r, s2 = rew[e][s][a], nxt[e][s][a]
            gap += pr * (lam_star[e] - lk)
            regret += pr * (lam_star[e] - r)
            live = tuple(live[i] and rew[i][s][a] == r and nxt[i][s][a] == s2 for i in range(m))
            el, er = el + 1, er + r
            if doubling:
                before, within = vis or ((0,) * (S * A), (0,) * (S * A))
                within = list(within)
                within[s * A + a] += 1
                vis = (before, tuple(within))
                fired = any(x >= max(1, y) for x, y in zip(within, before))
            else:
                tracker.elapsed, tracker.reward = el, er
                fired = signal.fires(tracker)
            if fired:
                if doubling:
                    vis = (tuple(x + y for x, y in zip(*vis)), (0,) * (S * A))
                nodes[(e, live, -1, s2, 0, Fraction(0), vis, Fraction(0))] += pr
            else:
                nodes[(e, live, b, s2, el, er, vis, lk)] += pr
    return ExactSums(gap, regret)


def exact_counterexample(h_max: int, T: int, p=Fraction(1, 2)) -> tuple[Fraction, Fraction]:
    """(signed, absolute) expected optimism-gap sum for lazy posterior sampling
    with RewardThreshold(1, h_max) on the two-point bandit."""
    if h_max < 2:
        raise ArgumentError("h_max must exceed 1")
    p = _q(p)
    if not 0 <= p <= 1:
        raise ArgumentError("p must lie in [0, 1]")
    res = exact_sums(two_point_prior(float(p)), RewardThreshold(1.0, h_max), T,
                     weights=[1 - p, p])
    return res.optimism_gap, abs(res.optimism_gap)


def counterexample_closed_form(h_max: int, T: int, p=Fraction(1, 2)) -> Fraction:
    """Signed sum: the R=1 branch contributes p(1-p) at t=1, the R=0 branch
    -p(1-p) at each of its first min(T, h_max) steps."""
    p = _q(p)
    return p * (1 - p) * (1 - min(T, h_max))


def exact_heaven_hell(T: int, p=Fraction(1, 2), H: int = 1) -> Fraction:
    """Exact expected regret of episodic posterior sampling on heaven-and-hell."""
    p = _q(p)
    if not 0 <= p <= 1:
        raise ArgumentError("p must lie in [0, 1]")
    res = exact_sums(heaven_hell_prior(float(p)), FixedLength(H), T, timed_horizon=H,
                     weights=[p, 1 - p])
    return res.regret


# --- stratified check -------------------------------------------------------------

def gain_at(state: int = 0) -> Callable[[TabularMDP], float]:
    def g(mdp: TabularMDP) -> float:
        return float(optimal_gain(mdp).gain[state])
    g.__name__ = f"gain_at_{state}"
    return g


@dataclass(frozen=True)
class EpisodeScheme:
    """Which sample to compare and how to stratify runs.

    ``stratum="history"`` groups runs by the full observation history before
    episode ``episode`` starts, which is known at that time. With
    ``stratum="next_episode_exists"`` only runs in which episode
    ``episode + 1`` starts within ``T`` steps are kept: a selection that
    depends on what happens after the sample is drawn.
    """

    agent: dict
    T: int
    episode: int = 1
    stratum: str = "history"

    def __post_init__(self):
        if self.stratum not in ("history", "next_episode_exists"):
            raise ArgumentError(f"unknown stratum rule {self.stratum!r}")
        if self.episode < 1 or self.T < 1:
            raise ArgumentError("episode and T must be positive")


def fixed_length_scheme(H: int = 1, T: int = 1, episode: int = 1) -> EpisodeScheme:
    return EpisodeScheme({"agent": "lazy_psrl", "signal": {"kind": "fixed_length", "H": H}},
                         max(T, H * episode), episode, "history")


def reward_threshold_scheme(threshold: float = 1.0, h_max: int = 1000, T: int = 1000) -> EpisodeScheme:
    return EpisodeScheme({"agent": "lazy_psrl",
                          "signal": {"kind": "reward_threshold", "threshold": threshold,
                                     "h_max": h_max}},
                         T, 1, "next_episode_exists")


@dataclass
class LemmaResult:
    statistic: float
    p_value: float
    dof: int
    mean_difference: float          # mean of g(sample) - g(truth) over kept runs
    se_difference: float
    n_used: int
    strata: dict = field(default_factory=dict)


def _bins(values: np.ndarray, finite: bool) -> np.ndarray:
    if finite:
        _, idx = np.unique(np.round(values, 12), return_inverse=True)
        return idx
    edges = np.unique(np.quantile(values, np.linspace(0, 1, QUANTILE_BINS + 1)[1:-1]))
    return np.searchsorted(edges, values, side="right")


def homogeneity(a: np.ndarray, b: np.ndarray, finite: bool) -> tuple[float, int]:
    """Chi-square statistic and degrees of freedom for equal distributions of a and b."""
    codes = _bins(np.concatenate([a, b]), finite)
    k = int(codes.max()) + 1
    table = np.stack([np.bincount(codes[:len(a)], minlength=k),
                      np.bincount(codes[len(a):], minlength=k)])
    table = table[:, table.sum(axis=0) > 0]
    if table.shape[1] < 2:
        return 0.0, 0
    stat, _, dof, _ = stats.chi2_contingency(table, correction=False)
    return float(stat), int(dof)


def lemma1_check(prior, scheme: EpisodeScheme, g: Callable[[TabularMDP], float],
                 n: int, seed: int = 0, min_stratum: int = MIN_STRATUM) -> LemmaResult:
    """Compare g(sampled MDP of episode k) with g(true MDP) within history strata."""
    if n < 1:
        raise ArgumentError("n must be positive")
    problem = Problem(dict(scheme.agent), scheme.T, prior=prior, agent_belief=prior)
    k = scheme.episode
    cache: dict = {}

    def g_of(mdp, key):
        if key is None:
            return g(mdp)
        if key not in cache:
            cache[key] = g(mdp)
        return cache[key]

    groups = defaultdict(lambda: ([], []))
    for o in iter_outcomes(problem, range(seed, seed + n), detail=True):
        run = o.run
        eps = run.episodes
        if len(eps) < k:
            continue
        ep = eps[k - 1]
        if scheme.stratum == "history":
            tr = run.trajectory
            t0 = ep.start - 1
            key = tuple(zip(tr.states[:t0].tolist(), tr.actions[:t0].tolist(),
                            tr.rewards[:t0].tolist(), tr.next_states[:t0].tolist()))
        else:
            if len(eps) < k + 1:
                continue
            key = "next_episode_exists"
        truth_key = ("truth", run.true_index) if run.true_index is not None else None
        sample_key = ("atom", ep.atom) if ep.atom is not None else None
        ga, gb = groups[key]
        ga.append(g_of(ep.sampled, sample_key))
        gb.append(g_of(run.true_mdp, truth_key))
    if not groups:
        raise InsufficientDataError("no replication reached the compared episode")
    small = {str(key)[:60]: len(v[0]) for key, v in groups.items() if len(v[0]) < min_stratum}
    if small:
        raise InsufficientDataError(f"strata with fewer than {min_stratum} samples: {small}")
    finite = isinstance(prior, FiniteSupportBelief)
    stat, dof = 0.0, 0
    diffs = []
    for ga, gb in groups.values():
        s, d = homogeneity(np.array(ga), np.array(gb), finite)
        stat += s
        dof += d
        diffs.extend(np.subtract(ga, gb).tolist())
    p_value = float(stats.chi2.sf(stat, dof)) if dof > 0 else 1.0
    diffs = np.array(diffs)
    se = float(diffs.std(ddof=1) / math.sqrt(len(diffs))) if len(diffs) > 1 else 0.0
    strata = {(k_ if isinstance(k_, str) else f"history[{len(k_)}]#{i}"): len(v[0])
              for i, (k_, v) in enumerate(groups.items())}
    return LemmaResult(stat, p_value, dof, float(diffs.mean()), se, len(diffs), strata)


# --- per-episode optimism ------------------------------------------------------

def optimism_by_episode(problem: Problem, seeds: Sequence[int], episodes: int) -> tuple[np.ndarray, np.ndarray]:
    """Mean and standard error of each episode's finite-horizon optimism term
    for episodes 1..``episodes`` over the given seeds."""
    H = int(problem.agent["H"])
    values = np.full((len(seeds), episodes), np.nan)
    for i, o in enumerate(iter_outcomes(problem, seeds, detail=True)):
        run = o.run
        env = run.true_mdp
        true_fh = env if isinstance(env, FiniteHorizonMDP) else FiniteHorizonMDP(env, H)
        parts = decompose_finite(list(run.episodes[:episodes]), true_fh)
        values[i, :len(parts)] = [p[0] for p in parts]
    if np.isnan(values).any():
        raise InsufficientDataError("some runs did not reach the requested number of episodes")
    se = values.std(axis=0, ddof=1) / math.sqrt(len(seeds))
    return values.mean(axis=0), se


def chain_optimism_problem(H: int = 5, n: int = 3) -> Problem:
    from .belief import conjugate_prior

    prior = conjugate_prior(n, 2)
    return Problem({"agent": "psrl", "H": H}, H * 5, prior=prior, agent_belief=prior)
