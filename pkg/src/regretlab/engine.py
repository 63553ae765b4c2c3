"""Per-seed execution of an agent against a true MDP.

Two engines produce identical results. ``run_seed`` steps one agent object
at a time. ``run_batched`` advances many seeds in lockstep with numpy and
applies only when every hypothesis is deterministic and the agent is PSRL or
lazy PSRL over a finite-support belief; randomness is then confined to the
posterior draws, which both engines make from the same per-seed stream.
"""
from __future__ import annotations

from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from typing import Iterator, Optional, Sequence, Union

import numpy as np

from .agents import PSRL, Agent, EpisodeLog, LazyPSRL, make_agent
from .belief import Belief, FiniteSupportBelief, draw_index
from .errors import InconsistentObservationError
from .mdp import FiniteHorizonMDP, StationaryPolicy, TabularMDP, TimePolicy, Trajectory
from .planner import _backward, backward_induction, gain, optimal_gain, policy_value_finite
from .regret import decompose_finite, decompose_gain, sum_in_order
from .signals import FixedLength, Never, RewardThreshold, VisitCountDoubling

Env = Union[TabularMDP, FiniteHorizonMDP]


def seed_streams(seed: int) -> tuple[np.random.Generator, np.random.Generator]:
    """Independent (environment, agent) generators for one seed."""
    env_ss, agent_ss = np.random.SeedSequence(seed).spawn(2)
    return np.random.default_rng(env_ss), np.random.default_rng(agent_ss)


def optimal_average(env: Env, s1: Optional[int]) -> float:
    """Optimal long-run reward per step: gain from ``s1``, or the reset-averaged
    optimal episode value divided by H for a finite-horizon environment."""
    if isinstance(env, FiniteHorizonMDP):
        q, _ = backward_induction(env)
        return float(env.initial_dist @ q.V(1)) / env.horizon
    return optimal_gain(env).gain[s1]


@dataclass
class SeedRun:
    """Everything one seed produced."""

    seed: int
    true_mdp: Env
    true_index: Optional[int]
    start_state: int
    lambda_star: float
    trajectory: Trajectory
    episodes: Sequence

    def sampled(self, k: int):
        return self.episodes[k - 1].sampled


@dataclass
class SeedOutcome:
    seed: int
    lambda_star: float
    rewards: np.ndarray
    episode_index: np.ndarray
    cumulative: np.ndarray
    optimism: Optional[float] = None
    concentration: Optional[float] = None
    run: Optional[SeedRun] = None

    @property
    def final_regret(self) -> float:
        return float(self.cumulative[-1])


@dataclass
class Problem:
    """A fully resolved experiment: truth (fixed or prior), agent, horizon."""

    agent: dict
    T: int
    fixed: Optional[Env] = None
    prior: Optional[Belief] = None
    agent_belief: Optional[Belief] = None
    start_state: Optional[int] = None
    decomposition: Optional[str] = None

    @property
    def shape(self) -> tuple[int, int]:
        m = self.fixed if self.fixed is not None else self.prior
        return m.n_states, m.n_actions


def run_agent(agent: Agent, env: Env, s1: Optional[int], T: int,
              rng: np.random.Generator) -> tuple[Trajectory, list[EpisodeLog]]:
    fh = isinstance(env, FiniteHorizonMDP)
    base = env.base if fh else env
    dyn = base.dynamics
    if s1 is None:
        s1 = draw_index(env.initial_dist, rng) if fh else 0
    states, actions, rewards, nexts = [0] * T, [0] * T, [0.0] * T, [0] * T
    s = s1
    for t in range(T):
        if fh and t and t % env.horizon == 0:
            s = draw_index(env.initial_dist, rng)
        a = agent.act(s)
        r, s2 = dyn.step(s, a, rng)
        agent.observe(s, a, r, s2)
        states[t], actions[t], rewards[t], nexts[t] = s, a, r, s2
        s = s2
    traj = Trajectory(s1, np.array(states), np.array(actions), np.array(rewards),
                      np.array(nexts), tuple(ep.start for ep in agent.episodes))
    return traj, agent.episodes


def _draw_truth(problem: Problem, env_rng) -> tuple[Env, Optional[int]]:
    if problem.fixed is not None:
        return problem.fixed, None
    if isinstance(problem.prior, FiniteSupportBelief):
        i = problem.prior.sample_index(env_rng)
        return problem.prior.atoms[i], i
    return problem.prior.sample(env_rng), None


def run_seed(problem: Problem, seed: int, detail: bool = False) -> SeedOutcome:
    env_rng, agent_rng = seed_streams(seed)
    env, idx = _draw_truth(problem, env_rng)
    S, A = problem.shape
    agent = make_agent(problem.agent, problem.agent_belief, S, A, agent_rng)
    traj, episodes = run_agent(agent, env, problem.start_state, problem.T, env_rng)
    lam = optimal_average(env, traj.start_state)
    cumulative = np.cumsum(lam - traj.rewards)
    out = SeedOutcome(seed, lam, traj.rewards, traj.episode_index, cumulative)
    if problem.decomposition == "gain":
        parts = decompose_gain(episodes, env.base if isinstance(env, FiniteHorizonMDP) else env,
                               lambda_star=lam)
    elif problem.decomposition == "finite":
        H = agent.H
        true_fh = env if isinstance(env, FiniteHorizonMDP) else FiniteHorizonMDP(env, H)
        parts = decompose_finite(episodes, true_fh)
    else:
        parts = None
    if parts is not None:
        out.optimism = sum_in_order(p[0] for p in parts)
        out.concentration = sum_in_order(p[1] for p in parts)
    if detail:
        out.run = SeedRun(seed, env, idx, traj.start_state, lam, traj, episodes)
    return out


def _use_batched(problem: Problem, engine: str) -> bool:
    if engine == "scalar":
        return False
    ok = batchable(problem)
    if engine == "batched" and not ok:
        raise ValueError("this problem is not eligible for the batched engine")
    return ok


def _run_block(problem: Problem, seeds: Sequence[int], batched: bool, detail: bool) -> list:
    if batched:
        return list(run_batched(problem, seeds, detail))
    return [run_seed(problem, s, detail) for s in seeds]


def iter_outcomes(problem: Problem, seeds: Sequence[int], engine: str = "auto", jobs: int = 1,
                  detail: bool = False, block: int = 2048) -> Iterator[SeedOutcome]:
    """One SeedOutcome per seed, in the order of ``seeds``, whatever ``jobs`` is."""
    batched = _use_batched(problem, engine)
    if jobs > 1:
        block = min(block, -(-len(seeds) // jobs))
    blocks = [list(seeds[i:i + block]) for i in range(0, len(seeds), block)]
    return _iterate(problem, blocks, batched, jobs, detail)


def _iterate(problem, blocks, batched, jobs, detail):
    if jobs <= 1:
        for b in blocks:
            yield from (run_batched(problem, b, detail) if batched
                        else (run_seed(problem, s, detail) for s in b))
        return
    with ProcessPoolExecutor(max_workers=jobs) as pool:
        futures = [pool.submit(_run_block, problem, b, batched, detail) for b in blocks]
        for f in futures:
            yield from f.result()


# --- vectorized engine ----------------------------------------------------------

def batchable(problem: Problem) -> bool:
    truth = [problem.fixed] if problem.fixed is not None else getattr(problem.prior, "atoms", None)
    if truth is None or any(not isinstance(m, TabularMDP) or not m.deterministic for m in truth):
        return False
    b = problem.agent_belief
    if not isinstance(b, FiniteSupportBelief) or not b.deterministic:
        return False
    if not np.all((b.likelihood == 0) | (b.likelihood == 1)):
        return False
    kind = problem.agent.get("agent")
    if kind == "lazy_psrl":
        return problem.agent.get("planner", "brute_force") == "brute_force" and problem.decomposition != "finite"
    return kind == "psrl" and problem.decomposition != "gain"


class _Tables:
    """Plans and cross-evaluations precomputed for every (truth, hypothesis) pair."""

    def __init__(self, problem: Problem, truth: list[TabularMDP]):
        belief = problem.agent_belief
        atoms = belief.atoms
        S = atoms[0].n_states
        self.timed = problem.agent["agent"] == "psrl"
        self.R_true = np.stack([m.reward_mean for m in truth])
        self.N_true = np.stack([np.argmax(m.transitions == 1.0, axis=2) for m in truth])
        self.R_hyp = np.stack([m.reward_mean for m in atoms])
        self.B_hyp = np.stack([m.reward_bernoulli for m in atoms])
        self.N_hyp = np.stack([np.argmax(m.transitions == 1.0, axis=2) for m in atoms])
        self.prior = belief.prior
        self.likelihood0 = belief.likelihood
        if self.timed:
            H = int(problem.agent["H"])
            self.H = H
            plans = [_backward(m.transitions, m.reward_mean, H) for m in atoms]
            self.policy = np.stack([p[2] for p in plans])                 # (m, H, S)
            self.value_hyp = np.stack([p[1][0] for p in plans])           # (m, S)
            self.policy_objs = [TimePolicy(p[2]) for p in plans]
            if problem.decomposition == "finite":
                self.value_opt = np.stack([backward_induction(FiniteHorizonMDP(m, H))[0].V(1)
                                           for m in truth])
                self.value_cross = np.array([[policy_value_finite(FiniteHorizonMDP(e, H), pol).V(1)
                                              for pol in self.policy_objs] for e in truth])
        else:
            plans = [optimal_gain(m) for m in atoms]
            self.policy = np.stack([p.policy.actions for p in plans])     # (m, S)
            self.gain_hyp = np.stack([p.gain.gain for p in plans])        # (m, S)
            self.policy_objs = [p.policy for p in plans]
            self.gain_cross = np.array([[gain(e, pol).gain for pol in self.policy_objs]
                                        for e in truth])                  # (e, m, S)
        self.atoms = atoms


class _Episodes(Sequence):
    """Episode logs of one batched seed, built on demand."""

    def __init__(self, tables: _Tables, starts, lengths, start_states, hyp):
        self._t, self._starts, self._lengths = tables, starts, lengths
        self._states, self._hyp = start_states, hyp

    def __len__(self) -> int:
        return len(self._starts)

    def __getitem__(self, i):
        if isinstance(i, slice):
            return [self[j] for j in range(*i.indices(len(self)))]
        t, b, s = self._t, int(self._hyp[i]), int(self._states[i])
        log = EpisodeLog(i + 1, int(self._starts[i]), s, t.policy_objs[b], t.atoms[b], atom=b,
                         length=int(self._lengths[i]))
        if t.timed:
            log.sampled_value = float(t.value_hyp[b, s])
        else:
            log.sampled_gain = float(t.gain_hyp[b, s])
        return log


def run_batched(problem: Problem, seeds: Sequence[int], detail: bool = False,
                chunk: int = 2048) -> Iterator[SeedOutcome]:
    truth = [problem.fixed] if problem.fixed is not None else list(problem.prior.atoms)
    tables = _Tables(problem, truth)
    s1 = 0 if problem.start_state is None else problem.start_state
    lam_true = np.array([optimal_average(m, s1) for m in truth])
    for lo in range(0, len(seeds), chunk):
        yield from _run_chunk(problem, tables, truth, lam_true, s1, list(seeds[lo:lo + chunk]), detail)


def _run_chunk(problem, tb: _Tables, truth, lam_true, s1, seeds, detail):
    n, T = len(seeds), problem.T
    S, A = tb.R_hyp.shape[1:]
    signal = make_agent(problem.agent, problem.agent_belief, S, A, None).signal
    agent_rngs = []
    true = np.zeros(n, dtype=np.int64)
    for i, seed in enumerate(seeds):
        env_rng, agent_rng = seed_streams(seed)
        if problem.fixed is None:
            true[i] = problem.prior.sample_index(env_rng)
        agent_rngs.append(agent_rng)
    rows = np.arange(n)
    live = np.broadcast_to(tb.likelihood0 > 0, (n, len(tb.atoms))).copy()
    live &= tb.prior > 0
    lam_star = lam_true[true]

    s = np.full(n, s1, dtype=np.int64)
    hyp = np.zeros(n, dtype=np.int64)
    need = np.ones(n, dtype=bool)
    elapsed = np.zeros(n, dtype=np.int64)
    ep_reward = np.zeros(n)
    ep_len = np.zeros(n, dtype=np.int64)
    ep_state = np.zeros(n, dtype=np.int64)
    lam_k = np.zeros(n)
    opt = np.zeros(n)
    conc = np.zeros(n)
    doubling = isinstance(signal, VisitCountDoubling)
    if doubling:
        before = np.zeros((n, S, A), dtype=np.int64)
        within = np.zeros((n, S, A), dtype=np.int64)

    rewards = np.zeros((n, T))
    k_of_t = np.zeros((n, T), dtype=np.int64)
    k = np.zeros(n, dtype=np.int64)
    if detail:
        st = np.zeros((n, T), dtype=np.int64)
        ac = np.zeros((n, T), dtype=np.int64)
        nx = np.zeros((n, T), dtype=np.int64)
        hyp_of_t = np.zeros((n, T), dtype=np.int64)
    decomp = problem.decomposition

    def close(idx):
        if decomp == "gain":
            b, e, ss, L = hyp[idx], true[idx], ep_state[idx], ep_len[idx]
            lk = lam_k[idx]
            opt[idx] += L * (lam_star[idx] - lk)
            conc[idx] += L * (lk - tb.gain_cross[e, b, ss])
        elif decomp == "finite":
            b, e, ss = hyp[idx], true[idx], ep_state[idx]
            imagined = tb.value_hyp[b, ss]
            opt[idx] += tb.value_opt[e, ss] - imagined
            conc[idx] += imagined - tb.value_cross[e, b, ss]

    for t in range(T):
        idx = np.flatnonzero(need)
        if idx.size:
            support = live[idx].sum(axis=1)
            single = idx[support == 1]
            hyp[single] = np.argmax(live[single], axis=1)
            for i in idx[support > 1].tolist():
                w = tb.prior * live[i].astype(float)
                hyp[i] = draw_index(w / w.sum(), agent_rngs[i])
            k[idx] += 1
            ep_state[idx] = s[idx]
            ep_len[idx] = 0
            if not tb.timed:
                lam_k[idx] = tb.gain_hyp[hyp[idx], s[idx]]
            need[idx] = False
        if tb.timed:
            a = tb.policy[hyp, elapsed, s]
        else:
            a = tb.policy[hyp, s]
        r = tb.R_true[true, s, a]
        s2 = tb.N_true[true, s, a]
        rh = tb.R_hyp[:, s, a].T
        ok = np.where(tb.B_hyp[:, s, a].T, rh == r[:, None], np.abs(r[:, None] - rh) <= 1e-9)
        live &= ok & (tb.N_hyp[:, s, a].T == s2[:, None])
        if not live.any(axis=1).all():
            bad = int(np.flatnonzero(~live.any(axis=1))[0])
            raise InconsistentObservationError(
                f"seed {seeds[bad]}: observation at t={t + 1} is impossible under every atom")
        rewards[:, t] = r
        k_of_t[:, t] = k
        if detail:
            st[:, t], ac[:, t], nx[:, t], hyp_of_t[:, t] = s, a, s2, hyp
        elapsed += 1
        ep_len += 1
        ep_reward += r
        if doubling:
            within[rows, s, a] += 1
            fired = np.any(within >= np.maximum(1, before), axis=(1, 2))
        elif isinstance(signal, FixedLength):
            fired = elapsed >= signal.H
        elif isinstance(signal, RewardThreshold):
            fired = (ep_reward >= signal.threshold) | (elapsed >= signal.h_max)
        else:
            fired = np.zeros(n, dtype=bool)
        s = s2
        done = np.flatnonzero(fired)
        if done.size:
            close(done)
            elapsed[done] = 0
            ep_reward[done] = 0.0
            if doubling:
                before[done] += within[done]
                within[done] = 0
            need[done] = True
    close(np.flatnonzero(~need))

    cumulative = np.cumsum(lam_star[:, None] - rewards, axis=1)
    for i, seed in enumerate(seeds):
        out = SeedOutcome(seed, float(lam_star[i]), rewards[i], k_of_t[i], cumulative[i])
        if decomp is not None:
            out.optimism, out.concentration = float(opt[i]), float(conc[i])
        if detail:
            kt = k_of_t[i]
            first = np.flatnonzero(np.diff(kt, prepend=0))
            lengths = np.diff(np.append(first, T))
            traj = Trajectory(s1, st[i], ac[i], rewards[i], nx[i], tuple((first + 1).tolist()))
            eps = _Episodes(tb, first + 1, lengths, st[i][first], hyp_of_t[i][first])
            idx_true = None if problem.fixed is not None else int(true[i])
            out.run = SeedRun(seed, truth[int(true[i])], idx_true, s1, float(lam_star[i]), traj, eps)
        yield out
