"""Exact planners: finite-horizon backward induction, average-reward gain,
optimal gain by enumeration or relative value iteration, and extended value
iteration over L1 confidence sets.

Ties between actions always go to the lowest index.
"""
from __future__ import annotations

import itertools
import logging
from dataclasses import dataclass
from typing import Callable, NamedTuple, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ArgumentError, ContractError, ConvergenceError, NumericalError
from .mdp import (BERNOULLI, FiniteHorizonMDP, StationaryPolicy, TabularMDP,
                  TimePolicy, classify, is_weakly_communicating)

log = logging.getLogger(__name__)

SOLVE_TOL = 1e-10
APERIODICITY = 0.01


# --- finite horizon -------------------------------------------------------

@dataclass(frozen=True, eq=False)
class QTable:
    """``q[h - 1, s, a]`` is Q_h(s, a); ``v[h - 1, s]`` is V_h(s) with ``v[H] = 0``."""

    q: np.ndarray
    v: np.ndarray

    @property
    def horizon(self) -> int:
        return self.q.shape[0]

    def Q(self, h: int) -> np.ndarray:
        return self.q[h - 1]

    def V(self, h: int) -> np.ndarray:
        return self.v[h - 1]


def _backward(P: np.ndarray, r: np.ndarray, H: int, policy: np.ndarray | None = None):
    S, A = r.shape
    idx = np.arange(S)
    v = np.zeros((H + 1, S))
    q = np.empty((H, S, A))
    pi = np.empty((H, S), dtype=np.int64)
    for h in range(H - 1, -1, -1):
        q[h] = r + P @ v[h + 1]
        pi[h] = np.argmax(q[h], axis=1) if policy is None else policy[h]
        v[h] = q[h][idx, pi[h]]
    return q, v, pi


def backward_induction(fh: FiniteHorizonMDP) -> tuple[QTable, TimePolicy]:
    """Optimal Q-values for every period and the greedy time-dependent policy."""
    base = fh.base
    q, v, pi = _backward(base.transitions, base.reward_mean, fh.horizon)
    return QTable(q, v), TimePolicy(pi)


def policy_value_finite(fh: FiniteHorizonMDP, policy: TimePolicy) -> QTable:
    """Q-values of a fixed time policy; the recursion fixes the next action to the policy's."""
    if policy.horizon != fh.horizon:
        raise ArgumentError(f"policy horizon {policy.horizon} != MDP horizon {fh.horizon}")
    policy.check(fh.base)
    q, v, _ = _backward(fh.base.transitions, fh.base.reward_mean, fh.horizon, policy.actions)
    return QTable(q, v)


# --- average reward --------------------------------------------------------

@dataclass(frozen=True, eq=False)
class GainVector:
    gain: np.ndarray

    def __getitem__(self, s: int) -> float:
        return float(self.gain[s])

    def __len__(self) -> int:
        return len(self.gain)


def chain_gain(P: np.ndarray, r: np.ndarray) -> np.ndarray:
    """Cesàro-limit average reward of a Markov reward process, per start state."""
    S = len(r)
    adj = P > 0
    n, labels = connected_components(csr_matrix(adj), directed=True, connection="strong")
    src, dst = np.nonzero(adj)
    leaving = np.zeros(n, dtype=bool)
    leaving[labels[src[labels[src] != labels[dst]]]] = True
    g = np.zeros(S)
    recurrent = np.zeros(S, dtype=bool)
    class_gain, class_members = [], []
    for c in np.flatnonzero(~leaving):
        idx = np.flatnonzero(labels == c)
        k = len(idx)
        M = P[np.ix_(idx, idx)].T - np.eye(k)
        M[-1, :] = 1.0
        b = np.zeros(k)
        b[-1] = 1.0
        pi = _solve(M, b, f"stationary distribution of class {idx.tolist()}")
        resid = np.max(np.abs(pi @ P[np.ix_(idx, idx)] - pi))
        if resid > SOLVE_TOL or abs(pi.sum() - 1.0) > SOLVE_TOL:
            raise NumericalError(f"stationary solve residual {resid:.3g} on class {idx.tolist()}")
        gc = float(pi @ r[idx])
        g[idx] = gc
        recurrent[idx] = True
        class_gain.append(gc)
        class_members.append(idx)
    transient = np.flatnonzero(~recurrent)
    if transient.size:
        Q = P[np.ix_(transient, transient)]
        into = np.stack([P[np.ix_(transient, m)].sum(axis=1) for m in class_members], axis=1)
        absorb = _solve(np.eye(len(transient)) - Q, into, "absorption probabilities")
        g[transient] = absorb @ np.array(class_gain)
    return np.clip(g, 0.0, 1.0)


def _solve(M: np.ndarray, b: np.ndarray, what: str) -> np.ndarray:
    try:
        x = np.linalg.solve(M, b)
    except np.linalg.LinAlgError as exc:
        raise NumericalError(f"singular system for {what}: {exc}; "
                             f"condition number {np.linalg.cond(M):.3g}") from None
    if np.max(np.abs(M @ x - b)) > SOLVE_TOL:
        raise NumericalError(f"residual above {SOLVE_TOL} for {what}; "
                             f"condition number {np.linalg.cond(M):.3g}")
    return x


def induced_chain(mdp: TabularMDP, policy: StationaryPolicy) -> tuple[np.ndarray, np.ndarray]:
    idx = np.arange(mdp.n_states)
    return mdp.transitions[idx, policy.actions], mdp.reward_mean[idx, policy.actions]


def gain(mdp: TabularMDP, policy: StationaryPolicy) -> GainVector:
    policy.check(mdp)
    return GainVector(chain_gain(*induced_chain(mdp, policy)))


class OptimalGain(NamedTuple):
    gain: GainVector
    policy: StationaryPolicy
    # False when no single policy attains the per-state optimum everywhere
    simultaneous: bool = True


def optimal_gain(mdp: TabularMDP, method: str = "brute_force", cap: int = 10**6,
                 tol: float = 1e-9) -> OptimalGain:
    if method == "brute_force":
        return _brute_force(mdp, cap)
    if method == "relative_vi":
        return relative_value_iteration(mdp, tol)
    raise ArgumentError(f"unknown method {method!r}")


def _brute_force(mdp: TabularMDP, cap: int) -> OptimalGain:
    S, A = mdp.n_states, mdp.n_actions
    if A ** S > cap:
        raise ContractError(f"{A}**{S} policies exceed the enumeration cap {cap}")
    policies = np.array(list(itertools.product(range(A), repeat=S)), dtype=np.int64)
    idx = np.arange(S)
    gains = np.array([chain_gain(mdp.transitions[idx, p], mdp.reward_mean[idx, p])
                      for p in policies])
    best = gains.max(axis=0)
    ok = np.all(gains >= best - 1e-12, axis=1)
    if ok.any():
        i = int(np.argmax(ok))
        return OptimalGain(GainVector(gains[i]), StationaryPolicy(policies[i]), True)
    log.warning("%s: no stationary policy is optimal from every start state", mdp.name or "MDP")
    i = int(np.argmax(gains[:, 0] >= best[0] - 1e-12))
    return OptimalGain(GainVector(best), StationaryPolicy(policies[i]), False)


def _lazy_mix(P: np.ndarray, tau: float) -> np.ndarray:
    S = P.shape[0]
    mixed = (1.0 - tau) * P
    mixed[np.arange(S), :, np.arange(S)] += tau
    return mixed


def relative_value_iteration(mdp: TabularMDP, tol: float = 1e-9, max_iter: int = 10**6,
                             aperiodicity: float = APERIODICITY) -> OptimalGain:
    """Relative VI pinned at state 0; requires a weakly communicating MDP."""
    if not is_weakly_communicating(mdp):
        report = classify(mdp, policy_cap=0)
        raise ContractError("relative value iteration needs a weakly communicating MDP: "
                            + report.witness.get("weakly_communicating", ""))
    P = _lazy_mix(mdp.transitions, aperiodicity)
    r = mdp.reward_mean
    h = np.zeros(mdp.n_states)
    for _ in range(max_iter):
        q = r + P @ h
        v = q.max(axis=1)
        d = v - h
        if d.max() - d.min() < tol:
            g = 0.5 * (d.max() + d.min())
            return OptimalGain(GainVector(np.full(mdp.n_states, g)),
                               StationaryPolicy(np.argmax(q, axis=1)), True)
        h = v - v[0]
    raise ConvergenceError(f"relative value iteration did not reach span {tol} "
                           f"in {max_iter} sweeps")


# --- optimism ---------------------------------------------------------------

@dataclass(frozen=True, eq=False)
class ConfidenceSet:
    """Rewards within ``reward_radius`` of the center mean and transition rows
    within L1 distance ``transition_radius`` of the center row."""

    center: TabularMDP
    reward_radius: np.ndarray
    transition_radius: np.ndarray
    counts: np.ndarray

    def __post_init__(self):
        if np.any(self.reward_radius < 0) or np.any(self.transition_radius < 0):
            raise ArgumentError("confidence radii must be non-negative")

    def contains(self, mdp: TabularMDP, tol: float = 1e-12) -> bool:
        dr = np.abs(mdp.reward_mean - self.center.reward_mean)
        dp = np.abs(mdp.transitions - self.center.transitions).sum(axis=2)
        return bool(np.all(dr <= self.reward_radius + tol) and np.all(dp <= self.transition_radius + tol))


ConfidenceConstructor = Callable[..., ConfidenceSet]


def ucrl2_confidence_set(counts: np.ndarray, reward_sums: np.ndarray,
                         transition_counts: np.ndarray, t: int, delta: float) -> ConfidenceSet:
    """Empirical center with the usual UCRL2-style Hoeffding / L1 radii."""
    S, A = counts.shape
    n = np.maximum(1, counts)
    t = max(int(t), 1)
    with np.errstate(invalid="ignore", divide="ignore"):
        P = np.where(counts[..., None] > 0, transition_counts / counts[..., None], 1.0 / S)
        R = np.where(counts > 0, reward_sums / np.maximum(counts, 1), 0.0)
    P /= P.sum(axis=2, keepdims=True)
    center = TabularMDP(P, np.clip(R, 0.0, 1.0), True, name="empirical")
    p_rad = np.sqrt(14.0 * S * np.log(2.0 * A * t / delta) / n)
    r_rad = np.sqrt(7.0 * np.log(2.0 * S * A * t / delta) / (2.0 * n))
    return ConfidenceSet(center, r_rad, p_rad, counts.copy())


def optimistic_transitions(p_hat: np.ndarray, radius: np.ndarray, v: np.ndarray) -> np.ndarray:
    """Row-wise maximiser of p @ v over the L1 ball of the given radius in the simplex."""
    order = np.argsort(-v, kind="stable")
    best = order[0]
    p = p_hat.copy()
    p[..., best] = np.minimum(1.0, p_hat[..., best] + radius / 2.0)
    excess = p.sum(axis=-1) - 1.0
    for j in order[:0:-1]:
        take = np.clip(np.minimum(excess, p[..., j]), 0.0, None)
        p[..., j] -= take
        excess -= take
    return p


class EVIResult(NamedTuple):
    gain: float
    policy: StationaryPolicy


def extended_value_iteration(cs: ConfidenceSet, epsilon: float, max_iter: int = 100_000,
                             aperiodicity: float = APERIODICITY) -> EVIResult:
    """Optimistic gain and policy over every MDP in the confidence set.

    Each sweep picks, per (s, a), the upper reward and the transition row in
    the L1 ball that maximise the current value, mixes it with a self-loop of
    weight ``aperiodicity`` and stops once the value increments have span
    below ``epsilon``.
    """
    if epsilon <= 0:
        raise ArgumentError("epsilon must be positive")
    center = cs.center
    S = center.n_states
    r = np.clip(center.reward_mean + cs.reward_radius, 0.0, 1.0)
    u = np.zeros(S)
    eye = np.eye(S)[:, None, :]
    for _ in range(max_iter):
        p = optimistic_transitions(center.transitions, cs.transition_radius, u)
        p = (1.0 - aperiodicity) * p + aperiodicity * eye
        q = r + p @ u
        u_new = q.max(axis=1)
        d = u_new - u
        if d.max() - d.min() < epsilon:
            return EVIResult(float(0.5 * (d.max() + d.min())), StationaryPolicy(np.argmax(q, axis=1)))
        u = u_new - u_new.min()
    raise ConvergenceError(f"extended value iteration did not converge in {max_iter} sweeps; "
                           "increase the aperiodicity weight or max_iter")
