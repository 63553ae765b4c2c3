"""Tabular MDP data model, simulation and connectedness classification.

States and actions are 0-based integers. Timesteps and episode periods are
1-based wherever they are exposed (``episode_starts``, ``TimePolicy(s, h)``).
"""
from __future__ import annotations

import itertools
from bisect import bisect_right
from dataclasses import dataclass, field
from functools import cached_property
from typing import Iterator, Optional, Union

import numpy as np
from scipy.sparse import csr_matrix
from scipy.sparse.csgraph import connected_components

from .errors import ArgumentError, ContractError

ROW_TOL = 1e-12
BERNOULLI = "bernoulli"
POINT = "point"

# sample size used by classify() once A**S exceeds the policy cap
CAPPED_SAMPLE = 4096


def _readonly(x, dtype) -> np.ndarray:
    arr = np.array(x, dtype=dtype, copy=True)
    arr.setflags(write=False)
    return arr


@dataclass(frozen=True)
class RewardModel:
    """Reward distribution of one state-action pair: Bernoulli(p) or PointMass(v)."""

    kind: str
    value: float

    def __post_init__(self):
        if self.kind not in (BERNOULLI, POINT):
            raise ArgumentError(f"unknown reward kind {self.kind!r}")
        if not 0.0 <= self.value <= 1.0:
            raise ArgumentError(f"reward parameter {self.value} outside [0, 1]")

    @property
    def mean(self) -> float:
        return self.value

    @property
    def deterministic(self) -> bool:
        return self.kind == POINT or self.value in (0.0, 1.0)

    def sample(self, rng: np.random.Generator) -> float:
        if self.kind == POINT:
            return self.value
        return 1.0 if rng.random() < self.value else 0.0


def Bernoulli(p: float) -> RewardModel:
    return RewardModel(BERNOULLI, float(p))


def PointMass(v: float) -> RewardModel:
    return RewardModel(POINT, float(v))


class _Dynamics:
    """Python-list view of an MDP for tight simulation loops."""

    def __init__(self, mdp: "TabularMDP"):
        S, A = mdp.n_states, mdp.n_actions
        P = mdp.transitions
        self.mean = mdp.reward_mean.tolist()
        bern = mdp.reward_bernoulli
        mean = mdp.reward_mean
        self.stochastic_reward = (bern & (mean > 0.0) & (mean < 1.0)).tolist()
        self.det_next = [[-1] * A for _ in range(S)]
        self.cum = [[None] * A for _ in range(S)]
        for s in range(S):
            for a in range(A):
                row = P[s, a]
                hits = np.flatnonzero(row == 1.0)
                if hits.size:
                    self.det_next[s][a] = int(hits[0])
                cum = np.cumsum(row)
                last = int(np.flatnonzero(row > 0)[-1])
                cum[last:] = 1.0
                self.cum[s][a] = cum.tolist()

    def reward(self, s: int, a: int, u: float) -> float:
        if self.stochastic_reward[s][a]:
            return 1.0 if u < self.mean[s][a] else 0.0
        return self.mean[s][a]

    def next_state(self, s: int, a: int, u: float) -> int:
        d = self.det_next[s][a]
        if d >= 0:
            return d
        return bisect_right(self.cum[s][a], u)

    def step(self, s: int, a: int, rng: np.random.Generator) -> tuple[float, int]:
        # randomness is consumed only by the stochastic components
        if self.stochastic_reward[s][a]:
            r = 1.0 if rng.random() < self.mean[s][a] else 0.0
        else:
            r = self.mean[s][a]
        d = self.det_next[s][a]
        if d < 0:
            d = bisect_right(self.cum[s][a], rng.random())
        return r, d


@dataclass(frozen=True, eq=False)
class TabularMDP:
    """Finite MDP with a row-stochastic kernel and rewards in [0, 1].

    ``transitions[s, a, s']`` is P(s' | s, a). ``reward_mean[s, a]`` is the
    Bernoulli parameter or point-mass value, ``reward_bernoulli[s, a]``
    selects between the two kinds.
    """

    transitions: np.ndarray
    reward_mean: np.ndarray
    reward_bernoulli: np.ndarray
    name: str = ""

    def __post_init__(self):
        P = _readonly(self.transitions, float)
        R = _readonly(self.reward_mean, float)
        B = np.broadcast_to(np.asarray(self.reward_bernoulli, dtype=bool), R.shape)
        B = _readonly(B, bool)
        if P.ndim != 3 or P.shape[0] < 1 or P.shape[1] < 1 or P.shape[2] != P.shape[0]:
            raise ArgumentError(f"transitions must have shape (S, A, S), got {P.shape}")
        if R.shape != P.shape[:2]:
            raise ArgumentError(f"reward table shape {R.shape} != {P.shape[:2]}")
        if not np.all(np.isfinite(P)) or np.any(P < 0):
            raise ArgumentError("transition probabilities must be finite and non-negative")
        dev = np.abs(P.sum(axis=2) - 1.0)
        if np.any(dev > ROW_TOL):
            s, a = np.unravel_index(np.argmax(dev), dev.shape)
            raise ArgumentError(f"transition row ({s}, {a}) sums to {P[s, a].sum()!r}")
        if not np.all(np.isfinite(R)) or np.any(R < 0) or np.any(R > 1):
            raise ArgumentError("reward means must lie in [0, 1]")
        object.__setattr__(self, "transitions", P)
        object.__setattr__(self, "reward_mean", R)
        object.__setattr__(self, "reward_bernoulli", B)

    @property
    def n_states(self) -> int:
        return self.transitions.shape[0]

    @property
    def n_actions(self) -> int:
        return self.transitions.shape[1]

    def reward(self, s: int, a: int) -> RewardModel:
        kind = BERNOULLI if self.reward_bernoulli[s, a] else POINT
        return RewardModel(kind, float(self.reward_mean[s, a]))

    @cached_property
    def dynamics(self) -> _Dynamics:
        return _Dynamics(self)

    @cached_property
    def deterministic(self) -> bool:
        """True when neither rewards nor transitions involve chance."""
        R, B = self.reward_mean, self.reward_bernoulli
        rewards = np.all(~B | (R == 0.0) | (R == 1.0))
        return bool(rewards and np.all(np.any(self.transitions == 1.0, axis=2)))

    @classmethod
    def from_models(cls, transitions, rewards, name: str = "") -> "TabularMDP":
        """Build from a nested (S, A) table of :class:`RewardModel`."""
        mean = [[r.value for r in row] for row in rewards]
        bern = [[r.kind == BERNOULLI for r in row] for row in rewards]
        return cls(np.asarray(transitions, float), np.asarray(mean, float), np.asarray(bern), name)

    def with_rewards(self, reward_mean: np.ndarray) -> "TabularMDP":
        return TabularMDP(self.transitions, reward_mean, self.reward_bernoulli, self.name)


@dataclass(frozen=True, eq=False)
class FiniteHorizonMDP:
    """A TabularMDP whose state is redrawn from ``initial_dist`` every ``horizon`` steps."""

    base: TabularMDP
    horizon: int
    initial_dist: np.ndarray = None

    def __post_init__(self):
        if int(self.horizon) != self.horizon or self.horizon < 1:
            raise ArgumentError(f"horizon must be a positive integer, got {self.horizon}")
        rho = self.initial_dist
        if rho is None:
            rho = np.full(self.base.n_states, 1.0 / self.base.n_states)
        rho = _readonly(rho, float)
        if rho.shape != (self.base.n_states,) or np.any(rho < 0):
            raise ArgumentError("initial_dist must be a non-negative vector over states")
        if abs(rho.sum() - 1.0) > ROW_TOL:
            raise ArgumentError(f"initial_dist sums to {rho.sum()!r}")
        object.__setattr__(self, "horizon", int(self.horizon))
        object.__setattr__(self, "initial_dist", rho)

    @property
    def n_states(self) -> int:
        return self.base.n_states

    @property
    def n_actions(self) -> int:
        return self.base.n_actions


@dataclass(frozen=True, eq=False)
class StationaryPolicy:
    actions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "actions", _readonly(self.actions, np.int64))
        if self.actions.ndim != 1 or np.any(self.actions < 0):
            raise ArgumentError("stationary policy must be a 1-d array of action indices")

    def __call__(self, s: int) -> int:
        return int(self.actions[s])

    def __eq__(self, other):
        return isinstance(other, StationaryPolicy) and np.array_equal(self.actions, other.actions)

    def __hash__(self):
        return hash(self.actions.tobytes())

    def check(self, mdp: TabularMDP) -> None:
        if self.actions.shape != (mdp.n_states,) or np.any(self.actions >= mdp.n_actions):
            raise ArgumentError("policy is not defined on this MDP")


@dataclass(frozen=True, eq=False)
class TimePolicy:
    """Non-stationary policy; ``actions[h - 1, s]`` is the action in period h."""

    actions: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "actions", _readonly(self.actions, np.int64))
        if self.actions.ndim != 2 or np.any(self.actions < 0):
            raise ArgumentError("time policy must be an (H, S) array of action indices")

    @property
    def horizon(self) -> int:
        return self.actions.shape[0]

    def __call__(self, s: int, h: int) -> int:
        return int(self.actions[h - 1, s])

    def __eq__(self, other):
        return isinstance(other, TimePolicy) and np.array_equal(self.actions, other.actions)

    def __hash__(self):
        return hash(self.actions.tobytes())

    def check(self, mdp) -> None:
        if self.actions.shape[1] != mdp.n_states or np.any(self.actions >= mdp.n_actions):
            raise ArgumentError("policy is not defined on this MDP")


Policy = Union[StationaryPolicy, TimePolicy]


@dataclass(frozen=True, eq=False)
class Trajectory:
    """Interaction history with episode annotations.

    Step ``t`` (1-based) is ``(states[t-1], actions[t-1], rewards[t-1],
    next_states[t-1])``. Consecutive steps chain except at the resets of a
    finite-horizon run, where the next episode's state is redrawn.
    """

    start_state: int
    states: np.ndarray
    actions: np.ndarray
    rewards: np.ndarray
    next_states: np.ndarray
    episode_starts: tuple = (1,)

    def __post_init__(self):
        starts = tuple(int(x) for x in self.episode_starts)
        if not starts or starts[0] != 1 or any(b <= a for a, b in zip(starts, starts[1:])):
            raise ArgumentError("episode_starts must begin at 1 and strictly increase")
        if starts[-1] > len(self.states):
            raise ArgumentError("episode start beyond the end of the trajectory")
        object.__setattr__(self, "episode_starts", starts)

    @property
    def T(self) -> int:
        return len(self.states)

    @property
    def steps(self) -> Iterator[tuple[int, int, float, int]]:
        for s, a, r, s2 in zip(self.states.tolist(), self.actions.tolist(),
                               self.rewards.tolist(), self.next_states.tolist()):
            yield s, a, r, s2

    @property
    def n_episodes(self) -> int:
        return len(self.episode_starts)

    @property
    def episode_lengths(self) -> np.ndarray:
        bounds = np.append(np.asarray(self.episode_starts), self.T + 1)
        return np.diff(bounds)

    @property
    def episode_index(self) -> np.ndarray:
        """k(t) for t = 1..T, 1-based."""
        return np.repeat(np.arange(1, self.n_episodes + 1), self.episode_lengths)

    def prefix(self, t: int) -> "Trajectory":
        """The first ``t`` steps."""
        starts = tuple(x for x in self.episode_starts if x <= t)
        return Trajectory(self.start_state, self.states[:t], self.actions[:t],
                          self.rewards[:t], self.next_states[:t], starts)


def _check_sa(mdp: TabularMDP, s: int, a: int) -> None:
    if not 0 <= s < mdp.n_states:
        raise ArgumentError(f"state {s} out of range [0, {mdp.n_states})")
    if not 0 <= a < mdp.n_actions:
        raise ArgumentError(f"action {a} out of range [0, {mdp.n_actions})")


def step(mdp: TabularMDP, s: int, a: int, rng: np.random.Generator) -> tuple[float, int]:
    """Draw ``(reward, next_state)`` for one transition.

    Deterministic components consume no randomness, so replaying a
    deterministic MDP never advances ``rng``.
    """
    _check_sa(mdp, s, a)
    return mdp.dynamics.step(s, a, rng)


def simulate(mdp: Union[TabularMDP, FiniteHorizonMDP], policy: Policy,
             s1: Optional[int], T: int, rng: np.random.Generator) -> Trajectory:
    """Roll ``policy`` forward for exactly ``T`` steps.

    With a FiniteHorizonMDP the state is redrawn from the initial
    distribution every ``horizon`` steps (and at t=1 when ``s1`` is None).
    """
    if T < 1:
        raise ArgumentError("T must be at least 1")
    fh = isinstance(mdp, FiniteHorizonMDP)
    base = mdp.base if fh else mdp
    if isinstance(policy, TimePolicy) and not fh:
        raise ContractError("a TimePolicy needs a FiniteHorizonMDP to define its periods")
    policy.check(base)
    if s1 is None and not fh:
        raise ArgumentError("a start state is required for a plain TabularMDP")
    if s1 is not None and not 0 <= s1 < base.n_states:
        raise ArgumentError(f"start state {s1} out of range")

    dyn = base.dynamics
    H = mdp.horizon if fh else T + 1
    if fh:
        rho_cum = np.cumsum(mdp.initial_dist)
        rho_cum[np.flatnonzero(mdp.initial_dist > 0)[-1]:] = 1.0
        rho_cum = rho_cum.tolist()
    timed = isinstance(policy, TimePolicy)
    table = policy.actions.tolist()
    u = rng.random((T, 3 if fh else 2)).tolist()

    states, actions, rewards, nexts = [0] * T, [0] * T, [0.0] * T, [0] * T
    s = s1
    for t in range(T):
        h = t % H
        if h == 0 and (t > 0 or s is None):
            s = bisect_right(rho_cum, u[t][2])
        a = table[h][s] if timed else table[s]
        ut = u[t]
        r = dyn.reward(s, a, ut[0])
        s2 = dyn.next_state(s, a, ut[1])
        states[t], actions[t], rewards[t], nexts[t] = s, a, r, s2
        s = s2
    starts = tuple(range(1, T + 1, H)) if fh else (1,)
    return Trajectory(states[0], np.array(states), np.array(actions),
                      np.array(rewards), np.array(nexts), starts)


# --- connectedness -----------------------------------------------------------

@dataclass(frozen=True)
class ConnectednessReport:
    ergodic: bool
    unichain: bool
    communicating: bool
    weakly_communicating: bool
    witness: dict = field(default_factory=dict)
    method: str = "exhaustive"

    @property
    def flags(self) -> dict:
        return {"ergodic": self.ergodic, "unichain": self.unichain,
                "communicating": self.communicating,
                "weakly_communicating": self.weakly_communicating}


def _scc(adj: np.ndarray) -> tuple[int, np.ndarray]:
    return connected_components(csr_matrix(adj), directed=True, connection="strong")


def _closed_class_count(adj: np.ndarray) -> tuple[int, int]:
    n, labels = _scc(adj)
    src, dst = np.nonzero(adj)
    leaving = labels[src] != labels[dst]
    return n, n - np.unique(labels[src[leaving]]).size


def end_components(mdp: TabularMDP) -> list[frozenset]:
    """Maximal end components: state sets some policy can keep closed and strongly connected."""
    S, A = mdp.n_states, mdp.n_actions
    support = mdp.transitions > 0
    allowed = np.ones((S, A), dtype=bool)
    while True:
        alive = allowed.any(axis=1)
        adj = np.zeros((S, S), dtype=bool)
        for s in np.flatnonzero(alive):
            adj[s] = support[s, allowed[s]].any(axis=0)
        _, labels = _scc(adj)
        changed = False
        for s in np.flatnonzero(alive):
            for a in np.flatnonzero(allowed[s]):
                targets = np.flatnonzero(support[s, a])
                if np.any(~alive[targets]) or np.any(labels[targets] != labels[s]):
                    allowed[s, a] = False
                    changed = True
        if not changed:
            break
    alive = allowed.any(axis=1)
    comps = {}
    for s in np.flatnonzero(alive):
        comps.setdefault(labels[s], set()).add(int(s))
    return [frozenset(c) for c in comps.values()]


def union_graph(mdp: TabularMDP) -> np.ndarray:
    return np.any(mdp.transitions > 0, axis=1)


def _weakly_communicating(mdp: TabularMDP, labels: np.ndarray) -> tuple[bool, Optional[str]]:
    ecs = end_components(mdp)
    recurrent = sorted(set().union(*ecs))
    classes = sorted({int(labels[s]) for s in recurrent})
    if len(classes) <= 1:
        return True, None
    a = next(s for s in recurrent if labels[s] == classes[0])
    b = next(s for s in recurrent if labels[s] == classes[1])
    return False, (f"states {a} and {b} are each recurrent under some policy "
                   f"but not mutually reachable")


def is_weakly_communicating(mdp: TabularMDP) -> bool:
    _, labels = _scc(union_graph(mdp))
    return _weakly_communicating(mdp, labels)[0]


def classify(mdp: TabularMDP, policy_cap: int = 10**6) -> ConnectednessReport:
    """Decide the four connectedness classes.

    Communicating and weakly communicating are exact graph computations.
    Ergodic and unichain quantify over all A**S deterministic stationary
    policies; when that exceeds ``policy_cap`` the report is marked
    ``capped`` and the flags only say that no violation was found among
    min(policy_cap, 4096) policies drawn with seed 0.
    """
    S, A = mdp.n_states, mdp.n_actions
    witness = {}
    graph = union_graph(mdp)
    n_comp, labels = _scc(graph)
    communicating = n_comp == 1
    if not communicating:
        a = 0
        b = next(s for s in range(S) if labels[s] != labels[0])
        reach = _reachable(graph, a)
        if reach[b]:
            a, b = b, a
        witness["communicating"] = f"no policy reaches state {b} from state {a}"
    weak, why = _weakly_communicating(mdp, labels)
    if why:
        witness["weakly_communicating"] = why

    n_policies = A ** S
    if n_policies <= policy_cap:
        method = "exhaustive"
        policies = itertools.product(range(A), repeat=S)
    else:
        method = "capped"
        rng = np.random.default_rng(0)
        policies = (tuple(p) for p in rng.integers(0, A, size=(min(policy_cap, CAPPED_SAMPLE), S)))

    support = mdp.transitions > 0
    ergodic = unichain = True
    idx = np.arange(S)
    for pol in policies:
        adj = support[idx, list(pol)]
        n, closed = _closed_class_count(adj)
        if ergodic and n > 1:
            ergodic = False
            witness["ergodic"] = f"policy {list(pol)} induces {n} communicating classes"
        if closed > 1:
            unichain = False
            witness["unichain"] = f"policy {list(pol)} induces {closed} recurrent classes"
            break
    return ConnectednessReport(ergodic, unichain, communicating, weak, witness, method)


def _reachable(adj: np.ndarray, start: int) -> np.ndarray:
    seen = np.zeros(adj.shape[0], dtype=bool)
    stack = [start]
    seen[start] = True
    while stack:
        s = stack.pop()
        for s2 in np.flatnonzero(adj[s] & ~seen):
            seen[s2] = True
            stack.append(int(s2))
    return seen
