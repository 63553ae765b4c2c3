"""Learning agents: episodic PSRL, lazy PSRL, optimistic RL and smoothed PSRL.

Every agent exposes ``act(s)`` and ``observe(s, a, r, s2)``; a new episode
starts at the first ``act`` after the agent's signal fired.
"""
from __future__ import annotations

import logging
import math
from dataclasses import dataclass
from typing import Callable, Optional, Union

import numpy as np

from .belief import Belief, ConjugateBelief, FiniteSupportBelief, Observation
from .errors import ArgumentError, ContractError, NumericalError
from .mdp import StationaryPolicy, TabularMDP, TimePolicy
from .planner import (ConfidenceSet, _backward, extended_value_iteration, optimal_gain,
                      ucrl2_confidence_set)
from .signals import EpisodeSignal, EpisodeTracker, FixedLength, VisitCountDoubling

log = logging.getLogger(__name__)

MAX_RESAMPLES = 10


@dataclass
class EpisodeLog:
    """What an agent committed to at the start of one episode."""

    k: int
    start: int
    start_state: int
    policy: Union[StationaryPolicy, TimePolicy]
    sampled: Optional[TabularMDP] = None
    sampled_gain: Optional[float] = None
    sampled_value: Optional[float] = None
    confidence_set: Optional[ConfidenceSet] = None
    atom: Optional[int] = None
    length: int = 0


class Agent:
    signal: EpisodeSignal

    def __init__(self, n_states: int, n_actions: int, signal: EpisodeSignal,
                 rng: np.random.Generator):
        self.n_states, self.n_actions = n_states, n_actions
        self.signal = signal
        self.rng = rng
        self.tracker = EpisodeTracker(n_states, n_actions)
        self.episodes: list[EpisodeLog] = []
        self.t = 0
        self._pending = True

    def act(self, s: int) -> int:
        self.t += 1
        if self._pending:
            self._pending = False
            self.episodes.append(self._begin(s))
        return self._action(s)

    def observe(self, s: int, a: int, r: float, s2: int) -> None:
        self._learn(Observation(s, a, r, s2))
        self.episodes[-1].length += 1
        self.tracker.record(s, a, r)
        if self.signal.fires(self.tracker):
            self.tracker.new_episode()
            self._pending = True

    def _begin(self, s: int) -> EpisodeLog:
        raise NotImplementedError

    def _action(self, s: int) -> int:
        raise NotImplementedError

    def _learn(self, obs: Observation) -> None:
        raise NotImplementedError


class _PosteriorAgent(Agent):
    def __init__(self, belief: Belief, signal: EpisodeSignal, rng: np.random.Generator):
        super().__init__(belief.n_states, belief.n_actions, signal, rng)
        self.belief = belief.copy() if isinstance(belief, ConjugateBelief) else belief
        self._plans = {}

    def _learn(self, obs: Observation) -> None:
        if isinstance(self.belief, ConjugateBelief):
            self.belief.absorb(obs, self.rng)
        else:
            self.belief = self.belief.updated(obs)

    def _draw(self) -> tuple[TabularMDP, Optional[int]]:
        if isinstance(self.belief, FiniteSupportBelief):
            i = self.belief.sample_index(self.rng)
            return self.belief.atoms[i], i
        return self.belief.sample(self.rng), None


class PSRL(_PosteriorAgent):
    """Samples an MDP every ``H`` steps and follows its H-step optimal time policy.

    On an environment without resets the episodes are artificial: the state
    simply carries over into the next episode.
    """

    def __init__(self, belief: Belief, H: int, rng: np.random.Generator):
        if H < 1:
            raise ArgumentError("H must be at least 1")
        super().__init__(belief, FixedLength(H), rng)
        self.H = H

    def _begin(self, s: int) -> EpisodeLog:
        mdp, atom = self._draw()
        plan = self._plans.get(atom) if atom is not None else None
        if plan is None:
            _, v, pi = _backward(mdp.transitions, mdp.reward_mean, self.H)
            plan = (TimePolicy(pi), v[0])
            if atom is not None:
                self._plans[atom] = plan
        self._policy = plan[0].actions.tolist()
        return EpisodeLog(len(self.episodes) + 1, self.t, s, plan[0], mdp,
                          sampled_value=float(plan[1][s]), atom=atom)

    def _action(self, s: int) -> int:
        return self._policy[self.tracker.elapsed][s]


class LazyPSRL(_PosteriorAgent):
    """Samples an MDP at each episode start and follows its gain-optimal policy
    until ``signal`` fires."""

    def __init__(self, belief: Belief, signal: EpisodeSignal, rng: np.random.Generator,
                 planner: str = "brute_force"):
        super().__init__(belief, signal, rng)
        self.planner = planner

    def _plan(self, mdp: TabularMDP, atom: Optional[int]):
        if atom is not None and atom in self._plans:
            return self._plans[atom]
        plan = optimal_gain(mdp, self.planner)
        if atom is not None:
            self._plans[atom] = plan
        return plan

    def _begin(self, s: int) -> EpisodeLog:
        for attempt in range(MAX_RESAMPLES):
            mdp, atom = self._draw()
            try:
                plan = self._plan(mdp, atom)
                break
            except (ContractError, NumericalError) as exc:
                log.warning("episode %d: planning failed on sample %d (%s); resampling",
                            len(self.episodes) + 1, attempt + 1, exc)
        else:
            log.warning("falling back to posterior-mean planning")
            mdp, atom = self.belief.mean(), None
            plan = optimal_gain(mdp, "brute_force")
        self._policy = plan.policy.actions.tolist()
        return EpisodeLog(len(self.episodes) + 1, self.t, s, plan.policy, mdp,
                          sampled_gain=plan.gain[s], atom=atom)

    def _action(self, s: int) -> int:
        return self._policy[s]


class OptimisticRL(Agent):
    """Plans for the most optimistic MDP in a confidence set built from visit counts."""

    def __init__(self, n_states: int, n_actions: int, rng: np.random.Generator,
                 signal: Optional[EpisodeSignal] = None, delta: float = 0.05,
                 constructor: Callable[..., ConfidenceSet] = ucrl2_confidence_set,
                 epsilon: Optional[float] = None):
        if not 0 < delta < 1:
            raise ArgumentError("delta must lie in (0, 1)")
        super().__init__(n_states, n_actions, signal or VisitCountDoubling(), rng)
        self.delta = delta
        self.constructor = constructor
        self.epsilon = epsilon
        self.counts = np.zeros((n_states, n_actions), dtype=np.int64)
        self.reward_sums = np.zeros((n_states, n_actions))
        self.transition_counts = np.zeros((n_states, n_actions, n_states), dtype=np.int64)

    def _begin(self, s: int) -> EpisodeLog:
        cs = self.constructor(self.counts, self.reward_sums, self.transition_counts,
                              self.t, self.delta)
        eps = self.epsilon if self.epsilon is not None else 1.0 / math.sqrt(self.t)
        res = extended_value_iteration(cs, eps)
        self._policy = res.policy.actions.tolist()
        return EpisodeLog(len(self.episodes) + 1, self.t, s, res.policy,
                          sampled_gain=res.gain, confidence_set=cs)

    def _action(self, s: int) -> int:
        return self._policy[s]

    def _learn(self, obs: Observation) -> None:
        s, a, r, s2 = obs
        self.counts[s, a] += 1
        self.reward_sums[s, a] += r
        self.transition_counts[s, a, s2] += 1


class SmoothedPSRL(_PosteriorAgent):
    """Resamples every step and acts greedily for an exponentially smoothed sample.

    Both transition rows and reward means follow
    ``smoothed <- gamma * smoothed + (1 - gamma) * sample``, started at the
    first sample. Replanning is skipped while the smoothed MDP has moved less
    than ``replan_tol`` (max abs entry) since the last plan.
    """

    def __init__(self, belief: Belief, gamma: float, rng: np.random.Generator,
                 replan_tol: float = 1e-6):
        if not 0 < gamma < 1:
            raise ArgumentError("gamma must lie in (0, 1)")
        super().__init__(belief, FixedLength(1), rng)
        self.gamma = gamma
        self.replan_tol = replan_tol
        self.P = self.R = None
        self._planned_at = None
        self._plan = None

    def _begin(self, s: int) -> EpisodeLog:
        sample, atom = self._draw()
        if self.P is None:
            P, R = sample.transitions.copy(), sample.reward_mean.copy()
        else:
            # same convex blend, written so a fixed point is reproduced exactly
            P = self.P + (1.0 - self.gamma) * (sample.transitions - self.P)
            R = self.R + (1.0 - self.gamma) * (sample.reward_mean - self.R)
            moved = np.abs(P - self.P).sum(axis=2).max()
            if moved > 2.0 * (1.0 - self.gamma) + 1e-12:
                raise NumericalError(f"smoothed row moved {moved} in L1, above 2(1 - gamma)")
            P /= P.sum(axis=2, keepdims=True)
        self.P, self.R = P, R
        smoothed = TabularMDP(P, np.clip(R, 0.0, 1.0), sample.reward_bernoulli, name="smoothed")
        stale = (self._planned_at is None
                 or max(np.abs(P - self._planned_at[0]).max(),
                        np.abs(R - self._planned_at[1]).max()) > self.replan_tol)
        if stale:
            self._plan = optimal_gain(smoothed, "brute_force")
            self._planned_at = (P, R)
        self._policy = self._plan.policy.actions.tolist()
        return EpisodeLog(len(self.episodes) + 1, self.t, s, self._plan.policy, smoothed,
                          sampled_gain=self._plan.gain[s], atom=atom)

    def _action(self, s: int) -> int:
        return self._policy[s]


def make_agent(spec: dict, belief: Optional[Belief], n_states: int, n_actions: int,
               rng: np.random.Generator) -> Agent:
    """Instantiate an agent from its configuration block."""
    from .signals import signal_from_json

    kind = spec["agent"]
    signal = signal_from_json(spec["signal"], "agent.signal") if "signal" in spec else None
    if kind == "psrl":
        return PSRL(belief, int(spec["H"]), rng)
    if kind == "lazy_psrl":
        if signal is None:
            signal = FixedLength(int(spec["H"])) if "H" in spec else VisitCountDoubling()
        return LazyPSRL(belief, signal, rng, spec.get("planner", "brute_force"))
    if kind == "ofu":
        return OptimisticRL(n_states, n_actions, rng, signal, float(spec.get("delta", 0.05)),
                            epsilon=spec.get("epsilon"))
    if kind == "smoothed_psrl":
        return SmoothedPSRL(belief, float(spec["gamma"]), rng)
    raise ArgumentError(f"unknown agent {kind!r}")
