"""Beliefs over MDPs: finite-support mixtures and independent Dirichlet/Beta posteriors."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple, Optional, Sequence, Union

import numpy as np

from .envs import heaven_hell, mdp_from_json, mdp_to_json, two_point_bandit
from .errors import ArgumentError, InconsistentObservationError
from .mdp import TabularMDP

POINT_MATCH_TOL = 1e-9


class Observation(NamedTuple):
    state: int
    action: int
    reward: float
    next_state: int


def normalize(w: np.ndarray) -> np.ndarray:
    return w / w.sum()


def draw_index(weights: np.ndarray, rng: np.random.Generator) -> int:
    """Draw an index with the given probabilities.

    A degenerate vector returns its single support point without touching
    ``rng``.
    """
    nz = np.flatnonzero(weights > 0)
    if nz.size == 1:
        return int(nz[0])
    i = int(np.searchsorted(np.cumsum(weights), rng.random(), side="right"))
    return min(i, int(nz[-1]))


class FiniteSupportBelief:
    """Mixture over explicit MDP hypotheses.

    The posterior is kept as prior weights times a likelihood vector
    rescaled to max 1, so 0/1 likelihood updates stay exact.
    """

    def __init__(self, atoms: Sequence[TabularMDP], prior, likelihood=None):
        atoms = tuple(atoms)
        if not atoms:
            raise ArgumentError("a finite-support belief needs at least one atom")
        shape = (atoms[0].n_states, atoms[0].n_actions)
        if any((m.n_states, m.n_actions) != shape for m in atoms):
            raise ArgumentError("all atoms must share the same state and action counts")
        prior = np.asarray(prior, dtype=float)
        if prior.shape != (len(atoms),) or np.any(prior < 0) or abs(prior.sum() - 1.0) > 1e-12:
            raise ArgumentError("prior weights must be a probability vector over the atoms")
        self.atoms = atoms
        self.prior = prior
        self.likelihood = np.ones(len(atoms)) if likelihood is None else np.asarray(likelihood, float)

    @classmethod
    def _derived(cls, parent: "FiniteSupportBelief", likelihood: np.ndarray) -> "FiniteSupportBelief":
        out = cls.__new__(cls)
        out.atoms, out.prior, out.likelihood = parent.atoms, parent.prior, likelihood
        out.__dict__.update({k: parent.__dict__[k] for k in ("_stack",) if k in parent.__dict__})
        return out

    @property
    def n_states(self) -> int:
        return self.atoms[0].n_states

    @property
    def n_actions(self) -> int:
        return self.atoms[0].n_actions

    @property
    def weights(self) -> np.ndarray:
        return normalize(self.prior * self.likelihood)

    @cached_property
    def _stack(self):
        P = np.stack([m.transitions for m in self.atoms])
        R = np.stack([m.reward_mean for m in self.atoms])
        B = np.stack([m.reward_bernoulli for m in self.atoms])
        return P, R, B

    @property
    def deterministic(self) -> bool:
        return all(m.deterministic for m in self.atoms)

    def observation_likelihood(self, obs: Observation) -> np.ndarray:
        P, R, B = self._stack
        s, a, r, s2 = obs
        mean = R[:, s, a]
        if r == 1.0:
            bern = mean
        elif r == 0.0:
            bern = 1.0 - mean
        else:
            bern = np.zeros_like(mean)
        point = (np.abs(r - mean) <= POINT_MATCH_TOL).astype(float)
        return np.where(B[:, s, a], bern, point) * P[:, s, a, s2]

    def updated(self, obs: Observation, rng=None) -> "FiniteSupportBelief":
        lik = self.likelihood * self.observation_likelihood(obs)
        if not np.any(self.prior * lik > 0):
            raise InconsistentObservationError(f"observation {tuple(obs)} is impossible under every atom")
        return FiniteSupportBelief._derived(self, lik / lik.max())

    def sample(self, rng: np.random.Generator) -> TabularMDP:
        return self.atoms[self.sample_index(rng)]

    def sample_index(self, rng: np.random.Generator) -> int:
        return draw_index(self.weights, rng)

    def mean(self) -> TabularMDP:
        P, R, B = self._stack
        w = self.weights
        Pm = np.tensordot(w, P, axes=1)
        Pm /= Pm.sum(axis=2, keepdims=True)
        Rm = np.clip(np.tensordot(w, R, axes=1), 0.0, 1.0)
        return TabularMDP(Pm, Rm, B.any(axis=0), name="posterior_mean")

    def to_json(self) -> dict:
        return {"kind": "finite", "atoms": [mdp_to_json(m) for m in self.atoms],
                "prior": self.prior.tolist(), "likelihood": self.likelihood.tolist()}


class ConjugateBelief:
    """Independent Dirichlet(next state) and Beta(reward mean) per state-action.

    ``absorb`` mutates in place and is meant for a belief owned by a single
    agent; ``updated`` returns a new belief.
    """

    def __init__(self, dirichlet, alpha, beta):
        self.dirichlet = np.array(dirichlet, dtype=float)
        self.alpha = np.array(alpha, dtype=float)
        self.beta = np.array(beta, dtype=float)
        S, A = self.dirichlet.shape[:2]
        if self.dirichlet.shape != (S, A, S) or self.alpha.shape != (S, A) or self.beta.shape != (S, A):
            raise ArgumentError("conjugate belief needs (S, A, S) counts and (S, A) Beta parameters")
        if np.any(self.dirichlet <= 0) or np.any(self.alpha <= 0) or np.any(self.beta <= 0):
            raise ArgumentError("conjugate parameters must be strictly positive")

    @property
    def n_states(self) -> int:
        return self.dirichlet.shape[0]

    @property
    def n_actions(self) -> int:
        return self.dirichlet.shape[1]

    deterministic = False

    def copy(self) -> "ConjugateBelief":
        return ConjugateBelief(self.dirichlet, self.alpha, self.beta)

    def absorb(self, obs: Observation, rng: Optional[np.random.Generator] = None) -> None:
        s, a, r, s2 = obs
        if not 0.0 <= r <= 1.0:
            raise ArgumentError(f"reward {r} outside [0, 1]")
        if r not in (0.0, 1.0):
            # randomized rounding keeps the Beta update exact and unbiased
            if rng is None:
                raise ArgumentError("a non-binary reward needs an rng for randomized rounding")
            r = 1.0 if rng.random() < r else 0.0
        self.dirichlet[s, a, s2] += 1.0
        self.alpha[s, a] += r
        self.beta[s, a] += 1.0 - r

    def updated(self, obs: Observation, rng=None) -> "ConjugateBelief":
        out = self.copy()
        out.absorb(obs, rng)
        return out

    def sample(self, rng: np.random.Generator) -> TabularMDP:
        g = rng.standard_gamma(self.dirichlet)
        tot = g.sum(axis=2, keepdims=True)
        P = np.where(tot > 0, g / np.where(tot > 0, tot, 1.0), 1.0 / self.n_states)
        R = rng.beta(self.alpha, self.beta)
        return TabularMDP(P, R, True, name="posterior_sample")

    def mean(self) -> TabularMDP:
        P = self.dirichlet / self.dirichlet.sum(axis=2, keepdims=True)
        return TabularMDP(P, self.alpha / (self.alpha + self.beta), True, name="posterior_mean")

    def to_json(self) -> dict:
        return {"kind": "conjugate", "dirichlet": self.dirichlet.tolist(),
                "alpha": self.alpha.tolist(), "beta": self.beta.tolist()}


Belief = Union[FiniteSupportBelief, ConjugateBelief]


def posterior_update(belief: Belief, obs: Observation, rng=None) -> Belief:
    """Condition on one observation; the input belief is left untouched."""
    s, a, r, s2 = obs
    if not (0 <= s < belief.n_states and 0 <= s2 < belief.n_states and 0 <= a < belief.n_actions):
        raise ArgumentError(f"observation {tuple(obs)} out of range")
    if not 0.0 <= r <= 1.0:
        raise ArgumentError(f"reward {r} outside [0, 1]")
    return belief.updated(Observation(*obs), rng)


def sample_mdp(belief: Belief, rng: np.random.Generator) -> TabularMDP:
    return belief.sample(rng)


def posterior_mean(belief: Belief) -> TabularMDP:
    return belief.mean()


def belief_from_json(obj: dict) -> Belief:
    kind = obj.get("kind")
    if kind == "finite":
        atoms = [mdp_from_json(m, f"atoms[{i}].") for i, m in enumerate(obj["atoms"])]
        return FiniteSupportBelief(atoms, obj["prior"], obj.get("likelihood"))
    if kind == "conjugate":
        return ConjugateBelief(obj["dirichlet"], obj["alpha"], obj["beta"])
    raise ArgumentError(f"unknown belief kind {kind!r}")


# --- priors -------------------------------------------------------------------

def conjugate_prior(n_states: int, n_actions: int, transition: float = 1.0,
                    alpha: float = 1.0, beta: float = 1.0) -> ConjugateBelief:
    return ConjugateBelief(np.full((n_states, n_actions, n_states), transition),
                           np.full((n_states, n_actions), alpha),
                           np.full((n_states, n_actions), beta))


def two_point_prior(p: float = 0.5) -> FiniteSupportBelief:
    """Single-state bandit with deterministic reward 1 w.p. ``p`` and 0 otherwise."""
    return FiniteSupportBelief([two_point_bandit(0), two_point_bandit(1)], [1.0 - p, p])


def heaven_hell_prior(p: float = 0.5, entry_reward: bool = True) -> FiniteSupportBelief:
    """Heaven is s1 with probability ``p`` and s2 otherwise."""
    return FiniteSupportBelief([heaven_hell(1, entry_reward), heaven_hell(2, entry_reward)],
                               [p, 1.0 - p])
