import itertools
from fractions import Fraction

import numpy as np
import pytest

from regretlab import TabularMDP


def dyadic_mdp(S, A, rng, units=8, reward_units=16):
    """Random MDP whose probabilities and rewards are small dyadic rationals,
    so float dynamic programming on it is exact."""
    P = np.zeros((S, A, S))
    for s in range(S):
        for a in range(A):
            cuts = np.sort(rng.integers(0, units + 1, size=S - 1))
            parts = np.diff(np.concatenate([[0], cuts, [units]]))
            P[s, a] = parts / units
    R = rng.integers(0, reward_units + 1, size=(S, A)) / reward_units
    return TabularMDP(P, R, False)


def enumerate_time_policy_values(mdp, H):
    """Best H-step value per start state over every time policy, in exact rationals."""
    S, A = mdp.n_states, mdp.n_actions
    P = [[[Fraction(x) for x in row] for row in rows] for rows in mdp.transitions.tolist()]
    R = [[Fraction(x) for x in row] for row in mdp.reward_mean.tolist()]
    best = [None] * S
    for flat in itertools.product(range(A), repeat=S * H):
        pol = [flat[h * S:(h + 1) * S] for h in range(H)]
        v = [Fraction(0)] * S
        for h in range(H - 1, -1, -1):
            v = [R[s][pol[h][s]] + sum(P[s][pol[h][s]][j] * v[j] for j in range(S))
                 for s in range(S)]
        best = [x if b is None or x > b else b for x, b in zip(v, best)]
    return best


@pytest.fixture
def rng():
    return np.random.default_rng(12345)
