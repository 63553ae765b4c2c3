"""Built-in environments and the MDP JSON file format."""
from __future__ import annotations

import json
from pathlib import Path
from typing import Any, Union

import numpy as np

from .errors import ArgumentError, ConfigError
from .mdp import ROW_TOL, FiniteHorizonMDP, TabularMDP


def heaven_hell(heaven: int = 1, entry_reward: bool = True, horizon: int | None = None):
    """Three states s0, s1, s2 and two actions; a1 leads to s1, a2 to s2.

    s1 and s2 are absorbing. The heaven state pays 1 per step forever, hell
    pays 0. With ``entry_reward`` the move from s0 into heaven already pays 1,
    so a correct first choice earns reward at every step and a wrong one
    earns nothing; without it s0 pays 0 under both actions.
    """
    if heaven not in (1, 2):
        raise ArgumentError("heaven must be 1 or 2")
    P = np.zeros((3, 2, 3))
    P[0, 0, 1] = P[0, 1, 2] = 1.0
    P[1, :, 1] = 1.0
    P[2, :, 2] = 1.0
    R = np.zeros((3, 2))
    R[heaven, :] = 1.0
    if entry_reward:
        R[0, heaven - 1] = 1.0
    mdp = TabularMDP(P, R, False, name=f"heaven_hell(heaven=s{heaven})")
    if horizon is not None:
        return FiniteHorizonMDP(mdp, horizon, np.array([1.0, 0.0, 0.0]))
    return mdp


def two_point_bandit(R: float = 1.0) -> TabularMDP:
    """One state, one action, deterministic reward R in {0, 1}."""
    if R not in (0, 1):
        raise ArgumentError("two_point_bandit reward must be 0 or 1")
    return TabularMDP(np.ones((1, 1, 1)), np.full((1, 1), float(R)), False,
                      name=f"two_point_bandit(R={int(R)})")


def chain(n: int = 3, p_right: float = 0.6, p_left: float = 0.1,
          small: float = 0.05, large: float = 0.95) -> TabularMDP:
    """River-swim style chain of ``n`` states.

    Action 0 drifts left deterministically; at state 0 it pays
    Bernoulli(``small``). Action 1 swims right against the current: it moves
    right w.p. ``p_right``, left w.p. ``p_left``, otherwise stays, and at the
    right end pays Bernoulli(``large``).
    """
    if n < 2:
        raise ArgumentError("chain needs at least 2 states")
    if p_right + p_left > 1 or min(p_right, p_left) < 0:
        raise ArgumentError("invalid swim probabilities")
    P = np.zeros((n, 2, n))
    for s in range(n):
        P[s, 0, max(s - 1, 0)] = 1.0
        P[s, 1, min(s + 1, n - 1)] += p_right
        P[s, 1, max(s - 1, 0)] += p_left
        P[s, 1, s] += 1.0 - p_right - p_left
    R = np.zeros((n, 2))
    R[0, 0] = small
    R[n - 1, 1] = large
    return TabularMDP(P, R, True, name=f"chain({n})")


def random_mdp(S: int = 3, A: int = 2, seed: int = 0, support: int | None = None,
               concentration: float = 1.0, reward: str = "bernoulli",
               horizon: int | None = None):
    """Random rows from a symmetric Dirichlet, optionally restricted to ``support`` next states."""
    rng = np.random.default_rng(seed)
    P = np.zeros((S, A, S))
    k = S if support is None else max(1, min(int(support), S))
    for s in range(S):
        for a in range(A):
            idx = rng.choice(S, size=k, replace=False)
            P[s, a, idx] = rng.dirichlet(np.full(k, concentration))
    P /= P.sum(axis=2, keepdims=True)
    R = rng.random((S, A))
    mdp = TabularMDP(P, R, reward == "bernoulli", name=f"random(S={S},A={A},seed={seed})")
    if horizon is not None:
        return FiniteHorizonMDP(mdp, horizon, np.full(S, 1.0 / S))
    return mdp


BUILDERS = {
    "heaven_hell": heaven_hell,
    "two_point_bandit": two_point_bandit,
    "chain": chain,
    "random": random_mdp,
}


def build_named_env(name: str, params: dict | None = None, **kwargs):
    if name not in BUILDERS:
        raise ArgumentError(f"unknown environment {name!r}; choose from {sorted(BUILDERS)}")
    merged = dict(params or {}, **kwargs)
    try:
        return BUILDERS[name](**merged)
    except TypeError as exc:
        raise ArgumentError(f"bad parameters for {name}: {exc}") from None


# --- JSON -----------------------------------------------------------------

def mdp_to_json(mdp: Union[TabularMDP, FiniteHorizonMDP]) -> dict:
    base = mdp.base if isinstance(mdp, FiniteHorizonMDP) else mdp
    out = {
        "n_states": base.n_states,
        "n_actions": base.n_actions,
        "transitions": base.transitions.tolist(),
        "rewards": [[{"kind": "bernoulli" if b else "point", "value": float(v)}
                     for v, b in zip(rv, rb)]
                    for rv, rb in zip(base.reward_mean, base.reward_bernoulli)],
    }
    if isinstance(mdp, FiniteHorizonMDP):
        out["horizon"] = mdp.horizon
        out["initial_dist"] = mdp.initial_dist.tolist()
    return out


def _expect(cond: bool, path: str, msg: str) -> None:
    if not cond:
        raise ConfigError(path, msg)


def _int_field(obj: dict, key: str, where: str) -> int:
    v = obj.get(key)
    _expect(isinstance(v, int) and not isinstance(v, bool) and v >= 1,
            f"{where}{key}", f"expected a positive integer, got {v!r}")
    return v


def _number(v: Any, path: str) -> float:
    _expect(isinstance(v, (int, float)) and not isinstance(v, bool) and np.isfinite(v),
            path, f"expected a number, got {v!r}")
    return float(v)


def mdp_from_json(obj: dict, where: str = ""):
    """Validate a decoded MDP document; errors carry a path such as ``transitions[1][0]``."""
    _expect(isinstance(obj, dict), where or "$", "MDP document must be an object")
    S = _int_field(obj, "n_states", where)
    A = _int_field(obj, "n_actions", where)
    trans = obj.get("transitions")
    _expect(isinstance(trans, list) and len(trans) == S, f"{where}transitions",
            f"expected {S} rows of actions")
    P = np.zeros((S, A, S))
    for s, rows in enumerate(trans):
        _expect(isinstance(rows, list) and len(rows) == A, f"{where}transitions[{s}]",
                f"expected {A} action rows")
        for a, row in enumerate(rows):
            path = f"{where}transitions[{s}][{a}]"
            _expect(isinstance(row, list) and len(row) == S, path, f"expected {S} probabilities")
            vals = [_number(v, f"{path}[{j}]") for j, v in enumerate(row)]
            _expect(min(vals) >= 0, path, "negative probability")
            _expect(abs(sum(vals) - 1.0) <= ROW_TOL, path, f"row sums to {sum(vals)!r}, expected 1")
            P[s, a] = vals
    rewards = obj.get("rewards")
    _expect(isinstance(rewards, list) and len(rewards) == S, f"{where}rewards",
            f"expected {S} rows")
    R = np.zeros((S, A))
    B = np.zeros((S, A), dtype=bool)
    for s, rows in enumerate(rewards):
        _expect(isinstance(rows, list) and len(rows) == A, f"{where}rewards[{s}]",
                f"expected {A} entries")
        for a, spec in enumerate(rows):
            path = f"{where}rewards[{s}][{a}]"
            _expect(isinstance(spec, dict), path, "expected {kind, value}")
            kind = spec.get("kind")
            _expect(kind in ("bernoulli", "point"), f"{path}.kind",
                    f"expected 'bernoulli' or 'point', got {kind!r}")
            v = _number(spec.get("value"), f"{path}.value")
            _expect(0.0 <= v <= 1.0, f"{path}.value", f"{v} outside [0, 1]")
            R[s, a], B[s, a] = v, kind == "bernoulli"
    mdp = TabularMDP(P, R, B, name=obj.get("name", ""))
    if "horizon" in obj or "initial_dist" in obj:
        H = _int_field(obj, "horizon", where)
        rho = obj.get("initial_dist")
        if rho is None:
            rho = [1.0 / S] * S
        _expect(isinstance(rho, list) and len(rho) == S, f"{where}initial_dist",
                f"expected {S} probabilities")
        vals = [_number(v, f"{where}initial_dist[{j}]") for j, v in enumerate(rho)]
        _expect(min(vals) >= 0 and abs(sum(vals) - 1.0) <= ROW_TOL, f"{where}initial_dist",
                "must be a probability vector")
        return FiniteHorizonMDP(mdp, H, np.array(vals))
    return mdp


def load_mdp(path: Union[str, Path]):
    try:
        obj = json.loads(Path(path).read_text())
    except json.JSONDecodeError as exc:
        raise ConfigError(str(path), f"line {exc.lineno}: {exc.msg}") from None
    return mdp_from_json(obj)


def save_mdp(mdp, path: Union[str, Path]) -> None:
    Path(path).write_text(json.dumps(mdp_to_json(mdp), indent=1))
