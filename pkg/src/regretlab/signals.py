"""Episode signals: predicates on within-episode statistics that end an episode."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import ArgumentError, ConfigError


class EpisodeTracker:
    """Mutable within-episode statistics, updated after every step."""

    def __init__(self, n_states: int, n_actions: int):
        self.elapsed = 0
        self.reward = 0.0
        self.visits_before = np.zeros((n_states, n_actions), dtype=np.int64)
        self.visits_within = np.zeros((n_states, n_actions), dtype=np.int64)

    def record(self, s: int, a: int, r: float) -> None:
        self.elapsed += 1
        self.reward += r
        self.visits_within[s, a] += 1

    def new_episode(self) -> None:
        self.visits_before += self.visits_within
        self.visits_within[:] = 0
        self.elapsed = 0
        self.reward = 0.0

    def snapshot(self) -> "EpisodeStats":
        return EpisodeStats(self.elapsed, self.reward, self.visits_before.copy(),
                            self.visits_within.copy())


@dataclass(frozen=True)
class EpisodeStats:
    elapsed: int
    reward: float
    visits_before: np.ndarray
    visits_within: np.ndarray


class EpisodeSignal:
    kind = "abstract"

    def fires(self, stats) -> bool:
        raise NotImplementedError

    def to_json(self) -> dict:
        return {"kind": self.kind}


@dataclass(frozen=True)
class FixedLength(EpisodeSignal):
    H: int
    kind = "fixed_length"

    def __post_init__(self):
        if self.H < 1:
            raise ArgumentError("episode length must be at least 1")

    def fires(self, stats) -> bool:
        return stats.elapsed >= self.H

    def to_json(self) -> dict:
        return {"kind": self.kind, "H": self.H}


@dataclass(frozen=True)
class VisitCountDoubling(EpisodeSignal):
    """Ends the episode once some pair's in-episode visits reach max(1, visits before it)."""

    kind = "visit_count_doubling"

    def fires(self, stats) -> bool:
        return bool(np.any(stats.visits_within >= np.maximum(1, stats.visits_before)))


@dataclass(frozen=True)
class RewardThreshold(EpisodeSignal):
    """Ends the episode once its cumulative reward reaches ``threshold`` or it lasts ``h_max`` steps."""

    threshold: float
    h_max: int
    kind = "reward_threshold"

    def __post_init__(self):
        if self.h_max < 1:
            raise ArgumentError("h_max must be at least 1")

    def fires(self, stats) -> bool:
        return stats.reward >= self.threshold or stats.elapsed >= self.h_max

    def to_json(self) -> dict:
        return {"kind": self.kind, "threshold": self.threshold, "h_max": self.h_max}


@dataclass(frozen=True)
class Never(EpisodeSignal):
    kind = "never"

    def fires(self, stats) -> bool:
        return False


def signal_eval(signal: EpisodeSignal, stats) -> bool:
    return signal.fires(stats)


def signal_from_json(obj, where: str = "signal") -> EpisodeSignal:
    if not isinstance(obj, dict):
        raise ConfigError(where, "expected an object with a 'kind' field")
    kind = obj.get("kind")
    try:
        if kind == "fixed_length":
            return FixedLength(int(obj["H"]))
        if kind == "visit_count_doubling":
            return VisitCountDoubling()
        if kind == "reward_threshold":
            return RewardThreshold(float(obj.get("threshold", 1.0)), int(obj["h_max"]))
        if kind == "never":
            return Never()
    except KeyError as exc:
        raise ConfigError(f"{where}.{exc.args[0]}", "missing field") from None
    except (TypeError, ValueError) as exc:
        raise ConfigError(where, str(exc)) from None
    raise ConfigError(f"{where}.kind", f"unknown signal {kind!r}")


def replay_boundaries(traj, signal: EpisodeSignal, n_states: int, n_actions: int) -> tuple:
    """Episode starts implied by applying ``signal`` to the trajectory's own statistics."""
    tracker = EpisodeTracker(n_states, n_actions)
    starts = [1]
    for t, (s, a, r, _) in enumerate(traj.steps, start=1):
        tracker.record(s, a, r)
        if signal.fires(tracker):
            tracker.new_episode()
            if t < traj.T:
                starts.append(t + 1)
    return tuple(starts)
