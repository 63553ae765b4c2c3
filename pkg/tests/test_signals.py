import numpy as np
import pytest

from regretlab import FixedLength, Never, RewardThreshold, VisitCountDoubling, signal_eval
from regretlab.errors import ConfigError
from regretlab.signals import EpisodeTracker, replay_boundaries, signal_from_json


def tracker_after(steps, S=2, A=2):
    tr = EpisodeTracker(S, A)
    for s, a, r in steps:
        tr.record(s, a, r)
    return tr


def test_reward_threshold_fires_on_first_reward():
    assert signal_eval(RewardThreshold(1, 1000), tracker_after([(0, 0, 1.0)]))
    assert not signal_eval(RewardThreshold(1, 1000), tracker_after([(0, 0, 0.0)]))


def test_reward_threshold_fires_at_h_max():
    tr = tracker_after([(0, 0, 0.0)] * 3)
    assert signal_eval(RewardThreshold(1, 3), tr)
    assert not signal_eval(RewardThreshold(1, 4), tr)


def test_fixed_length():
    assert not signal_eval(FixedLength(5), tracker_after([(0, 0, 0.0)] * 4))
    assert signal_eval(FixedLength(5), tracker_after([(0, 0, 0.0)] * 5))


def test_visit_count_doubling():
    tr = EpisodeTracker(2, 2)
    for _ in range(4):
        tr.record(1, 1, 0.0)
    tr.new_episode()
    for _ in range(3):
        tr.record(1, 1, 0.0)
    assert not signal_eval(VisitCountDoubling(), tr)
    tr.record(1, 1, 0.0)
    assert signal_eval(VisitCountDoubling(), tr)


def test_doubling_fires_on_first_visit_of_new_pair():
    tr = EpisodeTracker(2, 2)
    tr.record(0, 0, 0.0)
    assert signal_eval(VisitCountDoubling(), tr)


def test_never():
    assert not signal_eval(Never(), tracker_after([(0, 0, 1.0)] * 50))


@pytest.mark.parametrize("sig", [FixedLength(3), VisitCountDoubling(), RewardThreshold(0.5, 7), Never()])
def test_json_round_trip(sig):
    assert signal_from_json(sig.to_json()) == sig


def test_json_errors_carry_paths():
    with pytest.raises(ConfigError, match="agent.signal.H"):
        signal_from_json({"kind": "fixed_length"}, "agent.signal")
    with pytest.raises(ConfigError, match="kind"):
        signal_from_json({"kind": "sometimes"})


def test_replay_on_synthetic_trajectory():
    from regretlab import Trajectory
    rewards = np.array([0, 0, 1, 0, 1, 1, 0], dtype=float)
    tr = Trajectory(0, np.zeros(7, int), np.zeros(7, int), rewards, np.zeros(7, int))
    assert replay_boundaries(tr, RewardThreshold(1, 10), 1, 1) == (1, 4, 6, 7)
