from fractions import Fraction

import pytest

from regretlab import InsufficientDataError, exact_counterexample, exact_heaven_hell
from regretlab.belief import heaven_hell_prior, two_point_prior
from regretlab.oracles import (counterexample_closed_form, exact_sums, fixed_length_scheme,
                               gain_at, lemma1_check, reward_threshold_scheme)
from regretlab.signals import FixedLength, RewardThreshold


class TestCounterexample:
    def test_large_instance(self):
        assert exact_counterexample(1000, 1000, Fraction(1, 2)) == (Fraction(-999, 4), Fraction(999, 4))

    def test_small_instance(self):
        assert exact_counterexample(2, 2) == (Fraction(-1, 4), Fraction(1, 4))

    def test_point_mass(self):
        assert exact_counterexample(10, 10, 1) == (0, 0)

    @pytest.mark.parametrize("h_max", range(2, 51))
    def test_closed_form(self, h_max):
        signed, absolute = exact_counterexample(h_max, h_max)
        assert absolute == Fraction(h_max, 4) - Fraction(1, 4)
        assert signed == -absolute == counterexample_closed_form(h_max, h_max)

    @pytest.mark.parametrize("h_max,T,p", [(5, 3, Fraction(1, 3)), (4, 9, Fraction(3, 4)), (7, 7, 0)])
    def test_closed_form_general(self, h_max, T, p):
        assert exact_counterexample(h_max, T, p)[0] == counterexample_closed_form(h_max, T, p)


class TestHeavenHell:
    @pytest.mark.parametrize("T", [1, 10, 1000])
    def test_half_T(self, T):
        assert exact_heaven_hell(T, Fraction(1, 2)) == Fraction(T, 2)

    def test_known_arm(self):
        assert exact_heaven_hell(50, 1) == 0

    @pytest.mark.parametrize("p", [Fraction(1, 3), Fraction(9, 10)])
    @pytest.mark.parametrize("H", [1, 3])
    def test_formula(self, p, H):
        assert exact_heaven_hell(12, p, H) == 2 * p * (1 - p) * 12

    def test_regret_and_gap_for_fixed_length(self):
        res = exact_sums(two_point_prior(0.5), FixedLength(1), 10)
        assert res.regret == 0  # one action only, so nothing is lost
        assert res.optimism_gap == Fraction(0)


class TestLemmaCheck:
    def test_point_mass(self):
        res = lemma1_check(two_point_prior(1.0), fixed_length_scheme(), gain_at(0), 1000)
        assert res.statistic == 0 and res.p_value == 1

    def test_measurable_conditioning_does_not_reject(self):
        res = lemma1_check(two_point_prior(0.5), fixed_length_scheme(), gain_at(0), 2000, seed=1)
        assert res.p_value > 0.01 and res.dof == 1

    def test_selected_stratum_is_biased(self):
        res = lemma1_check(two_point_prior(0.5), reward_threshold_scheme(h_max=50, T=50),
                           gain_at(0), 2000, seed=2)
        assert res.p_value < 0.01 and abs(res.mean_difference) > 0.4

    def test_small_strata(self):
        with pytest.raises(InsufficientDataError):
            lemma1_check(heaven_hell_prior(0.5), fixed_length_scheme(1, 3, episode=2),
                         gain_at(0), 40)
