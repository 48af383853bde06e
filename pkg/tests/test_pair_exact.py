import itertools
import math

import numpy as np
import pytest

from sensq.constraints import KOutOfRangeError, QuantileBound, VectorBound
from sensq.pair_exact import (
    MC_BATCH,
    NotPairStudyError,
    SupportTooLargeError,
    exact_tail,
    mc_tail,
    pair_distribution,
    pair_tail_probability,
    select_pairs_quantile,
    worst_case_pair_law,
)
from sensq.scores import ScoreMatrix

from conftest import random_pair_scores


def pairs(gaps):
    return ScoreMatrix.from_sets([[0.0, g] for g in gaps], [0] * len(gaps))


class TestWorstCaseLaw:
    def test_bias_three(self):
        law = worst_case_pair_law(ScoreMatrix.from_sets([[1.0, -1.0]], [0]), 3.0)
        assert law.hi[0] == 1.0 and law.lo[0] == -1.0
        assert law.p_hi[0] == pytest.approx(0.75)

    def test_no_bias(self):
        law = worst_case_pair_law(pairs([1.0, 2.0]), 1.0)
        np.testing.assert_allclose(law.p_hi, [0.5, 0.5])

    def test_unbounded_is_point_mass(self):
        law = worst_case_pair_law(pairs([1.0]), math.inf)
        assert law.p_hi[0] == 1.0

    def test_requires_pairs(self):
        sm = ScoreMatrix.from_sets([[0.0, 1.0, 2.0]], [0])
        with pytest.raises(NotPairStudyError):
            worst_case_pair_law(sm, 2.0)


class TestSelection:
    def test_smallest_gaps(self):
        assert select_pairs_quantile(pairs([0.5, 2.0, 1.0]), 2).tolist() == [0, 2]

    def test_all(self):
        assert select_pairs_quantile(pairs([0.5, 2.0, 1.0]), 3).tolist() == [0, 1, 2]

    def test_ties_by_index(self):
        assert select_pairs_quantile(pairs([1.0, 1.0, 1.0]), 1).tolist() == [0]

    def test_k_range(self):
        with pytest.raises(KOutOfRangeError):
            select_pairs_quantile(pairs([1.0]), 2)


class TestTail:
    def test_sign_study(self, sign_study_scores):
        assert pair_tail_probability(sign_study_scores, QuantileBound(5, 1.0)).p == 0.03125

    def test_sign_study_quantile(self, sign_study_scores):
        assert pair_tail_probability(sign_study_scores, QuantileBound(3, 1.0)).p == pytest.approx(0.125)

    def test_sign_study_monte_carlo(self, sign_study_scores):
        res = pair_tail_probability(sign_study_scores, QuantileBound(5, 1.0), "monte_carlo", n_mc=100_000, seed=4)
        assert abs(res.p - 0.03125) <= 3 * math.sqrt(0.03125 * (1 - 0.03125) / 100_000)
        assert res.mc_stderr is not None

    def test_below_support_is_one(self):
        sm = ScoreMatrix.from_sets([[1.0, -1.0], [2.0, -2.0]], [1, 1])
        law = worst_case_pair_law(sm, 2.0)
        assert exact_tail(law, -10.0) == 1.0
        assert exact_tail(law, 3.5) == 0.0

    def test_distribution_sums_to_one(self):
        rng = np.random.default_rng(0)
        law = worst_case_pair_law(random_pair_scores(rng, 8), rng.uniform(1, 5, size=8))
        values, probs = pair_distribution(law)
        assert probs.sum() == pytest.approx(1.0)
        assert np.all(np.diff(values) > 0)

    def test_randomization_reduction(self):
        rng = np.random.default_rng(1)
        sm = random_pair_scores(rng, 6)
        per = sm.per_set()
        totals = np.array([sum(c) for c in itertools.product(*per)])
        expected = np.mean(totals >= sm.t_obs - 1e-12)
        assert pair_tail_probability(sm, QuantileBound(6, 1.0)).p == pytest.approx(expected, abs=1e-12)

    def test_vector_bound_matches_uniform_quantile(self):
        rng = np.random.default_rng(2)
        sm = random_pair_scores(rng, 5)
        a = pair_tail_probability(sm, VectorBound.uniform(2.5, 5)).p
        b = pair_tail_probability(sm, QuantileBound(5, 2.5)).p
        assert a == b

    def test_support_guard(self):
        sm = ScoreMatrix.from_sets([[0.0, 2.0**-j] for j in range(12)], [1] * 12)
        with pytest.raises(SupportTooLargeError):
            pair_tail_probability(sm, QuantileBound(12, 2.0), max_support=100)

    def test_unknown_method(self, sign_study_scores):
        with pytest.raises(ValueError):
            pair_tail_probability(sign_study_scores, QuantileBound(5, 1.0), method="bootstrap")


class TestMonteCarlo:
    def test_thread_count_does_not_change_result(self):
        rng = np.random.default_rng(3)
        law = worst_case_pair_law(random_pair_scores(rng, 30), 2.0)
        t = float(np.sum(law.hi)) * 0.5
        one = mc_tail(law, t, n_mc=3 * MC_BATCH + 17, seed=9, threads=1)
        many = mc_tail(law, t, n_mc=3 * MC_BATCH + 17, seed=9, threads=8)
        assert one.p == many.p

    def test_add_one(self):
        law = worst_case_pair_law(pairs([1.0]), 1.0)
        res = mc_tail(law, 10.0, n_mc=99, add_one=True)
        assert res.p == pytest.approx(1 / 100)

    def test_common_random_numbers_monotone(self):
        rng = np.random.default_rng(4)
        sm = random_pair_scores(rng, 20)
        ps = [pair_tail_probability(sm, QuantileBound(20, g), "monte_carlo", n_mc=20_000, seed=1).p
              for g in np.linspace(1, 6, 15)]
        assert all(b >= a for a, b in zip(ps, ps[1:]))
