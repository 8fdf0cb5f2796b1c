import itertools
import math
from fractions import Fraction

import numpy as np
import pytest
from scipy import stats

from approxtopk.core import AlgoParams, ParameterError
from approxtopk.planner import legal_bucket_counts
from approxtopk.recall import (
    HypergeometricSampler,
    RecallEstimate,
    buckets_improved,
    buckets_original,
    exact_expected_recall,
    exact_expected_recall_fraction,
    exact_expected_recall_uneven,
    hypergeom_pmf_exact,
    hypergeom_window,
    mc_expected_recall,
    mc_expected_recall_adaptive,
    recall_bound_improved,
    recall_bound_original,
    recall_bound_quartic,
)


def enumerated_recall(n, b, k, kp):
    """Average over every placement of the top-k positions; bucket = position % b."""
    total = Fraction(0)
    count = 0
    for pos in itertools.combinations(range(n), k):
        per = np.bincount(np.array(pos) % b, minlength=b)
        total += Fraction(int(np.minimum(per, kp).sum()), k)
        count += 1
    return total / count


def p(n, b, k, kp=1):
    return AlgoParams(n, b, kp, k, 1)


class TestExact:
    def test_eight_two(self):
        assert exact_expected_recall_fraction(p(8, 2, 2)) == Fraction(11, 14)
        assert exact_expected_recall(p(8, 2, 2)).value == pytest.approx(11 / 14, abs=1e-15)
        assert enumerated_recall(8, 2, 2, 1) == Fraction(11, 14)

    @pytest.mark.parametrize("n", [4, 6, 8, 9, 10])
    def test_enumeration_oracle(self, n):
        for b in (d for d in range(1, n + 1) if n % d == 0):
            for k in range(1, n + 1):
                for kp in range(1, k + 1):
                    if b * kp < k:
                        continue
                    want = enumerated_recall(n, b, k, kp)
                    assert exact_expected_recall_fraction(p(n, b, k, kp)) == want
                    got = exact_expected_recall(p(n, b, k, kp)).value
                    assert abs(got - float(want)) <= 1e-12

    def test_local_k_equal_k_is_one(self):
        est = exact_expected_recall(AlgoParams(262144, 128, 16, 16))
        assert est.value == 1.0
        assert est.method == "exact" and est.std_error is None

    @pytest.mark.parametrize(
        "cfg", [(4096, 128, 64, 1), (4096, 256, 300, 2), (15360, 512, 480, 3), (65536, 1024, 2048, 4)]
    )
    def test_float_matches_rational(self, cfg):
        n, b, k, kp = cfg
        want = float(exact_expected_recall_fraction(AlgoParams(n, b, kp, k)))
        assert exact_expected_recall(AlgoParams(n, b, kp, k)).value == pytest.approx(want, abs=1e-13)

    @pytest.mark.parametrize("cfg", [(262144, 8192, 1024, 1), (430080, 1792, 3360, 3), (2**31, 2**20, 4096, 2)])
    def test_matches_scipy(self, cfg):
        n, b, k, kp = cfg
        size = n // b
        r = np.arange(kp + 1, min(k, size) + 1)
        tail = np.sum((r - kp) * stats.hypergeom.pmf(r, n, k, size))
        want = 1 - b / k * tail
        assert exact_expected_recall(AlgoParams(n, b, kp, k)).value == pytest.approx(want, abs=1e-10)

    def test_table_row(self):
        v = exact_expected_recall(AlgoParams(262144, 8192, 1, 1024)).value
        assert abs(v - 0.942) <= 0.021

    def test_monotone_in_buckets_and_local_k(self):
        n, k = 262144, 1024
        for kp in (1, 2, 4):
            bs = sorted(b for b in legal_bucket_counts(n) if b * kp >= k)
            vals = [exact_expected_recall(AlgoParams(n, b, kp, k)).value for b in bs]
            assert all(x <= y + 1e-15 for x, y in zip(vals, vals[1:]))
        vals = [exact_expected_recall(AlgoParams(n, 512, kp, k)).value for kp in range(2, 12)]
        assert all(x <= y + 1e-15 for x, y in zip(vals, vals[1:]))

    def test_uneven_equals_even_when_divisible(self):
        for cfg in [(262144, 512, 4, 1024), (430080, 1792, 3, 3360), (8, 2, 1, 2)]:
            n, b, kp, k = cfg
            assert exact_expected_recall_uneven(n, b, kp, k).value == exact_expected_recall(
                AlgoParams(n, b, kp, k, 1)
            ).value

    @pytest.mark.parametrize("n", [5, 7, 10, 11])
    def test_uneven_enumeration(self, n):
        for b in range(1, n + 1):
            for k in range(1, n + 1):
                for kp in range(1, k + 1):
                    if b * kp < k:
                        continue
                    want = float(enumerated_recall(n, b, k, kp))
                    assert abs(exact_expected_recall_uneven(n, b, kp, k).value - want) <= 1e-12

    def test_rejects_bad_params(self):
        with pytest.raises(ParameterError):
            exact_expected_recall(AlgoParams(8, 2, 1, 9, 1))


class TestHypergeometric:
    @pytest.mark.parametrize("cfg", [(50, 10, 12), (262144, 1024, 32), (430080, 3360, 240), (100, 100, 7)])
    def test_window_matches_scipy(self, cfg):
        N, K, n = cfg
        r0, pmf = hypergeom_window(N, K, n)
        r = r0 + np.arange(pmf.size)
        np.testing.assert_allclose(pmf, stats.hypergeom.pmf(r, N, K, n), rtol=1e-9, atol=1e-300)
        assert math.fsum(pmf) == pytest.approx(1.0, abs=1e-15)

    def test_pmf_exact(self):
        assert hypergeom_pmf_exact(8, 2, 4, 1) == Fraction(4, 7)

    def test_sampler_empirical_pmf(self):
        N, K, n = 40, 12, 10
        s = HypergeometricSampler(N, K, n)
        x = s.sample(np.random.default_rng(3), 200_000)
        counts = np.bincount(x, minlength=n + 1)
        want = np.array([float(hypergeom_pmf_exact(N, K, n, r)) for r in range(n + 1)])
        se = np.sqrt(want * (1 - want) / x.size)
        assert np.all(np.abs(counts / x.size - want) <= 4 * se + 1e-12)


class TestMonteCarlo:
    def test_deterministic(self):
        q = AlgoParams(262144, 4096, 2, 1024)
        assert mc_expected_recall(q, 10_000, seed=7) == mc_expected_recall(q, 10_000, seed=7)
        assert mc_expected_recall(q, 10_000, seed=7) != mc_expected_recall(q, 10_000, seed=8)

    def test_table_row(self):
        est = mc_expected_recall(AlgoParams(262144, 4096, 2, 1024), 262144, seed=0)
        assert abs(est.value - 0.991) <= 3 * math.hypot(0.003, est.std_error)

    def test_local_k_equal_k(self):
        est = mc_expected_recall(AlgoParams(4096, 128, 8, 8), 1000)
        assert est.value == 1.0 and est.std_error == 0.0

    def test_single_trial(self):
        est = mc_expected_recall(AlgoParams(4096, 128, 1, 8), 1)
        assert est.trials == 1 and est.std_error == math.inf

    @pytest.mark.parametrize("seed", range(5))
    @pytest.mark.parametrize(
        "cfg", [(262144, 512, 1024, 4), (262144, 8192, 1024, 1), (430080, 1792, 3360, 3), (15360, 256, 480, 4)]
    )
    def test_within_4_sigma_of_exact(self, cfg, seed):
        n, b, k, kp = cfg
        q = AlgoParams(n, b, kp, k)
        est = mc_expected_recall(q, 50_000, seed=seed)
        assert abs(est.value - exact_expected_recall(q).value) <= 4 * est.std_error

    def test_adaptive(self):
        q = AlgoParams(262144, 512, 4, 1024)
        est = mc_expected_recall_adaptive(q, seed=1)
        assert 3 * est.std_error <= 0.005
        assert abs(est.value - exact_expected_recall(q).value) <= 3 * est.std_error
        one = mc_expected_recall_adaptive(AlgoParams(4096, 128, 8, 8))
        assert one.trials == 4096 and one.value == 1.0

    def test_rejects_zero_trials(self):
        with pytest.raises(ValueError):
            mc_expected_recall(AlgoParams(4096, 128, 1, 8), 0)


class TestBounds:
    def test_improved_value(self):
        v = recall_bound_improved(AlgoParams(262144, 16384, 1, 1024)).value
        assert v == pytest.approx(1 - 512 * (1 / 16384 - 1 / 262144), abs=1e-15)
        assert v == pytest.approx(0.97070, abs=5e-6)

    def test_b_equal_n(self):
        q = AlgoParams(1024, 1024, 1, 100)
        assert recall_bound_improved(q).value == 1.0
        assert recall_bound_quartic(q).value == 1.0

    @pytest.mark.parametrize("fn", [recall_bound_improved, recall_bound_quartic, recall_bound_original])
    def test_reject_local_k_above_one(self, fn):
        with pytest.raises(ParameterError):
            fn(AlgoParams(4096, 128, 2, 8))

    def test_ordering_sweep(self):
        for n in (4096, 65536, 262144):
            for k in (16, 256, 1024):
                for b in legal_bucket_counts(n):
                    if b < k or k > n:
                        continue
                    q = AlgoParams(n, b, 1, k)
                    lo = recall_bound_improved(q).value
                    mid = recall_bound_quartic(q).value
                    hi = exact_expected_recall(q).value
                    assert lo <= mid + 1e-15 and mid <= hi + 1e-15, (n, k, b)

    def test_original_is_looser(self):
        q = AlgoParams(262144, 16384, 1, 1024)
        assert recall_bound_original(q).value < recall_bound_improved(q).value

    def test_estimate_validation(self):
        with pytest.raises(ValueError):
            RecallEstimate(1.5, "exact")
        with pytest.raises(ValueError):
            RecallEstimate(0.5, "guess")


class TestBucketFormulas:
    def test_improved(self):
        assert buckets_improved(1024, 262144, 0.95) == 9856

    @pytest.mark.parametrize("k,n,r", [(1024, 262144, 0.95), (256, 262144, 0.9), (64, 10000, 0.99), (480, 15360, 0.9)])
    def test_improved_guarantee(self, k, n, r):
        b = buckets_improved(k, n, r)
        assert exact_expected_recall_uneven(n, b, 1, k).value >= r

    def test_improved_small_target(self):
        assert buckets_improved(1024, 2**30, 1e-9) == 512
        assert buckets_improved(1, 10, 0.01) == 1

    def test_original(self):
        assert buckets_original(1024, 0.95, approximate=True) == 20460
        exact = buckets_original(1024, 0.95)
        assert abs(exact - 20460) / 20460 <= 0.03
        assert exact / buckets_improved(1024, 262144, 0.95) > 2

    @pytest.mark.parametrize("bad", [0.0, 1.0, -0.1, 1.2])
    def test_domain(self, bad):
        with pytest.raises(ValueError):
            buckets_improved(10, 100, bad)
        with pytest.raises(ValueError):
            buckets_original(10, bad)
        with pytest.raises(ValueError):
            buckets_original(1, 0.5)
