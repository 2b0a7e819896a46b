from decimal import Decimal, getcontext

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from usegmix.consensus import AnchorSegment
from usegmix.features import PCAModel
from usegmix.pool import PoolEntry, SegmentPool
from usegmix.raster import BitMask
from usegmix.sampler import (
    ReplacementDistribution,
    TargetSelection,
    feature_distance,
    penalize,
    replacement_distribution,
    sample_replacement,
)

ONE_PX = BitMask(np.ones((1, 1), dtype=bool))
MODEL_1D = PCAModel(np.zeros(1), np.eye(1), np.ones(1))


def scalar_pool(distances, weights, class_label="c"):
    """Pool whose 1-d features make D_j exactly the given distances for a
    zero-feature target."""
    entries = [
        PoolEntry(
            AnchorSegment(ONE_PX, "src", class_label, f"e{i}"),
            np.array([d], dtype=np.float64),
            w,
        )
        for i, (d, w) in enumerate(zip(distances, weights))
    ]
    return SegmentPool(class_label, entries, MODEL_1D)


def zero_target(tid="target"):
    return TargetSelection(AnchorSegment(ONE_PX, "elsewhere", "c", tid), np.zeros(1))


def decimal_softmax(distances, weights, prec=40):
    """High-precision direct evaluation of the selection rule."""
    getcontext().prec = prec
    exps = [(-Decimal(w) * Decimal(d)).exp() for d, w in zip(distances, weights)]
    total = sum(exps)
    return [float(e / total) for e in exps]


class TestFeatureDistance:
    def test_zero(self):
        v = np.arange(5.0)
        assert feature_distance(v, v) == 0.0

    def test_3_4_5(self):
        assert feature_distance(np.zeros(2), np.array([3.0, 4.0])) == 5.0

    def test_matches_summation_oracle(self):
        rng = np.random.default_rng(0)
        a, b = rng.normal(size=128), rng.normal(size=128)
        total = 0.0
        for x, y in zip(a, b):
            total += (x - y) ** 2
        assert abs(feature_distance(a, b) - np.sqrt(total)) < 1e-12

    def test_dim_mismatch(self):
        with pytest.raises(ValueError):
            feature_distance(np.zeros(3), np.zeros(4))


class TestReplacementDistribution:
    def test_two_entry_fixture(self):
        pool = scalar_pool([0.0, np.log(2.0)], [1.0, 1.0])
        probs = replacement_distribution(zero_target(), pool).probs
        assert probs[0] == pytest.approx(2 / 3, abs=1e-12)
        assert probs[1] == pytest.approx(1 / 3, abs=1e-12)

    def test_uniform_when_symmetric(self):
        pool = scalar_pool([2.5] * 6, [3.0] * 6)
        probs = replacement_distribution(zero_target(), pool).probs
        assert np.allclose(probs, 1 / 6, atol=1e-12)

    def test_single_candidate(self):
        pool = scalar_pool([1.0, 2.0], [1.0, 1.0])
        probs = replacement_distribution(zero_target(), pool, exclude={"e1"}).probs
        assert probs.tolist() == [1.0, 0.0]

    def test_all_excluded_raises(self):
        pool = scalar_pool([1.0], [1.0])
        with pytest.raises(ValueError, match="no candidates"):
            replacement_distribution(zero_target(), pool, exclude={"e0"})

    def test_self_exclusion(self):
        pool = scalar_pool([0.0, 1.0], [1.0, 1.0])
        target = TargetSelection(AnchorSegment(ONE_PX, "src", "c", "e0"), np.zeros(1))
        probs = replacement_distribution(target, pool).probs
        assert probs[0] == 0.0
        assert probs[1] == 1.0

    def test_matches_decimal_oracle(self):
        rng = np.random.default_rng(1)
        for _ in range(50):
            n = int(rng.integers(1, 32))
            d = rng.uniform(0, 50, n)
            w = rng.uniform(1, 20, n)
            pool = scalar_pool(d, w)
            probs = replacement_distribution(zero_target(), pool).probs
            want = decimal_softmax(d.tolist(), w.tolist())
            assert np.max(np.abs(probs - np.array(want))) < 1e-12
            assert abs(probs.sum() - 1.0) < 1e-12

    def test_stability_under_huge_exponents(self):
        # w * D up to 700 must not underflow the whole distribution
        pool = scalar_pool([0.0, 35.0, 70.0], [1.0, 10.0, 10.0])
        probs = replacement_distribution(zero_target(), pool).probs
        assert probs.sum() == pytest.approx(1.0, abs=1e-12)
        assert probs[0] > 0.999
        assert not np.isnan(probs).any()

    def test_argmax_invariance_under_rescaling(self):
        rng = np.random.default_rng(2)
        d = rng.uniform(0.1, 10, 8)
        w = rng.uniform(4, 20, 8)  # stays >= 1 after the /4 rescale
        base = replacement_distribution(zero_target(), scalar_pool(d, w)).probs
        scaled = replacement_distribution(zero_target(), scalar_pool(d * 4.0, w / 4.0)).probs
        assert np.allclose(base, scaled, atol=1e-12)


class TestSampleReplacement:
    def test_degenerate(self):
        dist = ReplacementDistribution(np.array([0.0, 1.0, 0.0]))
        assert sample_replacement(dist, np.random.default_rng(0)) == 1

    def test_half_half_forced_u(self):
        class FakeRng:
            def random(self):
                return 0.25

        dist = ReplacementDistribution(np.array([0.5, 0.5]))
        assert sample_replacement(dist, FakeRng()) == 0

    def test_statistics_two_thirds(self):
        dist = ReplacementDistribution(np.array([2 / 3, 1 / 3]))
        rng = np.random.default_rng(3)
        n = 100_000
        hits = sum(sample_replacement(dist, rng) == 0 for _ in range(n))
        sigma = np.sqrt(n * (2 / 3) * (1 / 3))
        assert abs(hits - n * 2 / 3) <= 3 * sigma

    def test_never_returns_zero_prob_index(self):
        dist = ReplacementDistribution(np.array([0.0, 0.5, 0.0, 0.5, 0.0]))
        rng = np.random.default_rng(4)
        for _ in range(500):
            assert sample_replacement(dist, rng) in (1, 3)


class TestPenalize:
    def test_single_increment(self):
        pool = scalar_pool([1.0, 2.0], [1.0, 1.0])
        penalize(pool, 0)
        assert pool.entries[0].weight == 2.0
        assert pool.entries[1].weight == 1.0

    def test_three_increments(self):
        pool = scalar_pool([1.0], [1.0])
        for _ in range(3):
            penalize(pool, 0)
        assert pool.entries[0].weight == 4.0

    def test_invalid_index(self):
        pool = scalar_pool([1.0], [1.0])
        with pytest.raises(ValueError):
            penalize(pool, 5)

    def test_probability_strictly_decreases(self):
        rng = np.random.default_rng(5)
        for _ in range(25):
            n = int(rng.integers(2, 16))
            d = rng.uniform(0.1, 20, n)  # D_j > 0
            w = rng.uniform(1, 10, n)
            pool = scalar_pool(d, w)
            j = int(rng.integers(n))
            before = replacement_distribution(zero_target(), pool).probs
            penalize(pool, j)
            after = replacement_distribution(zero_target(), pool).probs
            assert after[j] < before[j]
            others = np.delete(np.arange(n), j)
            assert (after[others] >= before[others] - 1e-15).all()

    @given(st.integers(0, 2**31 - 1))
    @settings(max_examples=20, deadline=None)
    def test_distribution_normalized_property(self, seed):
        rng = np.random.default_rng(seed)
        n = int(rng.integers(1, 64))
        pool = scalar_pool(rng.uniform(0, 1000, n), rng.uniform(1, 20, n))
        probs = replacement_distribution(zero_target(), pool).probs
        assert abs(probs.sum() - 1.0) < 1e-12
        assert (probs >= 0).all()
