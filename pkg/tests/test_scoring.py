import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from hypothesis.extra.numpy import arrays

from mlzsr.exceptions import ConfigError, DomainError, ShapeError
from mlzsr.scoring import (
    fuse_scores, instance_label_score, lagm_groups, normalize_scores, pool, pool_average,
    pool_lagm, pool_max, rank_labels, ranking_order, segment_scores,
)
from mlzsr.numerics import finite_diff_grad, relative_error

from oracles import rank_by_scores

finite = st.floats(-50, 50, allow_nan=False)


def score_mats(max_t=8, max_c=5):
    return st.integers(1, max_t).flatmap(
        lambda t: st.integers(1, max_c).flatmap(lambda c: arrays(np.float64, (t, c), elements=finite))
    )


class TestSegmentScores:
    def test_orthogonal_is_zero(self):
        ev = np.array([[1.0, 0.0], [2.0, 0.0]])
        es = np.array([[0.0], [1.0]])
        np.testing.assert_array_equal(segment_scores(ev, es), 0.0)

    def test_self_product(self, rng):
        es = rng.normal(size=(4, 3))
        ev = es[:, [1]].T
        assert segment_scores(ev, es)[0, 1] == pytest.approx(np.sum(es[:, 1] ** 2), rel=1e-15)

    def test_batched(self, rng):
        ev, es = rng.normal(size=(2, 3, 4)), rng.normal(size=(4, 5))
        assert segment_scores(ev, es).shape == (2, 3, 5)

    def test_shape_error(self):
        with pytest.raises(ShapeError):
            segment_scores(np.ones((2, 3)), np.ones((4, 2)))


class TestPooling:
    def test_average_example(self):
        assert pool_average(np.array([[1.0], [3.0], [2.0]]))[0] == 2.0

    def test_max_example(self):
        assert pool_max(np.array([[1.0], [3.0], [2.0]]))[0] == 3.0

    def test_lagm_clipped_example(self):
        # two groups of four segments, the second clipped to segments 3-4
        assert lagm_groups(4, 2) == [(0, 4), (2, 4)]
        assert pool_lagm(np.array([[0.0], [0.0], [10.0], [10.0]]), 2)[0] == 10.0
        assert lagm_groups(4, 4) == [(0, 2), (1, 3), (2, 4), (3, 4)]

    def test_identical_rows(self, rng):
        r = rng.normal(size=3)
        S = np.tile(r, (4, 1))
        for kind, g in (("average", 1), ("max", 1), ("lagm", 2), ("lagm", 4)):
            np.testing.assert_allclose(pool(S, kind, g)[0], r, rtol=1e-15)

    def test_single_segment_max_equals_average(self, rng):
        S = rng.normal(size=(1, 4))
        np.testing.assert_array_equal(pool_max(S), pool_average(S))

    def test_indivisible_groups(self):
        with pytest.raises(ConfigError):
            pool_lagm(np.zeros((3, 2)), 4)

    def test_unknown_pooling(self):
        with pytest.raises(ConfigError):
            pool(np.zeros((2, 2)), "median")

    @given(score_mats())
    def test_lagm_one_group_is_average_bitwise(self, S):
        assert pool_lagm(S, 1).tobytes() == pool_average(S).tobytes()

    @given(score_mats(), st.sampled_from([1, 2, 4]))
    def test_ordering(self, S, g):
        T = S.shape[0]
        if (2 * T) % g:
            g = 1
        lg = pool_lagm(S, g)
        assert np.all(pool_max(S) >= lg - 1e-12)
        assert np.all(lg >= pool_average(S) - 1e-12)

    @pytest.mark.parametrize("kind,g", [("average", 1), ("max", 1), ("lagm", 3), ("lagm", 6)])
    def test_backward_matches_finite_diff(self, rng, kind, g):
        S = rng.normal(size=(2, 6, 3))
        w = rng.normal(size=(2, 3))
        out, back = pool(S, kind, g)
        num = finite_diff_grad(lambda v: float(np.sum(pool(v, kind, g)[0] * w)), S)
        assert relative_error(back(w), num) <= 1e-7


class TestRanking:
    def test_example(self):
        ids, _ = rank_labels([0.2, 0.9, 0.5], ["a", "b", "c"])
        assert list(ids) == ["b", "c", "a"]

    def test_decreasing_is_identity(self):
        assert list(rank_labels([3.0, 2.0, 1.0])[0]) == [0, 1, 2]

    def test_ties_ascending_id(self):
        assert list(rank_labels([1.0, 1.0, 1.0], [7, 2, 5])[0]) == [2, 5, 7]

    @given(st.lists(st.integers(-3, 3).map(float), min_size=1, max_size=7))
    def test_matches_oracle(self, s):
        assert list(rank_labels(s)[0]) == rank_by_scores(s, range(len(s)))
        assert list(ranking_order(np.array([s]))[0]) == rank_by_scores(s, range(len(s)))

    @given(st.lists(finite, min_size=1, max_size=7))
    def test_invariant_under_increasing_transform(self, s):
        s = np.array(s)
        a = rank_labels(s)[0]
        b = rank_labels(np.arctan(s / 10) * 3 + 1)[0]
        # the transform may merge values that were distinct only in the last bits
        if len(set(np.arctan(s / 10) * 3 + 1)) == len(set(s)):
            np.testing.assert_array_equal(a, b)

    def test_shape_mismatch(self):
        with pytest.raises(ShapeError):
            rank_labels([1.0, 2.0], [0])


class TestNormalizeFuse:
    def test_example(self):
        np.testing.assert_array_equal(normalize_scores([2.0, 4.0, 6.0]), [0.0, 0.5, 1.0])

    def test_constant(self):
        np.testing.assert_array_equal(normalize_scores(np.full((2, 2), 3.0)), 0.5)

    def test_empty(self):
        with pytest.raises(DomainError):
            normalize_scores(np.zeros((0, 3)))

    @given(arrays(np.float64, (3, 4), elements=finite))
    def test_extrema_and_order(self, S):
        N = normalize_scores(S)
        if S.max() > S.min():
            assert N.min() == 0.0 and N.max() == 1.0
            for row_s, row_n in zip(S, N):
                assert list(rank_labels(row_s)[0]) == list(rank_labels(row_n)[0]) or \
                    len(set(row_n)) < len(set(row_s))

    def test_fuse_examples(self, rng):
        assert fuse_scores([0.2], [0.6])[0] == pytest.approx(0.4)
        a = rng.random((2, 3))
        np.testing.assert_array_equal(fuse_scores(a, a), a)

    @given(arrays(np.float64, (2, 3), elements=finite), arrays(np.float64, (2, 3), elements=finite))
    def test_fused_bounds(self, a, b):
        f = fuse_scores(normalize_scores(a), normalize_scores(b))
        assert np.all((f >= 0) & (f <= 1))
        lo = np.minimum(normalize_scores(a), normalize_scores(b))
        hi = np.maximum(normalize_scores(a), normalize_scores(b))
        assert np.all((f >= lo) & (f <= hi))

    def test_fuse_shape(self):
        with pytest.raises(ShapeError):
            fuse_scores(np.zeros(2), np.zeros(3))


class TestInstanceLabelScore:
    def test_matches_pooled_path(self, rng):
        ev, es = rng.normal(size=(5, 4)), rng.normal(size=(4, 3))
        pooled = pool_average(segment_scores(ev, es))
        for c in range(3):
            assert instance_label_score(ev, es[:, c]) == pytest.approx(pooled[c], abs=1e-12)

    def test_zero_embedding(self):
        assert instance_label_score(np.zeros((3, 2)), np.ones(2)) == 0.0

    def test_hand_example(self):
        ev = np.array([[1.0, 2.0], [3.0, -1.0]])
        # (1*2 + 2*1 + 3*2 - 1*1) / 2 = 4.5
        assert instance_label_score(ev, np.array([2.0, 1.0])) == 4.5
