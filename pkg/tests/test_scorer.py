"""Tests for the generalized Euclidean and inner-product scoring heads."""

import numpy as np
import pytest

from domain.errors import ShapeError
from domain.numkit import ParamTensor, sigmoid
from domain.scorer import (
    DistanceWeights,
    HeadKind,
    Link,
    ScoreHead,
    distance_to_probability,
    generalized_distance,
    inner_product_score,
    pairwise_distances,
)


class TestGeneralizedDistance:
    def test_unit_weights_give_squared_euclidean(self, rng):
        weights = DistanceWeights.unit(6)
        np.testing.assert_allclose(weights.effective, 1.0, rtol=1e-14)
        for _ in range(1000):
            d, s = rng.random(6), rng.random(6)
            expected = float(np.sum((d - s) ** 2))
            assert generalized_distance(d, s, weights) == pytest.approx(expected, rel=1e-12)

    def test_weights_scale_each_dimension(self):
        weights = DistanceWeights.from_effective([2.0, 0.5])
        distance = generalized_distance([1.0, 1.0], [0.0, 3.0], weights)
        assert distance == pytest.approx(2.0 * 1.0 + 0.5 * 4.0, rel=1e-12)

    def test_effective_weights_stay_positive(self):
        weights = DistanceWeights(ParamTensor(np.array([-60.0, -5.0, 0.0, 40.0])))
        assert np.all(weights.effective > 0)

    def test_zero_for_identical_points(self, rng):
        d = rng.random(4)
        assert generalized_distance(d, d, DistanceWeights.unit(4)) == 0.0

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            generalized_distance(np.ones(3), np.ones(2), DistanceWeights.unit(3))

    def test_non_positive_effective_weight_rejected(self):
        with pytest.raises(ValueError):
            DistanceWeights.from_effective([1.0, 0.0])

    def test_root_distance_obeys_the_triangle_inequality(self, rng):
        for _ in range(2000):
            weights = DistanceWeights.from_effective(rng.uniform(0.01, 5.0, 5))
            a, b, c = rng.random((3, 5))
            ab = np.sqrt(generalized_distance(a, b, weights))
            bc = np.sqrt(generalized_distance(b, c, weights))
            ac = np.sqrt(generalized_distance(a, c, weights))
            assert ac <= ab + bc + 1e-12

    def test_distinct_points_are_apart(self, rng):
        for _ in range(500):
            weights = DistanceWeights.from_effective(rng.uniform(0.01, 5.0, 4))
            d = rng.random(4)
            s = d.copy()
            s[rng.integers(4)] += rng.uniform(1e-3, 1.0)
            assert generalized_distance(d, s, weights) > 0.0
            assert generalized_distance(d, d, weights) == 0.0
            assert generalized_distance(d, s, weights) == generalized_distance(s, d, weights)


class TestDistanceToProbability:
    def test_half_at_zero(self):
        assert distance_to_probability(0.0) == 0.5

    def test_strictly_decreasing(self):
        grid = np.linspace(0.0, 50.0, 10_000)
        p = distance_to_probability(grid)
        assert np.all(np.diff(p) < 0)
        assert np.all((p > 0) & (p <= 0.5))

    def test_printed_link_is_the_complement(self):
        E = np.linspace(0.0, 10.0, 50)
        np.testing.assert_allclose(
            distance_to_probability(E, Link.PRINTED), 1.0 - distance_to_probability(E),
            atol=1e-15,
        )

    def test_scalar_in_scalar_out(self):
        assert isinstance(distance_to_probability(1.5), float)


class TestInnerProduct:
    def test_value(self):
        assert inner_product_score([1.0, 2.0], [0.5, -1.0]) == pytest.approx(sigmoid(-1.5))

    def test_length_mismatch(self):
        with pytest.raises(ShapeError):
            inner_product_score(np.ones(2), np.ones(3))


class TestPairwiseDistances:
    @pytest.mark.parametrize("chunk", [1, 3, 64])
    def test_matches_pair_by_pair(self, rng, chunk):
        D, S = rng.random((7, 4)), rng.random((5, 4))
        weights = DistanceWeights.from_effective(rng.uniform(0.5, 2.0, 4))
        out = pairwise_distances(D, S, weights, chunk=chunk)
        expected = np.array([[generalized_distance(d, s, weights) for s in S] for d in D])
        np.testing.assert_allclose(out, expected, rtol=1e-12)

    def test_width_mismatch(self, rng):
        with pytest.raises(ShapeError):
            pairwise_distances(rng.random((2, 3)), rng.random((2, 3)), DistanceWeights.unit(4))


class TestScoreHead:
    def test_distance_head_requires_weights(self):
        with pytest.raises(ValueError):
            ScoreHead(HeadKind.GENERALIZED_EUCLIDEAN)

    def test_inner_product_head_takes_no_weights(self):
        with pytest.raises(ValueError):
            ScoreHead(HeadKind.INNER_PRODUCT, DistanceWeights.unit(2))
