"""Tests for the metric-information autoencoder and the neighbor sets."""

import numpy as np
import pytest

from domain.dataset import SimilarityMatrix
from domain.encoder import (
    LatentTable,
    NeighborSet,
    build_neighbors,
    decode,
    decode_batch,
    encode,
    encode_backward,
    encode_batch,
    init_encoder_params,
    init_latent_table,
    lookup_latent,
    side_loss,
    side_loss_grad,
)
from domain.errors import ShapeError
from domain.numkit import ParamTensor, RngStream, finite_diff_check


def _sim(values) -> SimilarityMatrix:
    values = np.asarray(values, dtype=np.float64)
    return SimilarityMatrix([f"i{n}" for n in range(len(values))], values)


class TestEncodeDecode:
    def test_points_lie_in_the_unit_cube(self, rng):
        params = init_encoder_params(7, 4, rng)
        profiles = rng.integers(0, 2, size=(20, 7)).astype(float)
        points = encode_batch(profiles, params)
        assert points.shape == (20, 4)
        assert np.all((points > 0) & (points < 1))

    def test_batch_matches_single_item(self, rng):
        params = init_encoder_params(5, 3, rng)
        profiles = rng.integers(0, 2, size=(4, 5)).astype(float)
        points = encode_batch(profiles, params)
        for row, profile in enumerate(profiles):
            np.testing.assert_allclose(points[row], encode(profile, params), rtol=1e-12)
            np.testing.assert_allclose(
                decode_batch(points, params)[row],
                decode(points[row], params),
                rtol=1e-12,
            )

    def test_wrong_profile_width(self, rng):
        params = init_encoder_params(5, 3, rng)
        with pytest.raises(ShapeError):
            encode_batch(np.zeros((2, 4)), params)

    def test_encode_backward_matches_finite_differences(self, rng):
        params = init_encoder_params(6, 3, rng)
        profiles = rng.integers(0, 2, size=(5, 6)).astype(float)
        target = rng.random((5, 3))

        def loss_fn():
            for tensor in params.tensors().values():
                tensor.zero_grad()
            points = encode_batch(profiles, params)
            encode_backward(profiles, points, 2.0 * (points - target), params)
            return float(np.sum((points - target) ** 2))

        tensors = {"W_enc": params.W_enc, "b_enc": params.b_enc}
        assert finite_diff_check(loss_fn, tensors, samples=30) < 1e-5


class TestLatentTable:
    def test_lookup(self, rng):
        table = LatentTable(init_latent_table(4, 3, rng).value)
        np.testing.assert_array_equal(lookup_latent(2, table), table.points[2])
        assert table.latent_dim == 3

    @pytest.mark.parametrize("index", [-1, 4])
    def test_lookup_out_of_range(self, index):
        table = LatentTable(np.zeros((4, 3)))
        with pytest.raises(IndexError):
            lookup_latent(index, table)


class TestBuildNeighbors:
    def test_top_k_without_self_pairs(self):
        sim = _sim(
            [
                [1.0, 0.2, 0.9, 0.5],
                [0.2, 1.0, 0.1, 0.3],
                [0.9, 0.1, 1.0, 0.4],
                [0.5, 0.3, 0.4, 1.0],
            ]
        )
        neighbors = build_neighbors(sim, k=2)
        assert neighbors.neighbors_of(0) == [(2, 0.9), (3, 0.5)]
        assert neighbors.neighbors_of(1) == [(3, 0.3), (0, 0.2)]

    def test_ties_go_to_the_lower_index(self):
        sim = _sim([[1.0, 0.5, 0.5], [0.5, 1.0, 0.5], [0.5, 0.5, 1.0]])
        assert build_neighbors(sim, k=1).neighbors_of(2) == [(0, 0.5)]

    def test_zero_weights_dropped(self):
        sim = _sim([[1.0, 0.0, 0.4], [0.0, 1.0, 0.0], [0.4, 0.0, 1.0]])
        neighbors = build_neighbors(sim, k=None)
        assert neighbors.neighbors_of(1) == []
        assert neighbors.neighbors_of(0) == [(2, 0.4)]

    def test_all_neighbors_and_normalization(self):
        sim = _sim([[1.0, 0.2, 0.6], [0.2, 1.0, 0.2], [0.6, 0.2, 1.0]])
        neighbors = build_neighbors(sim, k=None, normalize=True)
        for item in range(3):
            entries = neighbors.neighbors_of(item)
            assert len(entries) == 2
            assert sum(w for _, w in entries) == pytest.approx(1.0)

    def test_pairs_flatten_the_batch(self):
        neighbors = NeighborSet.from_lists([[(1, 0.5)], [], [(0, 0.2), (1, 0.1)]])
        sources, targets, weights = neighbors.pairs(np.array([2, 0]))
        np.testing.assert_array_equal(sources, [2, 2, 0])
        np.testing.assert_array_equal(targets, [0, 1, 1])
        np.testing.assert_allclose(weights, [0.2, 0.1, 0.5])


class TestSideLoss:
    def test_gradients_match_finite_differences(self, rng):
        n_items, n_inputs, k = 5, 4, 3
        params = init_encoder_params(n_inputs, k, rng)
        latents = ParamTensor(rng.random((n_items, k)))
        profiles = rng.integers(0, 2, size=(n_items, n_inputs)).astype(float)
        neighbors = NeighborSet.from_lists(
            [[(1, 0.7), (3, 0.2)], [(0, 0.7)], [(4, 0.5)], [], [(2, 0.5), (0, 0.1)]]
        )
        items = np.array([0, 2, 4])

        def loss_fn():
            result = side_loss_grad(items, profiles, params, latents.value, neighbors)
            latents.grad[...] = result.d_latents
            params.V_dec.grad[...] = result.d_V_dec
            params.b_dec.grad[...] = result.d_b_dec
            return result.loss

        tensors = {"latents": latents, "V_dec": params.V_dec, "b_dec": params.b_dec}
        assert finite_diff_check(loss_fn, tensors, samples=60) < 1e-5

    def test_side_loss_is_the_loss_of_side_loss_grad(self, rng):
        params = init_encoder_params(3, 2, rng)
        latents = rng.random((4, 2))
        profiles = rng.integers(0, 2, size=(4, 3)).astype(float)
        neighbors = NeighborSet.from_lists([[(1, 1.0)], [], [], []])
        items = np.arange(4)
        assert side_loss(items, profiles, params, latents, neighbors) == pytest.approx(
            side_loss_grad(items, profiles, params, latents, neighbors).loss
        )

    def test_empty_items_rejected(self, rng):
        params = init_encoder_params(3, 2, rng)
        with pytest.raises(ShapeError):
            side_loss_grad(
                np.array([], dtype=int), np.zeros((2, 3)), params, np.zeros((2, 2)),
                NeighborSet.empty(2),
            )

    def test_one_step_pulls_neighbors_together(self):
        for seed in range(100):
            generator = RngStream(seed).generator()
            k = int(generator.integers(2, 6))
            params = init_encoder_params(4, k, generator)
            points = generator.random((3, k))
            # Profiles equal to the reconstructions leave only the similarity pull.
            profiles = decode_batch(points, params)
            neighbors = NeighborSet.from_lists([[(1, float(generator.uniform(0.1, 1.0)))], [], []])

            result = side_loss_grad(np.array([0]), profiles, params, points, neighbors)
            moved = points - 0.01 * result.d_latents

            before = np.linalg.norm(points[0] - points[1])
            after = np.linalg.norm(moved[0] - moved[1])
            assert after < before
            np.testing.assert_array_equal(moved[2], points[2])
