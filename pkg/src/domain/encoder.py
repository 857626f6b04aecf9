"""
Produces latent points for drugs and diseases.

Two ways are supported. The metric-information autoencoder maps an item's
treatment profile to a point, reconstructs the profile from that point, and
pulls the points of similar items together. The one-hot form simply looks a
point up in a free table. Both activations are logistic, so points stay in
the unit hypercube and reconstructions in (0, 1).
"""

import logging
from dataclasses import dataclass

import numpy as np

from domain.dataset import SimilarityMatrix
from domain.errors import ShapeError
from domain.numkit import ParamTensor, affine, sigmoid

log = logging.getLogger(__name__)


@dataclass(frozen=True)
class EncoderParams:
    """Weights of one side's autoencoder.

    W_enc is (k, n_inputs), b_enc is (k,), V_dec is (n_inputs, k) and
    b_dec is (n_inputs,), where n_inputs is the item count of the other side.
    """

    W_enc: ParamTensor
    b_enc: ParamTensor
    V_dec: ParamTensor
    b_dec: ParamTensor

    def __post_init__(self):
        k, n_inputs = self.W_enc.shape
        expected = {
            "b_enc": (k,),
            "V_dec": (n_inputs, k),
            "b_dec": (n_inputs,),
        }
        for name, shape in expected.items():
            if getattr(self, name).shape != shape:
                raise ShapeError(
                    f"EncoderParams.{name} has shape {getattr(self, name).shape}, "
                    f"expected {shape}."
                )

    @property
    def latent_dim(self) -> int:
        return self.W_enc.shape[0]

    @property
    def n_inputs(self) -> int:
        return self.W_enc.shape[1]

    def tensors(self) -> dict[str, ParamTensor]:
        return {
            "W_enc": self.W_enc,
            "b_enc": self.b_enc,
            "V_dec": self.V_dec,
            "b_dec": self.b_dec,
        }


@dataclass(frozen=True)
class LatentTable:
    """One latent point per item, as the rows of an (n_items, k) matrix."""

    points: np.ndarray

    def __post_init__(self):
        points = np.asarray(self.points, dtype=np.float64)
        if points.ndim != 2:
            raise ShapeError(f"LatentTable must be 2-D, got shape {points.shape}.")
        if not np.all(np.isfinite(points)):
            raise ShapeError("LatentTable contains non-finite values.")
        object.__setattr__(self, "points", points)

    @property
    def latent_dim(self) -> int:
        return self.points.shape[1]

    def __len__(self) -> int:
        return self.points.shape[0]


@dataclass(frozen=True)
class NeighborSet:
    """Weighted neighbors per item, stored in compressed-row form.

    Item i's neighbors are `indices[offsets[i]:offsets[i + 1]]` with the
    matching `weights`, sorted by weight descending then index ascending.
    """

    offsets: np.ndarray
    indices: np.ndarray
    weights: np.ndarray

    def __len__(self) -> int:
        return len(self.offsets) - 1

    def neighbors_of(self, item: int) -> list[tuple[int, float]]:
        lo, hi = self.offsets[item], self.offsets[item + 1]
        return list(zip(self.indices[lo:hi].tolist(), self.weights[lo:hi].tolist()))

    def pairs(self, items: np.ndarray) -> tuple[np.ndarray, np.ndarray, np.ndarray]:
        """Return (item, neighbor, weight) arrays for every neighbor of `items`."""
        items = np.asarray(items, dtype=np.int64)
        starts, ends = self.offsets[items], self.offsets[items + 1]
        counts = ends - starts
        sources = np.repeat(items, counts)
        if counts.sum() == 0:
            return sources, sources.copy(), np.zeros(0)
        positions = np.concatenate(
            [np.arange(s, e) for s, e in zip(starts.tolist(), ends.tolist())]
        )
        return sources, self.indices[positions], self.weights[positions]

    @classmethod
    def empty(cls, n_items: int) -> "NeighborSet":
        return cls(
            np.zeros(n_items + 1, dtype=np.int64),
            np.zeros(0, dtype=np.int64),
            np.zeros(0),
        )

    @classmethod
    def from_lists(cls, lists: list[list[tuple[int, float]]]) -> "NeighborSet":
        counts = [len(entries) for entries in lists]
        offsets = np.concatenate([[0], np.cumsum(counts)]).astype(np.int64)
        flat = [pair for entries in lists for pair in entries]
        indices = np.array([i for i, _ in flat], dtype=np.int64)
        weights = np.array([w for _, w in flat], dtype=np.float64)
        return cls(offsets, indices, weights)


def build_neighbors(
    sim: SimilarityMatrix, k: int | None = 10, normalize: bool = False
) -> NeighborSet:
    """
    Keep each item's `k` most similar other items (all of them when k is None).

    Self pairs and zero weights are dropped. With `normalize`, each item's
    kept weights are rescaled to sum to 1.
    """
    if k is not None and k < 0:
        raise ValueError(f"Neighbor count must be non-negative, got {k}.")
    values = sim.values
    n = len(sim)
    limit = n - 1 if k is None else min(k, n - 1)
    lists = []
    for item in range(n):
        row = values[item].copy()
        row[item] = -np.inf
        order = np.lexsort((np.arange(n), -row))[:limit]
        entries = [(int(j), float(row[j])) for j in order if row[j] > 0.0]
        if normalize and entries:
            total = sum(w for _, w in entries)
            entries = [(j, w / total) for j, w in entries]
        lists.append(entries)
    neighbors = NeighborSet.from_lists(lists)
    log.debug(
        f"Built neighbor sets for {n} items: {len(neighbors.indices)} pairs "
        f"(k={'all' if k is None else k}, normalize={normalize})."
    )
    return neighbors


def init_encoder_params(n_inputs: int, k: int, rng: np.random.Generator) -> EncoderParams:
    """Initialize weights uniformly in +-1/sqrt(fan_in) and biases at zero."""
    enc_bound = 1.0 / np.sqrt(n_inputs)
    dec_bound = 1.0 / np.sqrt(k)
    return EncoderParams(
        W_enc=ParamTensor(rng.uniform(-enc_bound, enc_bound, size=(k, n_inputs))),
        b_enc=ParamTensor(np.zeros(k)),
        V_dec=ParamTensor(rng.uniform(-dec_bound, dec_bound, size=(n_inputs, k))),
        b_dec=ParamTensor(np.zeros(n_inputs)),
    )


def init_latent_table(n_items: int, k: int, rng: np.random.Generator) -> ParamTensor:
    """Initialize a free latent table uniformly in [0, 1)."""
    return ParamTensor(rng.random((n_items, k)))


def encode(profile: np.ndarray, params: EncoderParams) -> np.ndarray:
    """Map one treatment profile to its latent point f(W_enc x + b_enc)."""
    return sigmoid(affine(params.W_enc.value, profile, params.b_enc.value))


def decode(point: np.ndarray, params: EncoderParams) -> np.ndarray:
    """Reconstruct a profile g(V_dec d + b_dec) from a latent point."""
    return sigmoid(affine(params.V_dec.value, point, params.b_dec.value))


def encode_batch(profiles: np.ndarray, params: EncoderParams) -> np.ndarray:
    """Encode every row of `profiles` at once."""
    if profiles.ndim != 2 or profiles.shape[1] != params.n_inputs:
        raise ShapeError(
            f"Profiles of shape {profiles.shape} do not fit an encoder "
            f"with {params.n_inputs} inputs."
        )
    return sigmoid(profiles @ params.W_enc.value.T + params.b_enc.value)


def decode_batch(points: np.ndarray, params: EncoderParams) -> np.ndarray:
    if points.ndim != 2 or points.shape[1] != params.latent_dim:
        raise ShapeError(
            f"Points of shape {points.shape} do not fit latent dim {params.latent_dim}."
        )
    return sigmoid(points @ params.V_dec.value.T + params.b_dec.value)


def encode_backward(
    profiles: np.ndarray, latents: np.ndarray, d_latents: np.ndarray, params: EncoderParams
) -> None:
    """Accumulate encoder weight gradients given the gradient at the latent points."""
    d_pre = d_latents * latents * (1.0 - latents)
    params.W_enc.grad += d_pre.T @ profiles
    params.b_enc.grad += d_pre.sum(axis=0)


def lookup_latent(index: int, table: LatentTable) -> np.ndarray:
    """Return row `index` of a free latent table."""
    if not 0 <= index < len(table):
        raise IndexError(f"Latent index {index} out of range for {len(table)} items.")
    return table.points[index].copy()


@dataclass(frozen=True)
class SideLossGrad:
    """A side loss value with gradients for the decoder and the latent points."""

    loss: float
    d_latents: np.ndarray
    d_V_dec: np.ndarray
    d_b_dec: np.ndarray


def _as_points(latents: LatentTable | np.ndarray) -> np.ndarray:
    return latents.points if isinstance(latents, LatentTable) else latents


def side_loss_grad(
    items: np.ndarray,
    profiles: np.ndarray,
    params: EncoderParams,
    latents: LatentTable | np.ndarray,
    neighbors: NeighborSet,
) -> SideLossGrad:
    """
    Evaluate one side's autoencoder loss and its gradients.

    For each item in `items` the loss adds the squared reconstruction error
    of its profile and, for every neighbor k with weight w, w times the
    squared distance between their latent points. The sum is averaged over
    the items.

    Args:
        items: Indices of the items in the batch.
        profiles: Full (n_items, n_inputs) profile matrix.
        params: This side's encoder parameters; only the decoder is read.
        latents: Latent points for every item on this side.
        neighbors: Similarity neighbors for this side.

    Returns:
        The loss with gradients for the latent points (all items) and decoder.
    """
    points = _as_points(latents)
    items = np.asarray(items, dtype=np.int64)
    if items.size == 0:
        raise ShapeError("side loss needs at least one item.")
    if profiles.shape != (points.shape[0], params.n_inputs):
        raise ShapeError(
            f"Profiles of shape {profiles.shape} do not match {points.shape[0]} items "
            f"with {params.n_inputs} inputs."
        )
    n = items.size
    Z = points[items]
    reconstruction = sigmoid(Z @ params.V_dec.value.T + params.b_dec.value)
    residual = reconstruction - profiles[items]

    sources, targets, weights = neighbors.pairs(items)
    delta = points[sources] - points[targets]
    pull = weights * np.sum(delta * delta, axis=1)

    loss = (np.sum(residual * residual) + np.sum(pull)) / n

    d_pre = (2.0 / n) * residual * reconstruction * (1.0 - reconstruction)
    d_latents = np.zeros_like(points)
    np.add.at(d_latents, items, d_pre @ params.V_dec.value)
    d_pull = (2.0 / n) * weights[:, None] * delta
    np.add.at(d_latents, sources, d_pull)
    np.add.at(d_latents, targets, -d_pull)

    return SideLossGrad(
        loss=float(loss),
        d_latents=d_latents,
        d_V_dec=d_pre.T @ Z,
        d_b_dec=d_pre.sum(axis=0),
    )


def side_loss(
    items: np.ndarray,
    profiles: np.ndarray,
    params: EncoderParams,
    latents: LatentTable | np.ndarray,
    neighbors: NeighborSet,
) -> float:
    """Mean reconstruction error plus similarity pull over `items`."""
    return side_loss_grad(items, profiles, params, latents, neighbors).loss
