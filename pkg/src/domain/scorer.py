"""
Scores drug-disease pairs from their latent points.

The generalized Euclidean head measures a learnable, per-dimension weighted
squared distance and turns it into a probability that falls as the distance
grows. The inner-product head is the plain matrix factorization score.
"""

import logging
from dataclasses import dataclass
from enum import Enum

import numpy as np

from domain.errors import ShapeError
from domain.numkit import ParamTensor, sigmoid, softplus, softplus_inverse

log = logging.getLogger(__name__)

# Raw weight whose softplus is exactly 1, so a fresh head is the squared Euclidean distance.
UNIT_RAW_WEIGHT = float(softplus_inverse(1.0))


class HeadKind(str, Enum):
    GENERALIZED_EUCLIDEAN = "generalized_euclidean"
    INNER_PRODUCT = "inner_product"


class Link(str, Enum):
    """How a distance becomes a probability.

    CORRECTED is 1 / (1 + e^E), decreasing in E. PRINTED is 1 - 1 / (1 + e^E),
    kept only for side-by-side comparison.
    """

    CORRECTED = "corrected"
    PRINTED = "printed"


@dataclass(frozen=True)
class DistanceWeights:
    """Per-dimension distance weights, stored unconstrained and read through softplus."""

    raw: ParamTensor

    @classmethod
    def unit(cls, k: int) -> "DistanceWeights":
        return cls(ParamTensor(np.full(k, UNIT_RAW_WEIGHT)))

    @classmethod
    def from_effective(cls, effective) -> "DistanceWeights":
        effective = np.asarray(effective, dtype=np.float64)
        if np.any(effective <= 0):
            raise ValueError("Effective distance weights must be positive.")
        return cls(ParamTensor(softplus_inverse(effective)))

    @property
    def effective(self) -> np.ndarray:
        return softplus(self.raw.value)

    def __len__(self) -> int:
        return self.raw.value.size


@dataclass(frozen=True)
class ScoreHead:
    kind: HeadKind
    weights: DistanceWeights | None = None
    link: Link = Link.CORRECTED

    def __post_init__(self):
        if (self.kind is HeadKind.GENERALIZED_EUCLIDEAN) != (self.weights is not None):
            raise ValueError(
                "Distance weights are required by, and only by, the generalized Euclidean head."
            )


def _check_lengths(*vectors: np.ndarray) -> None:
    lengths = {v.shape for v in vectors}
    if len(lengths) != 1 or len(next(iter(lengths))) != 1:
        raise ShapeError(f"Vectors must share one length, got shapes {sorted(lengths)}.")


def generalized_distance(d, s, w: DistanceWeights) -> float:
    """Weighted squared distance sum_t w_t (d_t - s_t)^2 between two points."""
    d = np.asarray(d, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    effective = w.effective
    _check_lengths(d, s, effective)
    diff = d - s
    return float(np.sum(effective * diff * diff))


def distance_to_probability(E, link: Link = Link.CORRECTED):
    """Turn a distance into a treatment probability: 1 / (1 + e^E) by default."""
    E = np.asarray(E, dtype=np.float64)
    p = sigmoid(-E) if Link(link) is Link.CORRECTED else sigmoid(E)
    return float(p) if p.ndim == 0 else p


def inner_product_score(d, s) -> float:
    """Matrix factorization probability sigmoid(d . s)."""
    d = np.asarray(d, dtype=np.float64)
    s = np.asarray(s, dtype=np.float64)
    _check_lengths(d, s)
    return float(sigmoid(d @ s))


def pairwise_distances(
    D: np.ndarray, S: np.ndarray, w: DistanceWeights, chunk: int = 64
) -> np.ndarray:
    """Generalized distance between every row of D and every row of S, in row blocks."""
    if D.shape[1] != S.shape[1] or D.shape[1] != len(w):
        raise ShapeError(
            f"Latent widths differ: drugs {D.shape[1]}, diseases {S.shape[1]}, "
            f"weights {len(w)}."
        )
    effective = w.effective
    out = np.empty((D.shape[0], S.shape[0]))
    for start in range(0, D.shape[0], max(chunk, 1)):
        block = D[start : start + chunk, None, :] - S[None, :, :]
        out[start : start + chunk] = (block * block) @ effective
    return out
