"""
Defines the run configuration and the learnable model state.

A model is one of three variants sharing the same training loop:

- nmf: metric-information autoencoders feed the generalized Euclidean head.
- nmf_oh: free latent tables (one-hot input) feed the generalized Euclidean head.
- mf: free latent tables scored by the inner product.

This module only knows how to build, inspect and score a model; the loss
and the loop that trains it live in `application.trainer`.
"""

import logging
from dataclasses import dataclass, field
from enum import Enum
from typing import Any

import numpy as np
from pydantic import BaseModel, ConfigDict, Field, field_validator

from config import settings
from domain.encoder import (
    EncoderParams,
    encode_batch,
    init_encoder_params,
    init_latent_table,
)
from domain.errors import ShapeError
from domain.numkit import INIT_STREAM, ParamTensor, RngStream, sigmoid
from domain.scorer import (
    DistanceWeights,
    HeadKind,
    Link,
    ScoreHead,
    distance_to_probability,
    pairwise_distances,
)

log = logging.getLogger(__name__)

LATENT_DIM_GRID = (8, 16, 32, 64, 128)


class Variant(str, Enum):
    """The model variants compared by the ablation runs."""

    NMF = "nmf"
    NMF_OH = "nmf_oh"
    MF = "mf"

    @property
    def head_kind(self) -> HeadKind:
        if self is Variant.MF:
            return HeadKind.INNER_PRODUCT
        return HeadKind.GENERALIZED_EUCLIDEAN

    @property
    def uses_encoders(self) -> bool:
        return self is Variant.NMF


class TrainConfig(BaseModel):
    """Validated hyperparameters of one training run."""

    model_config = ConfigDict(frozen=True, extra="forbid", use_enum_values=False)

    latent_dim: int = Field(32, ge=1)
    learning_rate: float = Field(1e-2, gt=0)
    alpha: float = Field(0.01, ge=0)
    beta: float = Field(0.01, ge=0)
    epochs: int = Field(200, ge=0)
    negatives_per_positive: int = Field(5, ge=0)
    neighbor_k: int | None = Field(10, ge=0)
    seed: int = Field(0, ge=0)
    variant: Variant = Variant.NMF
    batch_size: int = Field(256, ge=1)
    ratio: float = Field(0.7, gt=0, lt=1)
    normalize_neighbors: bool = False
    link: Link = Link.CORRECTED
    adam_beta1: float = Field(0.9, gt=0, lt=1)
    adam_beta2: float = Field(0.999, gt=0, lt=1)
    adam_eps: float = Field(1e-8, gt=0)

    @field_validator("variant", mode="before")
    @classmethod
    def _accept_dashed_variant(cls, v: Any) -> Any:
        """Accept 'nmf-oh' as written on the command line."""
        if isinstance(v, str):
            return v.strip().lower().replace("-", "_")
        return v

    @field_validator("neighbor_k", mode="before")
    @classmethod
    def _parse_all_neighbors(cls, v: Any) -> Any:
        """Map 'all' to None, meaning every other item is a neighbor."""
        if isinstance(v, str) and v.strip().lower() == "all":
            return None
        return v


def parameter_shapes(
    variant: Variant, latent_dim: int, n_drugs: int, n_diseases: int
) -> dict[str, tuple[int, ...]]:
    """The exact parameter set a variant owns, by name and shape."""
    k = latent_dim
    if variant is Variant.NMF:
        shapes = {
            "drug_encoder.W_enc": (k, n_diseases),
            "drug_encoder.b_enc": (k,),
            "drug_encoder.V_dec": (n_diseases, k),
            "drug_encoder.b_dec": (n_diseases,),
            "disease_encoder.W_enc": (k, n_drugs),
            "disease_encoder.b_enc": (k,),
            "disease_encoder.V_dec": (n_drugs, k),
            "disease_encoder.b_dec": (n_drugs,),
        }
    else:
        shapes = {"drug_table": (n_drugs, k), "disease_table": (n_diseases, k)}
    if variant.head_kind is HeadKind.GENERALIZED_EUCLIDEAN:
        shapes["head.raw"] = (k,)
    return shapes


@dataclass
class ModelState:
    """Every learnable parameter of one model, keyed by dotted name."""

    variant: Variant
    latent_dim: int
    n_drugs: int
    n_diseases: int
    params: dict[str, ParamTensor]
    link: Link = Link.CORRECTED
    _views: dict[str, Any] = field(default_factory=dict, init=False, repr=False)

    def __post_init__(self):
        self.variant = Variant(self.variant)
        self.link = Link(self.link)
        self.check_structure()

    def check_structure(self) -> None:
        """Raise ShapeError unless exactly the variant's parameter set is present."""
        expected = parameter_shapes(
            self.variant, self.latent_dim, self.n_drugs, self.n_diseases
        )
        if set(self.params) != set(expected):
            raise ShapeError(
                f"Variant {self.variant.value} needs parameters {sorted(expected)}, "
                f"got {sorted(self.params)}."
            )
        for name, shape in expected.items():
            if self.params[name].shape != shape:
                raise ShapeError(
                    f"Parameter {name} has shape {self.params[name].shape}, expected {shape}."
                )

    def _encoder(self, side: str) -> EncoderParams:
        if not self.variant.uses_encoders:
            raise AttributeError(f"Variant {self.variant.value} has no encoders.")
        if side not in self._views:
            self._views[side] = EncoderParams(
                W_enc=self.params[f"{side}.W_enc"],
                b_enc=self.params[f"{side}.b_enc"],
                V_dec=self.params[f"{side}.V_dec"],
                b_dec=self.params[f"{side}.b_dec"],
            )
        return self._views[side]

    @property
    def drug_encoder(self) -> EncoderParams:
        return self._encoder("drug_encoder")

    @property
    def disease_encoder(self) -> EncoderParams:
        return self._encoder("disease_encoder")

    @property
    def head(self) -> ScoreHead:
        if self.variant.head_kind is HeadKind.INNER_PRODUCT:
            return ScoreHead(HeadKind.INNER_PRODUCT, link=self.link)
        return ScoreHead(
            HeadKind.GENERALIZED_EUCLIDEAN,
            DistanceWeights(self.params["head.raw"]),
            self.link,
        )

    def zero_grad(self) -> None:
        for tensor in self.params.values():
            tensor.zero_grad()

    def check_profiles(self, profiles: np.ndarray) -> None:
        if profiles.shape != (self.n_drugs, self.n_diseases):
            raise ShapeError(
                f"Model expects a {self.n_drugs}x{self.n_diseases} association matrix, "
                f"got {profiles.shape}."
            )

    def latent_points(self, profiles: np.ndarray) -> tuple[np.ndarray, np.ndarray]:
        """Return (drug points, disease points), encoding the profiles when needed."""
        if self.variant.uses_encoders:
            self.check_profiles(profiles)
            profiles = np.asarray(profiles, dtype=np.float64)
            return (
                encode_batch(profiles, self.drug_encoder),
                encode_batch(profiles.T, self.disease_encoder),
            )
        return self.params["drug_table"].value, self.params["disease_table"].value


def init_state(cfg: TrainConfig, n_drugs: int, n_diseases: int) -> ModelState:
    """Build a freshly initialized model for the configured variant."""
    rng = RngStream(cfg.seed).generator(INIT_STREAM)
    k = cfg.latent_dim
    params: dict[str, ParamTensor] = {}
    if cfg.variant is Variant.NMF:
        for side, n_inputs in (("drug_encoder", n_diseases), ("disease_encoder", n_drugs)):
            encoder = init_encoder_params(n_inputs, k, rng)
            for name, tensor in encoder.tensors().items():
                params[f"{side}.{name}"] = tensor
    else:
        params["drug_table"] = init_latent_table(n_drugs, k, rng)
        params["disease_table"] = init_latent_table(n_diseases, k, rng)
    if cfg.variant.head_kind is HeadKind.GENERALIZED_EUCLIDEAN:
        params["head.raw"] = DistanceWeights.unit(k).raw
    log.debug(
        f"Initialized {cfg.variant.value} model with {sum(p.value.size for p in params.values())} "
        f"parameters (k={k}, {n_drugs} drugs, {n_diseases} diseases)."
    )
    return ModelState(cfg.variant, k, n_drugs, n_diseases, params, cfg.link)


def score_matrix(model: ModelState, profiles: np.ndarray) -> np.ndarray:
    """
    Predict the treatment probability of every drug-disease pair.

    Args:
        model: The model to score with; it is only read.
        profiles: The association matrix fed to the encoders (nmf variant).

    Returns:
        An (n_drugs, n_diseases) matrix of probabilities.
    """
    model.check_profiles(np.asarray(profiles))
    D, S = model.latent_points(profiles)
    if model.variant.head_kind is HeadKind.INNER_PRODUCT:
        return sigmoid(D @ S.T)
    distances = pairwise_distances(
        D, S, model.head.weights, chunk=settings.SCORING_CHUNK
    )
    return distance_to_probability(distances, model.link)
