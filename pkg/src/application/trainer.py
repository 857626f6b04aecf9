"""
Trains a model by minimizing the joint loss with Adam.

The loss is the prediction cross-entropy over positive and sampled negative
pairs, plus alpha times the drug autoencoder loss and beta times the disease
autoencoder loss (nmf variant only). All gradients are derived by hand and
accumulated into each parameter's `grad` before the Adam step.
"""

import logging
from dataclasses import dataclass
from typing import Callable

import numpy as np

from domain.dataset import DatasetBundle, DataSplit, sample_negatives
from domain.encoder import NeighborSet, build_neighbors, encode_backward, side_loss_grad
from domain.errors import DivergenceError, ShapeError
from domain.models import ModelState, TrainConfig, Variant, init_state
from domain.numkit import (
    SHUFFLE_STREAM,
    RngStream,
    adam_step,
    cross_entropy_from_logits,
    sigmoid,
)
from domain.scorer import HeadKind, Link

log = logging.getLogger(__name__)

PROBABILITY_CLAMP = 1e-12


def prediction_loss(predicted, labels) -> float:
    """
    Mean binary cross-entropy of predicted probabilities against labels.

    Probabilities are clamped to [1e-12, 1 - 1e-12] before the logarithms.

    Raises:
        ShapeError: If the two batches differ in length.
    """
    predicted = np.asarray(predicted, dtype=np.float64)
    labels = np.asarray(labels, dtype=np.float64)
    if predicted.shape != labels.shape or predicted.ndim != 1:
        raise ShapeError(
            f"Predictions {predicted.shape} and labels {labels.shape} must be equal-length vectors."
        )
    p = np.clip(predicted, PROBABILITY_CLAMP, 1.0 - PROBABILITY_CLAMP)
    return float(-np.mean(labels * np.log(p) + (1.0 - labels) * np.log(1.0 - p)))


@dataclass(frozen=True)
class Batch:
    """Labelled (drug, disease) pairs for one optimization step."""

    drugs: np.ndarray
    diseases: np.ndarray
    labels: np.ndarray

    def __len__(self) -> int:
        return self.labels.size

    @classmethod
    def from_pairs(cls, pairs, labels) -> "Batch":
        pairs = np.asarray(pairs, dtype=np.int64).reshape(-1, 2)
        return cls(pairs[:, 0], pairs[:, 1], np.asarray(labels, dtype=np.float64))


@dataclass(frozen=True)
class LossBreakdown:
    total: float
    prediction: float
    drug: float
    disease: float


@dataclass(frozen=True)
class LossContext:
    """Inputs shared by every batch of a run: training profiles and neighbor sets."""

    profiles: np.ndarray
    drug_neighbors: NeighborSet
    disease_neighbors: NeighborSet

    @classmethod
    def build(cls, bundle: DatasetBundle, cfg: TrainConfig) -> "LossContext":
        profiles = bundle.associations.values.astype(np.float64)
        if cfg.variant is not Variant.NMF:
            return cls(
                profiles,
                NeighborSet.empty(profiles.shape[0]),
                NeighborSet.empty(profiles.shape[1]),
            )
        return cls(
            profiles,
            build_neighbors(bundle.drug_sim, cfg.neighbor_k, cfg.normalize_neighbors),
            build_neighbors(bundle.disease_sim, cfg.neighbor_k, cfg.normalize_neighbors),
        )


def _encoder_side(
    items: np.ndarray,
    profiles: np.ndarray,
    encoder,
    latents: np.ndarray,
    d_latents: np.ndarray,
    neighbors: NeighborSet,
    weight: float,
) -> float:
    """Add one side's weighted autoencoder gradients and backpropagate through its encoder."""
    side = side_loss_grad(items, profiles, encoder, latents, neighbors)
    d_latents += weight * side.d_latents
    encoder.V_dec.grad += weight * side.d_V_dec
    encoder.b_dec.grad += weight * side.d_b_dec
    encode_backward(profiles, latents, d_latents, encoder)
    return side.loss


def total_loss(
    batch: Batch,
    state: ModelState,
    bundle: DatasetBundle | None,
    cfg: TrainConfig,
    context: LossContext | None = None,
) -> LossBreakdown:
    """
    Evaluate Loss = Loss_p + alpha * Loss_d + beta * Loss_s and its gradients.

    Every parameter's gradient is reset and then filled for this batch. The
    prediction term is computed from logits, which matches `prediction_loss`
    whenever no probability would be clamped and keeps gradients alive for
    saturated pairs. The nmf_oh and mf variants have no autoencoder terms.

    Args:
        batch: The labelled pairs.
        state: The model; its gradients are overwritten.
        bundle: The training data (ignored when `context` is given).
        cfg: Run configuration providing alpha and beta.
        context: Precomputed profiles and neighbors, built from `bundle` if omitted.

    Raises:
        ShapeError: If the batch is empty.
        DivergenceError: If the loss is not finite.
    """
    if len(batch) == 0:
        raise ShapeError("total_loss needs a nonempty batch.")
    if context is None:
        context = LossContext.build(bundle, cfg)
    state.zero_grad()
    n = len(batch)
    variant = state.variant
    labels = batch.labels

    D, S = state.latent_points(context.profiles)
    d_D = np.zeros_like(D)
    d_S = np.zeros_like(S)
    d, s = D[batch.drugs], S[batch.diseases]

    if variant.head_kind is HeadKind.INNER_PRODUCT:
        logits = np.einsum("bk,bk->b", d, s)
        g_logit = (sigmoid(logits) - labels) / n
        np.add.at(d_D, batch.drugs, g_logit[:, None] * s)
        np.add.at(d_S, batch.diseases, g_logit[:, None] * d)
    else:
        raw = state.params["head.raw"]
        weights = state.head.weights.effective
        diff = d - s
        squared = diff * diff
        distance = squared @ weights
        sign = -1.0 if state.link is Link.CORRECTED else 1.0
        logits = sign * distance
        g_distance = sign * (sigmoid(logits) - labels) / n
        g_diff = 2.0 * g_distance[:, None] * diff * weights
        np.add.at(d_D, batch.drugs, g_diff)
        np.add.at(d_S, batch.diseases, -g_diff)
        raw.grad += (g_distance @ squared) * sigmoid(raw.value)

    loss_p = float(np.mean(cross_entropy_from_logits(logits, labels)))
    loss_d = loss_s = 0.0

    if variant.uses_encoders:
        loss_d = _encoder_side(
            np.unique(batch.drugs), context.profiles, state.drug_encoder,
            D, d_D, context.drug_neighbors, cfg.alpha,
        )
        loss_s = _encoder_side(
            np.unique(batch.diseases), context.profiles.T, state.disease_encoder,
            S, d_S, context.disease_neighbors, cfg.beta,
        )
    else:
        state.params["drug_table"].grad += d_D
        state.params["disease_table"].grad += d_S

    total = loss_p + cfg.alpha * loss_d + cfg.beta * loss_s
    if not np.isfinite(total):
        raise DivergenceError(
            f"Non-finite loss: Loss={total}, Loss_p={loss_p}, Loss_d={loss_d}, Loss_s={loss_s}."
        )
    return LossBreakdown(total, loss_p, loss_d, loss_s)


@dataclass(frozen=True)
class EpochLog:
    """Batch-size-weighted mean loss components of one epoch."""

    epoch: int
    loss: float
    loss_p: float
    loss_d: float
    loss_s: float


@dataclass
class FitResult:
    state: ModelState
    log: list[EpochLog]


def _epoch_examples(
    split: DataSplit,
    training: DatasetBundle,
    cfg: TrainConfig,
    epoch: int,
) -> Batch:
    positives = np.asarray(split.train_positives, dtype=np.int64).reshape(-1, 2)
    negatives = sample_negatives(
        training.associations,
        cfg.negatives_per_positive,
        split.train_positives,
        cfg.seed,
        epoch,
    ).pairs
    pairs = np.concatenate([positives, negatives])
    labels = np.concatenate([np.ones(len(positives)), np.zeros(len(negatives))])
    order = RngStream(cfg.seed).generator(SHUFFLE_STREAM, epoch).permutation(len(pairs))
    return Batch.from_pairs(pairs[order], labels[order])


def fit(
    bundle: DatasetBundle,
    split: DataSplit,
    cfg: TrainConfig,
    on_epoch: Callable[[EpochLog, ModelState], None] | None = None,
) -> FitResult:
    """
    Train a fresh model on the split's training positives.

    Each epoch draws new negatives, shuffles positives and negatives
    together, and takes one Adam step per minibatch. Test positives are
    masked out of everything the loop reads.

    Args:
        bundle: The full dataset.
        split: The train/test partition of its positives.
        cfg: Run configuration.
        on_epoch: Optional callback after every epoch.

    Returns:
        The trained model and the per-epoch loss log.

    Raises:
        DatasetError: If the split does not belong to the bundle.
        DivergenceError: If a loss turns non-finite.
    """
    split.check_against(bundle.associations)
    training = bundle.training_view(split)
    n_drugs, n_diseases = training.associations.shape
    state = init_state(cfg, n_drugs, n_diseases)
    context = LossContext.build(training, cfg)
    history: list[EpochLog] = []

    log.info(
        f"Training {cfg.variant.value} (k={cfg.latent_dim}) for {cfg.epochs} epochs on "
        f"{len(split.train_positives)} positives x {cfg.negatives_per_positive} negatives."
    )
    for epoch in range(cfg.epochs):
        examples = _epoch_examples(split, training, cfg, epoch)
        sums = np.zeros(4)
        for start in range(0, len(examples), cfg.batch_size):
            window = slice(start, start + cfg.batch_size)
            batch = Batch(
                examples.drugs[window], examples.diseases[window], examples.labels[window]
            )
            try:
                parts = total_loss(batch, state, training, cfg, context)
            except DivergenceError as e:
                raise DivergenceError(
                    f"Training diverged at epoch {epoch + 1}, batch {start // cfg.batch_size + 1}: {e}"
                ) from e
            for tensor in state.params.values():
                adam_step(
                    tensor, cfg.learning_rate, cfg.adam_beta1, cfg.adam_beta2, cfg.adam_eps
                )
            sums += len(batch) * np.array(
                [parts.total, parts.prediction, parts.drug, parts.disease]
            )
            log.debug(
                f"epoch {epoch + 1} batch {start // cfg.batch_size + 1}: Loss={parts.total:.6f}"
            )

        loss, loss_p, loss_d, loss_s = (sums / max(len(examples), 1)).tolist()
        entry = EpochLog(epoch + 1, loss, loss_p, loss_d, loss_s)
        history.append(entry)
        log.info(
            f"epoch {entry.epoch}/{cfg.epochs}: Loss={loss:.6f} Loss_p={loss_p:.6f} "
            f"Loss_d={loss_d:.6f} Loss_s={loss_s:.6f}"
        )
        if on_epoch is not None:
            on_epoch(entry, state)
    return FitResult(state, history)
