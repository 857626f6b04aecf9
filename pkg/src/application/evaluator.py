"""
Scores held-out pairs and measures ranking quality.

Test pairs are every held-out positive plus every unknown cell of the
association matrix; train positives are never scored. AUC, AUPR and the
curve points come from scikit-learn's ranking metrics.
"""

import logging
from dataclasses import dataclass, field

import numpy as np
from sklearn.metrics import auc as trapezoid_area
from sklearn.metrics import average_precision_score, precision_recall_curve, roc_curve

from domain.dataset import DatasetBundle, DataSplit
from domain.errors import EvaluationError, ShapeError
from domain.models import ModelState, score_matrix

log = logging.getLogger(__name__)


@dataclass(frozen=True, eq=False)
class ScoredPairs:
    """Scored (drug, disease) pairs with their held-out labels, in row-major order."""

    drugs: np.ndarray
    diseases: np.ndarray
    scores: np.ndarray
    labels: np.ndarray

    def __post_init__(self):
        scores = np.asarray(self.scores, dtype=np.float64)
        labels = np.asarray(self.labels, dtype=np.int8)
        if not (len(self.drugs) == len(self.diseases) == scores.size == labels.size):
            raise ShapeError("ScoredPairs fields must have equal lengths.")
        if not np.all(np.isfinite(scores)):
            raise EvaluationError("Scores must be finite.")
        object.__setattr__(self, "scores", scores)
        object.__setattr__(self, "labels", labels)

    @classmethod
    def from_scores(cls, scores, labels) -> "ScoredPairs":
        """Wrap bare score/label vectors, numbering the pairs 0..n-1."""
        index = np.arange(len(scores))
        return cls(index, np.zeros_like(index), scores, labels)

    @property
    def n_pos(self) -> int:
        return int(self.labels.sum())

    @property
    def n_neg(self) -> int:
        return int(self.labels.size - self.labels.sum())

    def __len__(self) -> int:
        return self.labels.size


@dataclass(frozen=True)
class MetricsReport:
    """Ranking quality of one model on one split."""

    auc: float
    aupr: float
    roc_points: list[tuple[float, float]]
    pr_points: list[tuple[float, float]]
    n_pos: int
    n_neg: int
    seed: int
    variant: str
    latent_dim: int
    extra: dict = field(default_factory=dict)

    def __post_init__(self):
        if not 0.0 <= self.auc <= 1.0 or not 0.0 <= self.aupr <= 1.0:
            raise EvaluationError(f"Metrics out of range: auc={self.auc}, aupr={self.aupr}.")
        if self.roc_points[0] != (0.0, 0.0) or self.roc_points[-1] != (1.0, 1.0):
            raise EvaluationError("ROC points must run from (0, 0) to (1, 1).")
        recalls = [r for r, _ in self.pr_points]
        if any(b < a for a, b in zip(recalls, recalls[1:])):
            raise EvaluationError("Recall must be non-decreasing along the PR points.")

    def summary(self) -> dict:
        """The scalar fields, as written to metrics.json."""
        return {
            "auc": self.auc,
            "aupr": self.aupr,
            "n_pos": self.n_pos,
            "n_neg": self.n_neg,
            "seed": self.seed,
            "variant": self.variant,
            "latent_dim": self.latent_dim,
            **self.extra,
        }


def _require_both_classes(scored: ScoredPairs) -> None:
    if scored.n_pos == 0 or scored.n_neg == 0:
        raise EvaluationError(
            f"Need at least one positive and one negative, got {scored.n_pos} / {scored.n_neg}."
        )


def build_test_pairs(
    model: ModelState, bundle: DatasetBundle, split: DataSplit
) -> ScoredPairs:
    """
    Score every held-out positive and every unknown cell.

    The model sees the training view of the matrix, exactly as during
    training, so held-out positives look like any other unknown cell.

    Raises:
        ShapeError: If the model was built for other dimensions.
    """
    associations = bundle.associations
    if associations.shape != (model.n_drugs, model.n_diseases):
        raise ShapeError(
            f"Model is {model.n_drugs}x{model.n_diseases}, data is {associations.shape}."
        )
    training = associations.training_view(split)
    probabilities = score_matrix(model, training.values.astype(np.float64))

    test_mask = np.zeros(associations.shape, dtype=bool)
    if split.test_positives:
        rows, cols = np.asarray(split.test_positives).T
        test_mask[rows, cols] = True
    candidates = test_mask | (associations.values == 0)
    drugs, diseases = np.nonzero(candidates)
    log.debug(f"Scoring {drugs.size} test pairs ({int(test_mask.sum())} positives).")
    return ScoredPairs(
        drugs,
        diseases,
        probabilities[drugs, diseases],
        test_mask[drugs, diseases].astype(np.int8),
    )


def _unit_interval(x: float) -> float:
    # summed recall steps can land a few ulps outside [0, 1]
    return min(1.0, max(0.0, float(x)))


def roc_points(scored: ScoredPairs) -> list[tuple[float, float]]:
    """ROC curve as (false-positive rate, true-positive rate) from (0, 0) to (1, 1)."""
    _require_both_classes(scored)
    fpr, tpr, _ = roc_curve(scored.labels, scored.scores, drop_intermediate=False)
    return list(zip(fpr.tolist(), tpr.tolist()))


def auc(scored: ScoredPairs) -> float:
    """Probability a random positive outscores a random negative, ties counting half.

    Raises:
        EvaluationError: Without both classes.
    """
    _require_both_classes(scored)
    fpr, tpr, _ = roc_curve(scored.labels, scored.scores)
    return _unit_interval(trapezoid_area(fpr, tpr))


def pr_points(scored: ScoredPairs) -> list[tuple[float, float]]:
    """Precision-recall points as (recall, precision) with recall non-decreasing."""
    if scored.n_pos == 0:
        raise EvaluationError("AUPR needs at least one positive.")
    precision, recall, _ = precision_recall_curve(scored.labels, scored.scores)
    return list(zip(recall[::-1].tolist(), precision[::-1].tolist()))


def aupr(scored: ScoredPairs) -> float:
    """Average precision: the sum over score thresholds of recall gain times precision.

    Raises:
        EvaluationError: Without positives.
    """
    if scored.n_pos == 0:
        raise EvaluationError("AUPR needs at least one positive.")
    return _unit_interval(average_precision_score(scored.labels, scored.scores))


def report(
    scored: ScoredPairs, seed: int, variant: str, latent_dim: int, **extra
) -> MetricsReport:
    return MetricsReport(
        auc=auc(scored),
        aupr=aupr(scored),
        roc_points=roc_points(scored),
        pr_points=pr_points(scored),
        n_pos=scored.n_pos,
        n_neg=scored.n_neg,
        seed=seed,
        variant=variant,
        latent_dim=latent_dim,
        extra=extra,
    )


def evaluate(model: ModelState, bundle: DatasetBundle, split: DataSplit) -> MetricsReport:
    """Score the split's test pairs and build the full metrics report."""
    scored = build_test_pairs(model, bundle, split)
    result = report(scored, split.seed, model.variant.value, model.latent_dim)
    log.info(
        f"Evaluated {model.variant.value} (k={model.latent_dim}): AUC={result.auc:.4f} "
        f"AUPR={result.aupr:.4f} over {result.n_pos} positives / {result.n_neg} negatives."
    )
    return result


@dataclass(frozen=True)
class RankedDisease:
    rank: int
    disease_id: str
    disease_index: int
    probability: float
    known: bool


def rank_candidates(
    model: ModelState,
    bundle: DatasetBundle,
    drug_id: str,
    top_n: int,
    exclude_known: bool = False,
    profiles: np.ndarray | None = None,
) -> list[RankedDisease]:
    """
    Rank diseases for one drug by predicted probability.

    Ties are broken by disease index. Known positives of `bundle` are
    flagged, or dropped when `exclude_known` is set.

    Args:
        model: The trained model.
        bundle: Dataset supplying ids and known associations.
        drug_id: The drug to rank for.
        top_n: Maximum number of diseases returned.
        exclude_known: Drop diseases already associated with the drug.
        profiles: Encoder input; defaults to the bundle's association matrix.

    Raises:
        DatasetError: If the drug id is unknown.
    """
    associations = bundle.associations
    row = associations.drug_index(drug_id)
    if profiles is None:
        profiles = associations.values.astype(np.float64)
    probabilities = score_matrix(model, profiles)[row]
    known = associations.values[row].astype(bool)

    order = np.lexsort((np.arange(probabilities.size), -probabilities))
    if exclude_known:
        order = order[~known[order]]
    ranked = []
    for rank, j in enumerate(order[: max(top_n, 0)].tolist(), start=1):
        ranked.append(
            RankedDisease(
                rank=rank,
                disease_id=associations.disease_ids[j],
                disease_index=j,
                probability=float(probabilities[j]),
                known=bool(known[j]),
            )
        )
    return ranked
