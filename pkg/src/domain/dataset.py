"""
Defines the association and similarity data the engine learns from.

This module holds the immutable data types (association matrix, similarity
matrices, the bundle grouping them, train/test splits and negative batches)
together with the randomized operations over them: splitting known
associations, sampling unknown pairs as negatives, deriving Jaccard
similarity from treatment profiles, and planting synthetic datasets with a
known geometry. File formats live in `infrastructure.tabular`.
"""

import logging
import math
from dataclasses import dataclass, field
from enum import Enum
from typing import Iterable, Sequence

import numpy as np
from scipy.spatial.distance import cdist

from domain.errors import DatasetError, DatasetValidationError, Violation
from domain.numkit import (
    NEGATIVE_STREAM,
    SPLIT_STREAM,
    SYNTHETIC_STREAM,
    RngStream,
)

log = logging.getLogger(__name__)

SYMMETRY_TOLERANCE = 1e-9
Pair = tuple[int, int]


class Axis(str, Enum):
    """Which side of the association matrix a profile is taken along."""

    DRUGS = "drugs"
    DISEASES = "diseases"


def round_half_up(x: float) -> int:
    return int(math.floor(x + 0.5))


def _duplicate_violations(ids: Sequence[str], label: str) -> list[Violation]:
    seen: dict[str, int] = {}
    violations = []
    for position, identifier in enumerate(ids):
        if identifier in seen:
            violations.append(
                Violation(
                    f"{label} id '{identifier}'",
                    f"duplicate identifier (positions {seen[identifier]} and {position})",
                )
            )
        else:
            seen[identifier] = position
    return violations


def association_violations(
    drug_ids: Sequence[str], disease_ids: Sequence[str], values: np.ndarray
) -> list[Violation]:
    """Return every AssociationMatrix invariant broken by the given parts."""
    violations = _duplicate_violations(drug_ids, "drug")
    violations += _duplicate_violations(disease_ids, "disease")
    if values.ndim != 2 or values.shape != (len(drug_ids), len(disease_ids)):
        violations.append(
            Violation(
                "association matrix",
                f"shape {values.shape} does not match "
                f"{len(drug_ids)} drug ids x {len(disease_ids)} disease ids",
            )
        )
        return violations
    for i, j in zip(*np.nonzero((values != 0) & (values != 1))):
        violations.append(
            Violation(
                f"cell ({drug_ids[i]}, {disease_ids[j]})",
                f"value {values[i, j]!r} is not 0 or 1",
            )
        )
    return violations


def similarity_violations(
    ids: Sequence[str], values: np.ndarray, tolerance: float = SYMMETRY_TOLERANCE
) -> list[Violation]:
    """Return every SimilarityMatrix invariant broken by the given parts."""
    violations = _duplicate_violations(ids, "similarity")
    if values.ndim != 2 or values.shape[0] != values.shape[1]:
        violations.append(
            Violation("similarity matrix", f"matrix is not square: shape {values.shape}")
        )
        return violations
    if values.shape[0] != len(ids):
        violations.append(
            Violation(
                "similarity matrix",
                f"{values.shape[0]} rows but {len(ids)} identifiers",
            )
        )
        return violations

    finite = np.isfinite(values)
    for i, j in zip(*np.nonzero(~finite | (values < 0.0) | (values > 1.0))):
        violations.append(
            Violation(
                f"cell ({ids[i]}, {ids[j]})", f"value {values[i, j]!r} outside [0, 1]"
            )
        )
    for i in np.nonzero(np.diag(values) != 1.0)[0]:
        violations.append(
            Violation(
                f"cell ({ids[i]}, {ids[i]})",
                f"diagonal value {values[i, i]!r} is not 1",
            )
        )
    with np.errstate(invalid="ignore"):
        gap = np.abs(values - values.T)
    for i, j in zip(*np.nonzero(np.triu(gap > tolerance, k=1))):
        violations.append(
            Violation(
                f"cells ({ids[i]}, {ids[j]}) / ({ids[j]}, {ids[i]})",
                f"asymmetric values {values[i, j]!r} and {values[j, i]!r}",
            )
        )
    return violations


def ordering_violations(
    expected: Sequence[str], found: Sequence[str], label: str
) -> list[Violation]:
    """Report a mismatch between two id orderings, showing both around the first difference."""
    expected, found = list(expected), list(found)
    if expected == found:
        return []
    first = next(
        (n for n, (a, b) in enumerate(zip(expected, found)) if a != b),
        min(len(expected), len(found)),
    )
    lo, hi = max(0, first - 2), first + 3
    return [
        Violation(
            f"{label} ids",
            f"order differs from the association matrix at position {first}: "
            f"association order {expected[lo:hi]} (of {len(expected)}), "
            f"similarity order {found[lo:hi]} (of {len(found)})",
        )
    ]


def _frozen(values: np.ndarray, dtype) -> np.ndarray:
    array = np.array(values, dtype=dtype)
    array.setflags(write=False)
    return array


@dataclass(frozen=True, eq=False)
class AssociationMatrix:
    """The binary drug x disease matrix of validated treatment relationships."""

    drug_ids: tuple[str, ...]
    disease_ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "drug_ids", tuple(str(i) for i in self.drug_ids))
        object.__setattr__(self, "disease_ids", tuple(str(i) for i in self.disease_ids))
        raw = np.asarray(self.values)
        violations = association_violations(self.drug_ids, self.disease_ids, raw)
        if violations:
            raise DatasetValidationError(violations)
        object.__setattr__(self, "values", _frozen(raw, np.int8))

    @property
    def shape(self) -> tuple[int, int]:
        return self.values.shape

    @property
    def n_positives(self) -> int:
        return int(self.values.sum())

    def positives(self) -> list[Pair]:
        """All (drug_index, disease_index) cells equal to 1, in row-major order."""
        rows, cols = np.nonzero(self.values)
        return list(zip(rows.tolist(), cols.tolist()))

    def masked(self, cells: Iterable[Pair]) -> "AssociationMatrix":
        """Return a copy with the given cells set to 0."""
        values = self.values.copy()
        cells = np.asarray(list(cells), dtype=np.int64).reshape(-1, 2)
        values[cells[:, 0], cells[:, 1]] = 0
        return AssociationMatrix(self.drug_ids, self.disease_ids, values)

    def training_view(self, split: "DataSplit") -> "AssociationMatrix":
        """Return the matrix as seen during training: test positives become unknown."""
        return self.masked(split.test_positives)

    def drug_index(self, drug_id: str) -> int:
        try:
            return self.drug_ids.index(drug_id)
        except ValueError:
            raise DatasetError(f"Unknown drug id '{drug_id}'.") from None


@dataclass(frozen=True, eq=False)
class SimilarityMatrix:
    """A square, symmetric similarity matrix with unit diagonal and values in [0, 1]."""

    ids: tuple[str, ...]
    values: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "ids", tuple(str(i) for i in self.ids))
        raw = np.asarray(self.values, dtype=np.float64)
        violations = similarity_violations(self.ids, raw)
        if violations:
            raise DatasetValidationError(violations)
        object.__setattr__(self, "values", _frozen(raw, np.float64))

    def __len__(self) -> int:
        return len(self.ids)


def bundle_violations(
    associations: AssociationMatrix,
    drug_sim: SimilarityMatrix,
    disease_sim: SimilarityMatrix,
) -> list[Violation]:
    """Check that both similarity matrices follow the association matrix's id order."""
    return ordering_violations(
        associations.drug_ids, drug_sim.ids, "drug similarity"
    ) + ordering_violations(
        associations.disease_ids, disease_sim.ids, "disease similarity"
    )


@dataclass(frozen=True, eq=False)
class DatasetBundle:
    """An association matrix together with the drug and disease similarities."""

    associations: AssociationMatrix
    drug_sim: SimilarityMatrix
    disease_sim: SimilarityMatrix

    def __post_init__(self):
        violations = bundle_violations(self.associations, self.drug_sim, self.disease_sim)
        if violations:
            raise DatasetValidationError(violations)

    def training_view(self, split: "DataSplit") -> "DatasetBundle":
        return DatasetBundle(
            self.associations.training_view(split), self.drug_sim, self.disease_sim
        )


@dataclass(frozen=True, eq=False)
class SyntheticBundle(DatasetBundle):
    """A planted dataset that also carries the hidden points it was built from."""

    drug_points: np.ndarray = field(default=None, compare=False)
    disease_points: np.ndarray = field(default=None, compare=False)
    params: dict = field(default_factory=dict, compare=False)

    def as_bundle(self) -> DatasetBundle:
        return DatasetBundle(self.associations, self.drug_sim, self.disease_sim)


@dataclass(frozen=True)
class DataSplit:
    """A disjoint train/test partition of the known associations."""

    train_positives: tuple[Pair, ...]
    test_positives: tuple[Pair, ...]
    seed: int
    ratio: float

    def check_against(self, associations: AssociationMatrix) -> None:
        """Raise DatasetError unless this split partitions the matrix's positives."""
        train, test = set(self.train_positives), set(self.test_positives)
        if train & test:
            raise DatasetError("Split train and test positives overlap.")
        if train | test != set(associations.positives()):
            raise DatasetError(
                "Split does not partition the association matrix's positive cells."
            )


@dataclass(frozen=True, eq=False)
class NegativeBatch:
    """Unknown pairs drawn as negatives, `per_positive` per positive, in positive order."""

    pairs: np.ndarray
    per_positive: int

    def __len__(self) -> int:
        return len(self.pairs)


def split_associations(assoc: AssociationMatrix, ratio: float, seed: int) -> DataSplit:
    """
    Partition the positive cells uniformly at random into train and test sets.

    The train set receives round(ratio * positives) cells, kept within
    [1, positives - 1] so neither side is empty. Both sides are returned in
    row-major order.

    Raises:
        DatasetError: If the ratio is outside (0, 1) or there are fewer than 2 positives.
    """
    if not 0.0 < ratio < 1.0:
        raise DatasetError(f"Split ratio must lie in (0, 1), got {ratio}.")
    positives = assoc.positives()
    total = len(positives)
    if total < 2:
        raise DatasetError(f"Need at least 2 positive associations to split, got {total}.")

    n_train = min(max(round_half_up(ratio * total), 1), total - 1)
    order = RngStream(seed).generator(SPLIT_STREAM).permutation(total)
    train = sorted(positives[k] for k in order[:n_train])
    test = sorted(positives[k] for k in order[n_train:])
    log.debug(f"Split {total} positives into {len(train)} train / {len(test)} test.")
    return DataSplit(tuple(train), tuple(test), seed, ratio)


def sample_negatives(
    assoc: AssociationMatrix,
    per_positive: int,
    batch_positives: Sequence[Pair],
    seed: int,
    epoch: int,
) -> NegativeBatch:
    """
    Draw distinct zero cells as negatives for a batch of positives.

    All `per_positive * len(batch_positives)` pairs are drawn uniformly
    without replacement from the zero cells, so no pair repeats inside the
    batch and none is a known positive. The stream is keyed by (seed, epoch),
    so every epoch gets a fresh draw.

    Raises:
        DatasetError: If there are not enough zero cells.
    """
    if per_positive < 0:
        raise DatasetError(f"per_positive must be non-negative, got {per_positive}.")
    need = per_positive * len(batch_positives)
    zero_cells = np.flatnonzero(assoc.values.ravel() == 0)
    if need > zero_cells.size:
        raise DatasetError(
            f"Cannot draw {need} negatives: only {zero_cells.size} unknown cells."
        )
    generator = RngStream(seed).generator(NEGATIVE_STREAM, epoch)
    chosen = generator.choice(zero_cells, size=need, replace=False)
    rows, cols = np.divmod(chosen, assoc.shape[1])
    pairs = np.stack([rows, cols], axis=1).astype(np.int64)
    pairs.setflags(write=False)
    return NegativeBatch(pairs, per_positive)


def jaccard_similarity_from_associations(
    assoc: AssociationMatrix, axis: Axis | str = Axis.DRUGS
) -> SimilarityMatrix:
    """
    Compute the Jaccard similarity between binary treatment profiles.

    Profiles are rows (drugs) or columns (diseases). Two distinct all-zero
    profiles score 0; the diagonal is always 1.
    """
    axis = Axis(axis)
    profiles = assoc.values if axis is Axis.DRUGS else assoc.values.T
    ids = assoc.drug_ids if axis is Axis.DRUGS else assoc.disease_ids
    profiles = profiles.astype(np.float64)

    intersection = profiles @ profiles.T
    counts = profiles.sum(axis=1)
    union = counts[:, None] + counts[None, :] - intersection
    values = np.divide(
        intersection, union, out=np.zeros_like(intersection), where=union > 0
    )
    np.fill_diagonal(values, 1.0)
    return SimilarityMatrix(ids, values)


def _distance_similarity(points: np.ndarray) -> np.ndarray:
    distances = cdist(points, points)
    squared = distances**2
    off_diagonal = ~np.eye(len(points), dtype=bool)
    scale = squared[off_diagonal].mean()
    values = np.exp(-squared / scale)
    values = 0.5 * (values + values.T)
    np.fill_diagonal(values, 1.0)
    return values


def generate_synthetic(
    n_drugs: int,
    n_diseases: int,
    latent_dim: int,
    density: float,
    noise: float,
    seed: int,
) -> SyntheticBundle:
    """
    Plant a dataset whose positives follow hidden geometry.

    Drugs and diseases get uniform random points in the unit cube. The
    round(density * n_drugs * n_diseases) closest drug-disease pairs become
    positives. A `noise` fraction of them then swap labels with as many zero
    cells, keeping the positive count fixed. Similarities are a Gaussian
    kernel of the planted distances, so nearby items are similar.

    Raises:
        DatasetError: On degenerate sizes or out-of-range density/noise.
    """
    if n_drugs < 2 or n_diseases < 2 or latent_dim < 1:
        raise DatasetError(
            f"Synthetic sizes must be at least 2 per side and 1 latent dimension, "
            f"got {n_drugs} x {n_diseases}, dim {latent_dim}."
        )
    if not 0.0 < density < 1.0:
        raise DatasetError(f"density must lie in (0, 1), got {density}.")
    if not 0.0 <= noise < 0.5:
        raise DatasetError(f"noise must lie in [0, 0.5), got {noise}.")

    total = n_drugs * n_diseases
    n_positive = round_half_up(density * total)
    if not 0 < n_positive < total:
        raise DatasetError(
            f"density {density} gives {n_positive} positives of {total} cells."
        )

    generator = RngStream(seed).generator(SYNTHETIC_STREAM)
    drug_points = generator.random((n_drugs, latent_dim))
    disease_points = generator.random((n_diseases, latent_dim))

    distances = cdist(drug_points, disease_points).ravel()
    closest = np.argsort(distances, kind="stable")[:n_positive]
    labels = np.zeros(total, dtype=np.int8)
    labels[closest] = 1

    n_flip = round_half_up(noise * n_positive)
    if n_flip:
        flip_off = generator.choice(closest, size=n_flip, replace=False)
        flip_on = generator.choice(np.flatnonzero(labels == 0), size=n_flip, replace=False)
        labels[flip_off] = 0
        labels[flip_on] = 1

    width = max(len(str(n_drugs - 1)), len(str(n_diseases - 1)), 3)
    drug_ids = [f"drug{i:0{width}d}" for i in range(n_drugs)]
    disease_ids = [f"disease{j:0{width}d}" for j in range(n_diseases)]
    params = {
        "n_drugs": n_drugs,
        "n_diseases": n_diseases,
        "latent_dim": latent_dim,
        "density": density,
        "noise": noise,
        "seed": seed,
    }
    log.info(
        f"Planted synthetic bundle {n_drugs}x{n_diseases} (dim {latent_dim}) with "
        f"{n_positive} positives, {n_flip} label swaps."
    )
    return SyntheticBundle(
        associations=AssociationMatrix(
            drug_ids, disease_ids, labels.reshape(n_drugs, n_diseases)
        ),
        drug_sim=SimilarityMatrix(drug_ids, _distance_similarity(drug_points)),
        disease_sim=SimilarityMatrix(disease_ids, _distance_similarity(disease_points)),
        drug_points=drug_points,
        disease_points=disease_points,
        params=params,
    )
