"""
Reads and writes the tab-separated dataset files.

Two layouts are supported for associations. The matrix layout has disease
ids across the first row, drug ids down the first column and 0/1 cells.
The triples layout has a header line and then `drug_id disease_id value`
rows. Similarity files always use the matrix layout with the same ids on
both axes. Every problem found while loading is collected and reported
together, with the file and line it came from.
"""

import hashlib
import logging
from enum import Enum
from pathlib import Path
from typing import Sequence

import aiofiles
import numpy as np
import pandas as pd

from domain.dataset import (
    AssociationMatrix,
    SimilarityMatrix,
    association_violations,
    similarity_violations,
)
from domain.errors import DatasetError, DatasetValidationError, Violation

log = logging.getLogger(__name__)

LOAD_SYMMETRY_TOLERANCE = 1e-6
TRIPLES_HEADER = ("drug_id", "disease_id", "value")


class AssociationFormat(str, Enum):
    MATRIX = "matrix"
    TRIPLES = "triples"


def _read_frame(path: Path, header: bool) -> pd.DataFrame:
    try:
        return pd.read_csv(
            path,
            sep="\t",
            header=0 if header else None,
            dtype=str,
            keep_default_na=False,
            encoding="utf-8",
        )
    except FileNotFoundError as e:
        raise DatasetError(f"{path}: file not found.") from e
    except pd.errors.EmptyDataError as e:
        raise DatasetError(f"{path}: file is empty.") from e
    except pd.errors.ParserError as e:
        raise DatasetError(f"{path}: parse error: {e}") from e
    except (OSError, UnicodeDecodeError) as e:
        raise DatasetError(f"{path}: cannot read file: {e}") from e


def _matrix_parts(
    path: Path,
) -> tuple[list[str], list[str], np.ndarray, list[Violation]]:
    """Split a matrix-layout file into row ids, column ids and numeric body."""
    frame = _read_frame(path, header=False)
    if frame.shape[0] < 1 or frame.shape[1] < 2:
        raise DatasetError(f"{path}: a matrix file needs a header row and an id column.")
    column_ids = [str(v) for v in frame.iloc[0, 1:].tolist()]
    body = frame.iloc[1:, :]
    row_ids = [str(v) for v in body.iloc[:, 0].tolist()]

    # Python's float() is correctly rounded, so written values reload bit for bit.
    cells = body.iloc[:, 1:].to_numpy(dtype=object)
    numeric = np.full(cells.shape, np.nan)
    violations = []
    for (r, c), text in np.ndenumerate(cells):
        where = f"{path}:{r + 2} column {c + 2}"
        if not isinstance(text, str) or text == "":
            violations.append(Violation(where, "parse error: missing value"))
            continue
        try:
            numeric[r, c] = float(text)
        except ValueError:
            violations.append(Violation(where, f"parse error: {text!r} is not a number"))
    return row_ids, column_ids, numeric, violations


def _located(violations: list[Violation], path: Path) -> list[Violation]:
    return [Violation(f"{path}: {v.location}", v.message) for v in violations]


def load_association_matrix(
    path: Path,
    format: AssociationFormat | str = AssociationFormat.MATRIX,
    drug_ids: Sequence[str] | None = None,
    disease_ids: Sequence[str] | None = None,
) -> AssociationMatrix:
    """
    Load and validate an association matrix.

    Args:
        path: The file to read.
        format: `matrix` or `triples`.
        drug_ids: For triples, the declared drug universe and order.
        disease_ids: For triples, the declared disease universe and order.

    Returns:
        The validated matrix; cells missing from a triples file are 0.

    Raises:
        DatasetError: If the file cannot be read or parsed.
        DatasetValidationError: With every violation found.
    """
    path = Path(path)
    if AssociationFormat(format) is AssociationFormat.TRIPLES:
        return _load_triples(path, drug_ids, disease_ids)

    row_ids, column_ids, values, violations = _matrix_parts(path)
    if violations:
        raise DatasetValidationError(violations)
    violations = _located(association_violations(row_ids, column_ids, values), path)
    if violations:
        raise DatasetValidationError(violations)
    matrix = AssociationMatrix(row_ids, column_ids, values.astype(np.int8))
    log.info(
        f"Loaded associations {path}: {len(row_ids)} drugs x {len(column_ids)} diseases, "
        f"{matrix.n_positives} positives."
    )
    return matrix


def _load_triples(
    path: Path, drug_ids: Sequence[str] | None, disease_ids: Sequence[str] | None
) -> AssociationMatrix:
    frame = _read_frame(path, header=True)
    if frame.shape[1] != 3:
        raise DatasetError(
            f"{path}: a triples file needs exactly 3 tab-separated columns "
            f"({', '.join(TRIPLES_HEADER)}), found {frame.shape[1]}."
        )
    header = [str(name) for name in frame.columns]
    if header != list(TRIPLES_HEADER):
        raise DatasetValidationError(
            [
                Violation(
                    f"{path}:1",
                    f"parse error: header must be {' '.join(TRIPLES_HEADER)}, "
                    f"found {' '.join(header)}",
                )
            ]
        )
    declared = drug_ids is not None and disease_ids is not None
    drugs = list(drug_ids) if declared else []
    diseases = list(disease_ids) if declared else []
    drug_pos = {d: n for n, d in enumerate(drugs)}
    disease_pos = {d: n for n, d in enumerate(diseases)}

    violations = []
    cells: dict[tuple[int, int], int] = {}
    first_line: dict[tuple[int, int], int] = {}
    for offset, (drug, disease, raw) in enumerate(frame.itertuples(index=False)):
        line = offset + 2
        where = f"{path}:{line}"
        if drug == "" or disease == "":
            violations.append(Violation(where, "parse error: missing identifier"))
            continue
        try:
            value = float(raw)
        except ValueError:
            violations.append(Violation(where, f"parse error: {raw!r} is not a number"))
            continue
        if value not in (0.0, 1.0):
            violations.append(Violation(where, f"value {raw!r} is not 0 or 1"))
            continue
        for identifier, positions, order, label in (
            (drug, drug_pos, drugs, "drug"),
            (disease, disease_pos, diseases, "disease"),
        ):
            if identifier not in positions:
                if declared:
                    violations.append(
                        Violation(where, f"{label} id '{identifier}' is not declared")
                    )
                    break
                positions[identifier] = len(order)
                order.append(identifier)
        else:
            key = (drug_pos[drug], disease_pos[disease])
            if key in cells:
                violations.append(
                    Violation(
                        where,
                        f"duplicate triple ({drug}, {disease}), first seen on line "
                        f"{first_line[key]}",
                    )
                )
                continue
            cells[key] = int(value)
            first_line[key] = line

    placeholder = np.zeros((len(drugs), len(diseases)))
    violations += _located(association_violations(drugs, diseases, placeholder), path)
    if violations:
        raise DatasetValidationError(violations)

    values = np.zeros((len(drugs), len(diseases)), dtype=np.int8)
    for (i, j), value in cells.items():
        values[i, j] = value
    matrix = AssociationMatrix(drugs, diseases, values)
    log.info(
        f"Loaded association triples {path}: {len(drugs)} drugs x {len(diseases)} diseases, "
        f"{matrix.n_positives} positives."
    )
    return matrix


def load_similarity_matrix(path: Path) -> SimilarityMatrix:
    """
    Load and validate a similarity matrix.

    Pairs that differ by at most 1e-6 are replaced by their average; larger
    asymmetry is an error.

    Raises:
        DatasetError: If the file cannot be read or parsed.
        DatasetValidationError: With every violation found.
    """
    path = Path(path)
    row_ids, column_ids, values, violations = _matrix_parts(path)
    if violations:
        raise DatasetValidationError(violations)
    if row_ids != column_ids:
        raise DatasetValidationError(
            [
                Violation(
                    f"{path}",
                    f"row ids {row_ids[:5]} (of {len(row_ids)}) do not match header ids "
                    f"{column_ids[:5]} (of {len(column_ids)})",
                )
            ]
        )
    violations = _located(
        similarity_violations(row_ids, values, LOAD_SYMMETRY_TOLERANCE), path
    )
    if violations:
        raise DatasetValidationError(violations)

    symmetric = 0.5 * (values + values.T)
    adjusted = int(np.count_nonzero(np.triu(values != values.T, k=1)))
    if adjusted:
        log.warning(f"{path}: averaged {adjusted} slightly asymmetric similarity pairs.")
    matrix = SimilarityMatrix(row_ids, symmetric)
    log.info(f"Loaded similarity {path}: {len(matrix)} items.")
    return matrix


def write_association_matrix(
    assoc: AssociationMatrix,
    path: Path,
    format: AssociationFormat | str = AssociationFormat.MATRIX,
) -> Path:
    """Write an association matrix; triples list every cell so ids survive a reload."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    if AssociationFormat(format) is AssociationFormat.TRIPLES:
        rows, cols = np.indices(assoc.shape)
        frame = pd.DataFrame(
            {
                TRIPLES_HEADER[0]: np.asarray(assoc.drug_ids)[rows.ravel()],
                TRIPLES_HEADER[1]: np.asarray(assoc.disease_ids)[cols.ravel()],
                TRIPLES_HEADER[2]: assoc.values.ravel().astype(int),
            }
        )
        frame.to_csv(path, sep="\t", index=False, lineterminator="\n")
    else:
        frame = pd.DataFrame(
            assoc.values.astype(int), index=list(assoc.drug_ids), columns=list(assoc.disease_ids)
        )
        frame.to_csv(path, sep="\t", index_label="", lineterminator="\n")
    return path


def write_similarity_matrix(sim: SimilarityMatrix, path: Path) -> Path:
    """Write a similarity matrix with shortest round-trip decimal values."""
    path = Path(path)
    path.parent.mkdir(parents=True, exist_ok=True)
    text = [[repr(float(x)) for x in row] for row in sim.values]
    frame = pd.DataFrame(text, index=list(sim.ids), columns=list(sim.ids))
    frame.to_csv(path, sep="\t", index_label="", lineterminator="\n")
    return path


class TsvDatasetStore:
    """A tab-separated file implementation of the DatasetStore interface."""

    def load_associations(
        self,
        path: Path,
        format: AssociationFormat | str = AssociationFormat.MATRIX,
        drug_ids: Sequence[str] | None = None,
        disease_ids: Sequence[str] | None = None,
    ) -> AssociationMatrix:
        return load_association_matrix(path, format, drug_ids, disease_ids)

    def load_similarity(self, path: Path) -> SimilarityMatrix:
        return load_similarity_matrix(path)

    def write_associations(
        self,
        assoc: AssociationMatrix,
        path: Path,
        format: AssociationFormat | str = AssociationFormat.MATRIX,
    ) -> Path:
        return write_association_matrix(assoc, path, format)

    def write_similarity(self, sim: SimilarityMatrix, path: Path) -> Path:
        return write_similarity_matrix(sim, path)

    async def digest(self, path: Path) -> str:
        sha = hashlib.sha256()
        try:
            async with aiofiles.open(path, "rb") as f:
                while chunk := await f.read(1 << 20):
                    sha.update(chunk)
        except OSError as e:
            raise DatasetError(f"{path}: cannot read file: {e}") from e
        digest = sha.hexdigest()
        log.debug(f"sha256 {path}: {digest}")
        return digest
