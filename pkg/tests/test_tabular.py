"""Tests for the tab-separated dataset loaders and writers."""

import asyncio
import hashlib
import logging

import numpy as np
import pytest

from domain.dataset import AssociationMatrix, SimilarityMatrix
from domain.errors import DatasetError, DatasetValidationError
from infrastructure.tabular import (
    TsvDatasetStore,
    load_association_matrix,
    load_similarity_matrix,
    write_association_matrix,
    write_similarity_matrix,
)


def _write(path, lines):
    path.write_text("\n".join(lines) + "\n", encoding="utf-8")
    return path


@pytest.fixture
def assoc() -> AssociationMatrix:
    return AssociationMatrix(
        ["DB01", "DB02", "DB03"], ["OMIM1", "OMIM2"], np.array([[1, 0], [0, 0], [1, 1]])
    )


class TestAssociationFiles:
    def test_matrix_layout_round_trip(self, tmp_path, assoc):
        path = write_association_matrix(assoc, tmp_path / "assoc.tsv")
        assert path.read_text().splitlines()[0] == "\tOMIM1\tOMIM2"
        loaded = load_association_matrix(path)
        assert loaded.drug_ids == assoc.drug_ids
        assert loaded.disease_ids == assoc.disease_ids
        np.testing.assert_array_equal(loaded.values, assoc.values)

    def test_triples_keep_every_identifier(self, tmp_path, assoc):
        path = write_association_matrix(assoc, tmp_path / "assoc.tsv", "triples")
        lines = path.read_text().splitlines()
        assert lines[0] == "drug_id\tdisease_id\tvalue"
        assert len(lines) == 1 + 6
        loaded = load_association_matrix(path, "triples")
        assert loaded.drug_ids == assoc.drug_ids
        np.testing.assert_array_equal(loaded.values, assoc.values)

    def test_triples_with_declared_universe(self, tmp_path):
        path = _write(tmp_path / "t.tsv", ["drug_id\tdisease_id\tvalue", "b\tx\t1"])
        loaded = load_association_matrix(path, "triples", ["a", "b"], ["x", "y"])
        assert loaded.shape == (2, 2)
        assert loaded.positives() == [(1, 0)]

    def test_triples_unknown_identifier(self, tmp_path):
        path = _write(tmp_path / "t.tsv", ["drug_id\tdisease_id\tvalue", "c\tx\t1"])
        with pytest.raises(DatasetValidationError, match="not declared"):
            load_association_matrix(path, "triples", ["a", "b"], ["x"])

    def test_triples_without_header_fail_on_line_one(self, tmp_path):
        path = _write(tmp_path / "t.tsv", ["a\tx\t1", "b\ty\t1"])
        with pytest.raises(DatasetValidationError) as excinfo:
            load_association_matrix(path, "triples")
        (violation,) = excinfo.value.violations
        assert violation.location == f"{path}:1"
        assert "header" in violation.message

    def test_duplicate_triple_names_both_lines(self, tmp_path):
        path = _write(
            tmp_path / "t.tsv",
            ["drug_id\tdisease_id\tvalue", "a\tx\t1", "b\tx\t0", "a\tx\t1"],
        )
        with pytest.raises(DatasetValidationError) as excinfo:
            load_association_matrix(path, "triples")
        (violation,) = excinfo.value.violations
        assert violation.location.endswith(":4")
        assert "line 2" in violation.message

    def test_non_binary_value(self, tmp_path):
        path = _write(tmp_path / "a.tsv", ["\tx\ty", "a\t1\t0", "b\t0\t3"])
        with pytest.raises(DatasetValidationError, match="not 0 or 1"):
            load_association_matrix(path)

    def test_parse_error_has_line_number(self, tmp_path):
        path = _write(tmp_path / "a.tsv", ["\tx\ty", "a\t1\t0", "b\tzero\t1"])
        with pytest.raises(DatasetValidationError) as excinfo:
            load_association_matrix(path)
        (violation,) = excinfo.value.violations
        assert violation.location.startswith(f"{path}:3")
        assert "'zero'" in violation.message

    def test_missing_file(self, tmp_path):
        with pytest.raises(DatasetError, match="not found"):
            load_association_matrix(tmp_path / "missing.tsv")

    def test_empty_file(self, tmp_path):
        path = tmp_path / "empty.tsv"
        path.write_text("")
        with pytest.raises(DatasetError, match="empty"):
            load_association_matrix(path)


class TestSimilarityFiles:
    def test_round_trip_is_exact(self, tmp_path):
        values = np.array([[1.0, 0.1 + 0.2, 1 / 3], [0.1 + 0.2, 1.0, 0.0], [1 / 3, 0.0, 1.0]])
        sim = SimilarityMatrix(["a", "b", "c"], values)
        loaded = load_similarity_matrix(write_similarity_matrix(sim, tmp_path / "s.tsv"))
        assert loaded.ids == sim.ids
        np.testing.assert_array_equal(loaded.values, sim.values)

    def test_entry_above_one_is_named(self, tmp_path):
        path = _write(tmp_path / "s.tsv", ["\ta\tb", "a\t1\t1.2", "b\t1.2\t1"])
        with pytest.raises(DatasetValidationError) as excinfo:
            load_similarity_matrix(path)
        assert any("cell (a, b)" in v.location for v in excinfo.value.violations)

    def test_tiny_asymmetry_is_averaged(self, tmp_path, caplog):
        path = _write(tmp_path / "s.tsv", ["\ta\tb", "a\t1\t0.5000004", "b\t0.5\t1"])
        with caplog.at_level(logging.WARNING):
            sim = load_similarity_matrix(path)
        assert sim.values[0, 1] == sim.values[1, 0]
        np.testing.assert_allclose(sim.values[0, 1], 0.5000002, rtol=1e-12)
        assert "asymmetric" in caplog.text

    def test_large_asymmetry_rejected(self, tmp_path):
        path = _write(tmp_path / "s.tsv", ["\ta\tb", "a\t1\t0.6", "b\t0.5\t1"])
        with pytest.raises(DatasetValidationError, match="asymmetric"):
            load_similarity_matrix(path)

    def test_header_and_row_ids_must_match(self, tmp_path):
        path = _write(tmp_path / "s.tsv", ["\ta\tb", "b\t1\t0", "a\t0\t1"])
        with pytest.raises(DatasetValidationError, match="do not match"):
            load_similarity_matrix(path)


class TestTsvDatasetStore:
    def test_digest_is_sha256_of_bytes(self, tmp_path):
        path = _write(tmp_path / "f.tsv", ["\ta", "a\t1"])
        digest = asyncio.run(TsvDatasetStore().digest(path))
        assert digest == hashlib.sha256(path.read_bytes()).hexdigest()

    def test_digest_of_missing_file(self, tmp_path):
        with pytest.raises(DatasetError):
            asyncio.run(TsvDatasetStore().digest(tmp_path / "nope"))
