"""Tests for the checkpoint repository and the run directory."""

import asyncio
import json

import numpy as np
import pytest

from application.repositories import Checkpoint
from application.trainer import fit
from domain.errors import CheckpointVersionError, PersistenceError, VariantMismatchError
from domain.models import Variant, score_matrix
from infrastructure.persistence import (
    JsonCheckpointRepository,
    RunDirectory,
    checkpoint_to_document,
)


@pytest.fixture
def checkpoint(make_config, tiny_bundle, tiny_split) -> Checkpoint:
    cfg = make_config(epochs=2)
    result = fit(tiny_bundle, tiny_split, cfg)
    assoc = tiny_bundle.associations
    return Checkpoint(cfg, result.state, assoc.drug_ids, assoc.disease_ids, result.log)


def _save(checkpoint: Checkpoint, path):
    return asyncio.run(JsonCheckpointRepository(path).save_checkpoint(checkpoint))


def _load(path, variant=None) -> Checkpoint:
    return asyncio.run(JsonCheckpointRepository(path).load_checkpoint(variant))


def _write_document(path, document: dict):
    path.write_text(json.dumps(document), encoding="utf-8")
    return path


class TestCheckpointRepository:
    def test_round_trip(self, checkpoint, tmp_path):
        path = _save(checkpoint, tmp_path / "checkpoint.json")
        loaded = _load(path)
        assert loaded.config == checkpoint.config
        assert loaded.drug_ids == checkpoint.drug_ids
        assert loaded.disease_ids == checkpoint.disease_ids
        assert loaded.training_log == checkpoint.training_log
        assert set(loaded.state.params) == set(checkpoint.state.params)
        for name, tensor in checkpoint.state.params.items():
            restored = loaded.state.params[name]
            np.testing.assert_array_equal(restored.value, tensor.value)
            np.testing.assert_array_equal(restored.m, tensor.m)
            np.testing.assert_array_equal(restored.v, tensor.v)
            assert restored.step_count == tensor.step_count

    def test_reloaded_model_scores_identically(self, checkpoint, tiny_bundle, tmp_path):
        loaded = _load(_save(checkpoint, tmp_path / "checkpoint.json"))
        profiles = tiny_bundle.associations.values.astype(float)
        np.testing.assert_array_equal(
            score_matrix(loaded.state, profiles), score_matrix(checkpoint.state, profiles)
        )

    def test_saves_are_byte_identical(self, checkpoint, tmp_path):
        first = _save(checkpoint, tmp_path / "a.json")
        second = _save(checkpoint, tmp_path / "b.json")
        again = _save(_load(first), tmp_path / "c.json")
        assert first.read_bytes() == second.read_bytes() == again.read_bytes()

    def test_no_temporary_files_left(self, checkpoint, tmp_path):
        _save(checkpoint, tmp_path / "checkpoint.json")
        assert [p.name for p in tmp_path.iterdir()] == ["checkpoint.json"]

    def test_unknown_version(self, checkpoint, tmp_path):
        document = checkpoint_to_document(checkpoint)
        document["version"] = "nmf-checkpoint/99"
        with pytest.raises(CheckpointVersionError):
            _load(_write_document(tmp_path / "c.json", document))

    def test_variant_mismatch(self, checkpoint, tmp_path):
        path = _save(checkpoint, tmp_path / "checkpoint.json")
        with pytest.raises(VariantMismatchError):
            _load(path, Variant.MF)
        assert _load(path, Variant.NMF).config.variant is Variant.NMF

    def test_truncated_file(self, checkpoint, tmp_path):
        path = _save(checkpoint, tmp_path / "checkpoint.json")
        data = path.read_bytes()
        path.write_bytes(data[: len(data) // 2])
        with pytest.raises(PersistenceError):
            _load(path)

    def test_missing_file(self, tmp_path):
        with pytest.raises(PersistenceError):
            _load(tmp_path / "absent.json")

    def test_shapes_must_fit_the_config(self, checkpoint, tmp_path):
        document = checkpoint_to_document(checkpoint)
        document["config"]["latent_dim"] = 4
        with pytest.raises(PersistenceError, match="does not fit"):
            _load(_write_document(tmp_path / "c.json", document))

    def test_missing_parameter(self, checkpoint, tmp_path):
        document = checkpoint_to_document(checkpoint)
        del document["parameters"]["head.raw"]
        with pytest.raises(PersistenceError):
            _load(_write_document(tmp_path / "c.json", document))

    def test_value_count_must_match_shape(self, checkpoint, tmp_path):
        document = checkpoint_to_document(checkpoint)
        document["parameters"]["head.raw"]["values"].pop()
        with pytest.raises(PersistenceError):
            _load(_write_document(tmp_path / "c.json", document))


class TestRunDirectory:
    def test_write_table(self, tmp_path):
        run = RunDirectory(tmp_path / "run")
        path = asyncio.run(
            run.write_table("t.tsv", ("name", "score", "known"), [("a", 0.1, True), ("b", 2, False)])
        )
        assert path == tmp_path / "run" / "t.tsv"
        assert path.read_text(encoding="utf-8") == "name\tscore\tknown\na\t0.1\t1\nb\t2\t0\n"

    def test_write_json(self, tmp_path):
        run = RunDirectory(tmp_path)
        path = asyncio.run(run.write_json("m.json", {"auc": 0.75}))
        assert json.loads(path.read_text(encoding="utf-8")) == {"auc": 0.75}
