"""
Implements the persistence repositories using JSON and tab-separated files.

This module is part of the Infrastructure Layer. It provides concrete
implementations of the repository interfaces defined in the application
layer: a checkpoint store and a run directory for metrics, curves, logs
and manifests. Writes are atomic; reads are validated with pydantic before
any domain object is built.
"""

import asyncio
import json
import logging
import math
import os
import uuid
from pathlib import Path
from typing import Iterable, Sequence

import aiofiles
import numpy as np
from pydantic import BaseModel, ValidationError, model_validator

from application.repositories import CHECKPOINT_VERSION, Checkpoint
from application.trainer import EpochLog
from domain.errors import (
    CheckpointVersionError,
    PersistenceError,
    ShapeError,
    VariantMismatchError,
)
from domain.models import ModelState, TrainConfig, Variant, parameter_shapes
from domain.numkit import ParamTensor

log = logging.getLogger(__name__)


# --- Pydantic Models for Deserialization ---
# These models are the schema of a checkpoint document. A document that
# fails them is rejected as a whole.


class ParameterArray(BaseModel):
    """One named parameter: its shape, values and Adam state, flattened row-major."""

    shape: list[int]
    values: list[float]
    m: list[float]
    v: list[float]
    step_count: int = 0

    @model_validator(mode="after")
    def _check_sizes(self) -> "ParameterArray":
        size = math.prod(self.shape)
        for name in ("values", "m", "v"):
            if len(getattr(self, name)) != size:
                raise ValueError(
                    f"{name} holds {len(getattr(self, name))} numbers, shape needs {size}"
                )
        return self


class EpochRecord(BaseModel):
    epoch: int
    loss: float
    loss_p: float
    loss_d: float
    loss_s: float


class CheckpointDocument(BaseModel):
    """A checkpoint file: header, named parameter arrays and the training log."""

    version: str
    config: TrainConfig
    n_drugs: int
    n_diseases: int
    drug_ids: list[str]
    disease_ids: list[str]
    parameters: dict[str, ParameterArray]
    training_log: list[EpochRecord]


def _tensor_document(tensor: ParamTensor) -> dict:
    return {
        "shape": list(tensor.shape),
        "values": tensor.value.ravel().tolist(),
        "m": tensor.m.ravel().tolist(),
        "v": tensor.v.ravel().tolist(),
        "step_count": tensor.step_count,
    }


def checkpoint_to_document(checkpoint: Checkpoint) -> dict:
    state = checkpoint.state
    return {
        "version": checkpoint.version,
        "config": checkpoint.config.model_dump(mode="json"),
        "n_drugs": state.n_drugs,
        "n_diseases": state.n_diseases,
        "drug_ids": list(checkpoint.drug_ids),
        "disease_ids": list(checkpoint.disease_ids),
        "parameters": {
            name: _tensor_document(state.params[name]) for name in sorted(state.params)
        },
        "training_log": [entry.__dict__ for entry in checkpoint.training_log],
    }


def checkpoint_from_document(
    data: dict, expected_variant: Variant | None = None
) -> Checkpoint:
    """Validate a decoded checkpoint document and rebuild the checkpoint.

    Raises:
        CheckpointVersionError: If the format tag is not recognized.
        VariantMismatchError: If the stored variant differs from `expected_variant`.
        PersistenceError: If the document is malformed or its shapes disagree
            with its configuration.
    """
    if not isinstance(data, dict):
        raise PersistenceError("Checkpoint document is not a JSON object.")
    version = data.get("version")
    if version != CHECKPOINT_VERSION:
        raise CheckpointVersionError(
            f"Unknown checkpoint version {version!r}; expected {CHECKPOINT_VERSION!r}."
        )
    try:
        document = CheckpointDocument.model_validate(data)
    except ValidationError as e:
        raise PersistenceError(f"Checkpoint document is invalid: {e}") from e

    config = document.config
    if expected_variant is not None and config.variant is not Variant(expected_variant):
        raise VariantMismatchError(
            f"Checkpoint holds variant {config.variant.value!r}, "
            f"but {Variant(expected_variant).value!r} was requested."
        )
    if (len(document.drug_ids), len(document.disease_ids)) != (
        document.n_drugs,
        document.n_diseases,
    ):
        raise PersistenceError("Checkpoint identifier lists do not match its dimensions.")

    expected = parameter_shapes(
        config.variant, config.latent_dim, document.n_drugs, document.n_diseases
    )
    params = {}
    for name, array in document.parameters.items():
        if name not in expected or tuple(array.shape) != expected[name]:
            raise PersistenceError(
                f"Parameter {name} with shape {tuple(array.shape)} does not fit the "
                f"declared {config.variant.value} config (k={config.latent_dim})."
            )
        params[name] = ParamTensor(
            value=np.array(array.values, dtype=np.float64).reshape(array.shape),
            m=np.array(array.m, dtype=np.float64).reshape(array.shape),
            v=np.array(array.v, dtype=np.float64).reshape(array.shape),
            step_count=array.step_count,
        )
    try:
        state = ModelState(
            config.variant,
            config.latent_dim,
            document.n_drugs,
            document.n_diseases,
            params,
            config.link,
        )
    except ShapeError as e:
        raise PersistenceError(f"Checkpoint parameters are incomplete: {e}") from e
    return Checkpoint(
        config=config,
        state=state,
        drug_ids=tuple(document.drug_ids),
        disease_ids=tuple(document.disease_ids),
        training_log=[EpochLog(**record.model_dump()) for record in document.training_log],
        version=document.version,
    )


def _format_cell(value) -> str:
    if isinstance(value, (float, np.floating)):
        return repr(float(value))
    if isinstance(value, (bool, np.bool_)):
        return str(int(value))
    return str(value)


class JsonRepository:
    """A base class for file repositories that provides locked, atomic writes."""

    def __init__(self, file_path: Path):
        """
        Initialize the repository.

        Args:
            file_path: The path to the file this repository manages.
        """
        self._file_path = Path(file_path)
        self._lock = asyncio.Lock()

    async def _read_file(self, file_path: Path | None = None) -> dict:
        """Read and decode a JSON file, raising PersistenceError on any failure."""
        file_path = file_path or self._file_path
        async with self._lock:
            try:
                async with aiofiles.open(file_path, "r", encoding="utf-8") as f:
                    content = await f.read()
                return json.loads(content)
            except (OSError, json.JSONDecodeError) as e:
                log.error(f"Error reading or decoding {file_path}: {e}")
                raise PersistenceError(f"Cannot read {file_path}: {e}") from e

    async def _write_text(self, text: str, file_path: Path | None = None) -> Path:
        """Write text to a file atomically: temporary file first, then rename."""
        file_path = file_path or self._file_path
        async with self._lock:
            file_path.parent.mkdir(parents=True, exist_ok=True)
            temp_path = file_path.with_name(f"{file_path.name}.tmp.{uuid.uuid4()}")
            try:
                async with aiofiles.open(temp_path, "w", encoding="utf-8", newline="\n") as f:
                    await f.write(text)
                os.replace(temp_path, file_path)
            except OSError as e:
                log.error(f"Error writing to {file_path}: {e}")
                raise PersistenceError(f"Cannot write {file_path}: {e}") from e
            finally:
                if temp_path.exists():
                    os.remove(temp_path)
        return file_path

    async def _write_json(self, data: dict, file_path: Path | None = None) -> Path:
        return await self._write_text(json.dumps(data, indent=2) + "\n", file_path)


class JsonCheckpointRepository(JsonRepository):
    """A JSON file implementation of the CheckpointRepository interface."""

    async def save_checkpoint(self, checkpoint: Checkpoint) -> Path:
        """Serialize the checkpoint; floats are written in shortest round-trip form."""
        path = await self._write_json(checkpoint_to_document(checkpoint))
        log.info(f"Checkpoint written to {path}.")
        return path

    async def load_checkpoint(self, expected_variant: Variant | None = None) -> Checkpoint:
        """Read and validate the checkpoint file."""
        data = await self._read_file()
        checkpoint = checkpoint_from_document(data, expected_variant)
        log.info(
            f"Loaded {checkpoint.config.variant.value} checkpoint from {self._file_path}."
        )
        return checkpoint


class RunDirectory(JsonRepository):
    """A directory implementation of the ArtifactRepository interface."""

    def __init__(self, out_dir: Path):
        super().__init__(Path(out_dir))

    def path(self, name: str) -> Path:
        return self._file_path / name

    async def write_json(self, name: str, data: dict) -> Path:
        return await self._write_json(data, self.path(name))

    async def write_table(
        self, name: str, header: Sequence[str], rows: Iterable[Sequence]
    ) -> Path:
        lines = ["\t".join(header)]
        lines += ["\t".join(_format_cell(cell) for cell in row) for row in rows]
        return await self._write_text("\n".join(lines) + "\n", self.path(name))

