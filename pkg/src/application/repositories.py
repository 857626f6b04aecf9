"""
Defines the repository interfaces for persisting run outputs.

This module specifies the contracts the infrastructure layer implements for
dataset files, checkpoints and run artifacts (metrics, curves, logs,
manifests). The application services depend only on these Protocols, never
on a concrete storage format.
"""

from dataclasses import asdict, dataclass, field
from pathlib import Path
from typing import Iterable, Protocol, Sequence, runtime_checkable

from application.trainer import EpochLog
from domain.dataset import AssociationMatrix, SimilarityMatrix
from domain.models import ModelState, TrainConfig, Variant

CHECKPOINT_VERSION = "nmf-checkpoint/1"


@dataclass
class Checkpoint:
    """A trained model with the configuration and log that produced it."""

    config: TrainConfig
    state: ModelState
    drug_ids: tuple[str, ...]
    disease_ids: tuple[str, ...]
    training_log: list[EpochLog] = field(default_factory=list)
    version: str = CHECKPOINT_VERSION


@runtime_checkable
class CheckpointRepository(Protocol):
    """An interface for storing and retrieving a model checkpoint."""

    async def save_checkpoint(self, checkpoint: Checkpoint) -> Path:
        """Persist the checkpoint, replacing any previous one."""
        ...

    async def load_checkpoint(self, expected_variant: Variant | None = None) -> Checkpoint:
        """Load the checkpoint, rejecting unknown versions and variant mismatches."""
        ...


@runtime_checkable
class ArtifactRepository(Protocol):
    """An interface for writing the files a command produces."""

    def path(self, name: str) -> Path:
        """Return where an artifact with this name lives."""
        ...

    async def write_json(self, name: str, data: dict) -> Path:
        """Write a JSON document artifact."""
        ...

    async def write_table(
        self, name: str, header: Sequence[str], rows: Iterable[Sequence]
    ) -> Path:
        """Write a tab-separated table artifact."""
        ...


@dataclass
class RunManifest:
    """Provenance of one command: what ran, on which inputs, producing which files."""

    command: str
    config: dict
    arguments: dict
    inputs: dict[str, dict[str, str]]
    outputs: dict[str, str]
    timings: dict[str, float]
    started_at: str

    def to_document(self) -> dict:
        return asdict(self)


@runtime_checkable
class DatasetStore(Protocol):
    """An interface for reading and writing association and similarity files."""

    def load_associations(
        self,
        path: Path,
        format: str,
        drug_ids: Sequence[str] | None = None,
        disease_ids: Sequence[str] | None = None,
    ) -> AssociationMatrix:
        """Load and validate an association matrix."""
        ...

    def load_similarity(self, path: Path) -> SimilarityMatrix:
        """Load and validate a similarity matrix."""
        ...

    def write_associations(self, assoc: AssociationMatrix, path: Path, format: str) -> Path:
        ...

    def write_similarity(self, sim: SimilarityMatrix, path: Path) -> Path:
        ...

    async def digest(self, path: Path) -> str:
        """Return the SHA-256 hex digest of a file's bytes."""
        ...
