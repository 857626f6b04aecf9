"""
Contains the application's use cases and orchestrates operations.

This module acts as a bridge between the presentation layer (the CLI) and
the domain layer. It contains the high-level logic for each command:
validating dataset files, training, evaluating, predicting, planting
synthetic data and sweeping configurations. Every use case ends by writing
a run manifest with input digests, output paths and timings.
"""

import logging
import time
from contextlib import contextmanager
from dataclasses import dataclass, field
from datetime import datetime, timezone
from pathlib import Path
from typing import Callable, Iterator, Sequence

import pandas as pd

from application.evaluator import MetricsReport, RankedDisease, evaluate, rank_candidates
from application.repositories import (
    ArtifactRepository,
    Checkpoint,
    CheckpointRepository,
    DatasetStore,
    RunManifest,
)
from application.trainer import fit
from domain.dataset import (
    AssociationMatrix,
    Axis,
    DatasetBundle,
    DataSplit,
    SimilarityMatrix,
    bundle_violations,
    generate_synthetic,
    jaccard_similarity_from_associations,
    ordering_violations,
    split_associations,
)
from domain.errors import DatasetValidationError, Violation
from domain.models import LATENT_DIM_GRID, TrainConfig, Variant

log = logging.getLogger(__name__)

CHECKPOINT_FILE = "checkpoint.json"
LOSS_LOG_FILE = "loss_log.tsv"
METRICS_FILE = "metrics.json"
ROC_FILE = "roc.tsv"
PR_FILE = "pr.tsv"
MANIFEST_FILE = "manifest.json"
VALIDATION_FILE = "validation.json"
PREDICTIONS_FILE = "predictions.tsv"
PROVENANCE_FILE = "provenance.json"
SUMMARY_FILE = "summary.tsv"
SUMMARY_MEAN_FILE = "summary_mean.tsv"
SYNTH_FILES = {
    "assoc": "associations.tsv",
    "drug_sim": "drug_sim.tsv",
    "disease_sim": "disease_sim.tsv",
}


@dataclass(frozen=True)
class DataPaths:
    """The dataset files a command reads. Missing similarity files fall back to Jaccard."""

    assoc: Path
    drug_sim: Path | None = None
    disease_sim: Path | None = None
    format: str = "matrix"

    def inputs(self) -> dict[str, Path]:
        named = {"assoc": self.assoc, "drug_sim": self.drug_sim, "disease_sim": self.disease_sim}
        return {name: Path(path) for name, path in named.items() if path is not None}


@dataclass(frozen=True)
class SyntheticParams:
    n_drugs: int = 200
    n_diseases: int = 150
    latent_dim: int = 8
    density: float = 0.05
    noise: float = 0.05
    seed: int = 0


@dataclass
class ValidationReport:
    """Every violation found across the three dataset files, plus entity counts."""

    violations: list[Violation] = field(default_factory=list)
    n_drugs: int | None = None
    n_diseases: int | None = None
    n_positives: int | None = None

    @property
    def ok(self) -> bool:
        return not self.violations

    def to_document(self) -> dict:
        return {
            "ok": self.ok,
            "n_drugs": self.n_drugs,
            "n_diseases": self.n_diseases,
            "n_positives": self.n_positives,
            "violations": [
                {"location": v.location, "message": v.message} for v in self.violations
            ],
        }


@dataclass(frozen=True)
class SweepResult:
    variant: str
    latent_dim: int
    seed: int
    auc: float
    aupr: float


class _Timings:
    """Wall-clock seconds per named phase of a command."""

    def __init__(self):
        self.seconds: dict[str, float] = {}

    @contextmanager
    def phase(self, name: str) -> Iterator[None]:
        start = time.perf_counter()
        log.info(f"Phase '{name}' started.")
        try:
            yield
        finally:
            self.seconds[name] = self.seconds.get(name, 0.0) + time.perf_counter() - start


def _utc_now() -> str:
    return datetime.now(timezone.utc).isoformat(timespec="seconds")


class ExperimentService:
    """Orchestrates all application logic for the experiment commands."""

    def __init__(
        self,
        datasets: DatasetStore,
        checkpoints: Callable[[Path], CheckpointRepository],
        artifacts: Callable[[Path], ArtifactRepository],
    ):
        """
        Initialize the service with its dependencies.

        Args:
            datasets: Reads and writes association and similarity files.
            checkpoints: Builds the checkpoint repository for a file path.
            artifacts: Builds the artifact repository for an output directory.
        """
        self.datasets = datasets
        self.checkpoints = checkpoints
        self.artifacts = artifacts
        log.debug("ExperimentService initialized.")

    # --- Data loading ---

    def _load(
        self,
        paths: DataPaths,
        declared: tuple[Sequence[str], Sequence[str]] | None = None,
    ) -> tuple[AssociationMatrix, SimilarityMatrix | None, SimilarityMatrix | None]:
        """Load the association matrix and whichever similarity files were given."""
        drug_sim = self.datasets.load_similarity(paths.drug_sim) if paths.drug_sim else None
        disease_sim = (
            self.datasets.load_similarity(paths.disease_sim) if paths.disease_sim else None
        )
        drug_ids, disease_ids = declared or (
            drug_sim.ids if drug_sim else None,
            disease_sim.ids if disease_sim else None,
        )
        associations = self.datasets.load_associations(
            paths.assoc, paths.format, drug_ids, disease_ids
        )
        return associations, drug_sim, disease_sim

    @staticmethod
    def _bundle(
        associations: AssociationMatrix,
        drug_sim: SimilarityMatrix | None,
        disease_sim: SimilarityMatrix | None,
        split: DataSplit | None = None,
    ) -> DatasetBundle:
        """Group the data, deriving missing similarities from the profiles the model may see."""
        visible = associations.training_view(split) if split else associations
        if drug_sim is None:
            log.info("No drug similarity file given; using Jaccard similarity of drug profiles.")
            drug_sim = jaccard_similarity_from_associations(visible, Axis.DRUGS)
        if disease_sim is None:
            log.info(
                "No disease similarity file given; using Jaccard similarity of disease profiles."
            )
            disease_sim = jaccard_similarity_from_associations(visible, Axis.DISEASES)
        return DatasetBundle(associations, drug_sim, disease_sim)

    @staticmethod
    def _check_checkpoint_ids(checkpoint: Checkpoint, associations: AssociationMatrix) -> None:
        violations = ordering_violations(
            checkpoint.drug_ids, associations.drug_ids, "checkpoint drug"
        ) + ordering_violations(
            checkpoint.disease_ids, associations.disease_ids, "checkpoint disease"
        )
        if violations:
            raise DatasetValidationError(violations)

    # --- Output helpers ---

    async def _write_manifest(
        self,
        artifacts: ArtifactRepository,
        command: str,
        config: dict,
        arguments: dict,
        inputs: dict[str, Path],
        outputs: dict[str, Path],
        timings: _Timings,
        started_at: str,
    ) -> Path:
        digests = {
            name: {"path": str(path), "sha256": await self.datasets.digest(path)}
            for name, path in inputs.items()
        }
        manifest = RunManifest(
            command=command,
            config=config,
            arguments=arguments,
            inputs=digests,
            outputs={name: str(path) for name, path in outputs.items()},
            timings=timings.seconds,
            started_at=started_at,
        )
        path = await artifacts.write_json(MANIFEST_FILE, manifest.to_document())
        log.info(f"Manifest written to {path}.")
        return path

    async def _write_training(
        self, artifacts: ArtifactRepository, checkpoint: Checkpoint
    ) -> dict[str, Path]:
        checkpoint_path = await self.checkpoints(artifacts.path(CHECKPOINT_FILE)).save_checkpoint(
            checkpoint
        )
        log_path = await artifacts.write_table(
            LOSS_LOG_FILE,
            ("epoch", "loss", "loss_p", "loss_d", "loss_s"),
            ((e.epoch, e.loss, e.loss_p, e.loss_d, e.loss_s) for e in checkpoint.training_log),
        )
        return {"checkpoint": checkpoint_path, "loss_log": log_path}

    async def _write_metrics(
        self, artifacts: ArtifactRepository, metrics: MetricsReport
    ) -> dict[str, Path]:
        return {
            "metrics": await artifacts.write_json(METRICS_FILE, metrics.summary()),
            "roc": await artifacts.write_table(ROC_FILE, ("fpr", "tpr"), metrics.roc_points),
            "pr": await artifacts.write_table(PR_FILE, ("recall", "precision"), metrics.pr_points),
        }

    # --- Use cases ---

    async def validate(self, paths: DataPaths, out_dir: Path) -> ValidationReport:
        """
        Check every dataset invariant across the three files.

        Violations are collected rather than raised, so the report lists all
        of them. Files that cannot be read at all still raise.

        Returns:
            The report; `report.ok` is False if anything was violated.
        """
        started, timings = _utc_now(), _Timings()
        report = ValidationReport()
        loaded: dict[str, object] = {}
        with timings.phase("validate"):
            for name in ("drug_sim", "disease_sim"):
                if getattr(paths, name) is None:
                    continue
                try:
                    loaded[name] = self.datasets.load_similarity(getattr(paths, name))
                except DatasetValidationError as e:
                    report.violations += e.violations
            declared = (
                (loaded["drug_sim"].ids, loaded["disease_sim"].ids)
                if len(loaded) == 2
                else (None, None)
            )
            try:
                loaded["assoc"] = self.datasets.load_associations(
                    paths.assoc, paths.format, *declared
                )
            except DatasetValidationError as e:
                report.violations += e.violations

            if "assoc" in loaded:
                associations = loaded["assoc"]
                report.n_drugs, report.n_diseases = associations.shape
                report.n_positives = associations.n_positives
            if len(loaded) == 3:
                report.violations += bundle_violations(
                    loaded["assoc"], loaded["drug_sim"], loaded["disease_sim"]
                )

        if report.ok:
            log.info(
                f"Dataset valid: {report.n_drugs} drugs, {report.n_diseases} diseases, "
                f"{report.n_positives} associations."
            )
        else:
            log.warning(f"Dataset has {len(report.violations)} violations.")
        artifacts = self.artifacts(out_dir)
        outputs = {"report": await artifacts.write_json(VALIDATION_FILE, report.to_document())}
        await self._write_manifest(
            artifacts, "validate", {}, {"format": paths.format},
            paths.inputs(), outputs, timings, started,
        )
        return report

    async def train(self, paths: DataPaths, cfg: TrainConfig, out_dir: Path) -> Checkpoint:
        """
        Split the data, fit a model and write its checkpoint and loss log.

        Raises:
            DatasetError: If the data is invalid or cannot be split.
            DivergenceError: If training produces a non-finite loss.
        """
        started, timings = _utc_now(), _Timings()
        with timings.phase("load"):
            associations, drug_sim, disease_sim = self._load(paths)
            split = split_associations(associations, cfg.ratio, cfg.seed)
            bundle = self._bundle(associations, drug_sim, disease_sim, split)
        with timings.phase("fit"):
            result = fit(bundle, split, cfg)
        checkpoint = Checkpoint(
            config=cfg,
            state=result.state,
            drug_ids=associations.drug_ids,
            disease_ids=associations.disease_ids,
            training_log=result.log,
        )
        artifacts = self.artifacts(out_dir)
        with timings.phase("write"):
            outputs = await self._write_training(artifacts, checkpoint)
        await self._write_manifest(
            artifacts, "train", cfg.model_dump(mode="json"), {"format": paths.format},
            paths.inputs(), outputs, timings, started,
        )
        return checkpoint

    async def evaluate(
        self,
        checkpoint_path: Path,
        paths: DataPaths,
        out_dir: Path,
        seed: int | None = None,
        ratio: float | None = None,
    ) -> MetricsReport:
        """
        Rebuild the training split and score the held-out pairs.

        The split is rebuilt from the checkpoint's recorded seed and ratio
        unless overridden.

        Raises:
            PersistenceError: If the checkpoint cannot be loaded.
            DatasetValidationError: If the data ids differ from the checkpoint's.
        """
        started, timings = _utc_now(), _Timings()
        with timings.phase("load"):
            checkpoint = await self.checkpoints(Path(checkpoint_path)).load_checkpoint()
            cfg = checkpoint.config
            seed = cfg.seed if seed is None else seed
            ratio = cfg.ratio if ratio is None else ratio
            associations, drug_sim, disease_sim = self._load(
                paths, (checkpoint.drug_ids, checkpoint.disease_ids)
            )
            self._check_checkpoint_ids(checkpoint, associations)
            split = split_associations(associations, ratio, seed)
            bundle = self._bundle(associations, drug_sim, disease_sim, split)
        with timings.phase("evaluate"):
            metrics = evaluate(checkpoint.state, bundle, split)
        artifacts = self.artifacts(out_dir)
        outputs = await self._write_metrics(artifacts, metrics)
        await self._write_manifest(
            artifacts, "evaluate", cfg.model_dump(mode="json"),
            {"format": paths.format, "seed": seed, "ratio": ratio},
            {"checkpoint": Path(checkpoint_path), **paths.inputs()}, outputs, timings, started,
        )
        return metrics

    async def predict(
        self,
        checkpoint_path: Path,
        paths: DataPaths,
        drug_id: str,
        top_n: int,
        out_dir: Path,
        exclude_known: bool = False,
    ) -> list[RankedDisease]:
        """
        Rank diseases for one drug using every known association as encoder input.

        Raises:
            DatasetError: If the drug id is unknown.
        """
        started, timings = _utc_now(), _Timings()
        with timings.phase("load"):
            checkpoint = await self.checkpoints(Path(checkpoint_path)).load_checkpoint()
            associations, drug_sim, disease_sim = self._load(
                paths, (checkpoint.drug_ids, checkpoint.disease_ids)
            )
            self._check_checkpoint_ids(checkpoint, associations)
            bundle = self._bundle(associations, drug_sim, disease_sim)
        with timings.phase("predict"):
            ranked = rank_candidates(checkpoint.state, bundle, drug_id, top_n, exclude_known)
        artifacts = self.artifacts(out_dir)
        outputs = {
            "predictions": await artifacts.write_table(
                PREDICTIONS_FILE,
                ("rank", "disease_id", "probability", "known"),
                ((r.rank, r.disease_id, r.probability, r.known) for r in ranked),
            )
        }
        await self._write_manifest(
            artifacts, "predict", checkpoint.config.model_dump(mode="json"),
            {
                "format": paths.format,
                "drug_id": drug_id,
                "top_n": top_n,
                "exclude_known": exclude_known,
            },
            {"checkpoint": Path(checkpoint_path), **paths.inputs()}, outputs, timings, started,
        )
        return ranked

    async def synth(
        self, params: SyntheticParams, out_dir: Path, format: str = "matrix"
    ) -> dict[str, Path]:
        """
        Plant a synthetic dataset and write it in the loaders' formats.

        Returns:
            The written dataset files by name.

        Raises:
            DatasetError: On degenerate generator parameters.
        """
        started, timings = _utc_now(), _Timings()
        with timings.phase("generate"):
            planted = generate_synthetic(
                params.n_drugs, params.n_diseases, params.latent_dim,
                params.density, params.noise, params.seed,
            )
        artifacts = self.artifacts(out_dir)
        with timings.phase("write"):
            files = {
                "assoc": self.datasets.write_associations(
                    planted.associations, artifacts.path(SYNTH_FILES["assoc"]), format
                ),
                "drug_sim": self.datasets.write_similarity(
                    planted.drug_sim, artifacts.path(SYNTH_FILES["drug_sim"])
                ),
                "disease_sim": self.datasets.write_similarity(
                    planted.disease_sim, artifacts.path(SYNTH_FILES["disease_sim"])
                ),
            }
            provenance = {
                **planted.params,
                "format": format,
                "n_positives": planted.associations.n_positives,
                "files": {name: path.name for name, path in files.items()},
            }
            outputs = {**files, "provenance": await artifacts.write_json(PROVENANCE_FILE, provenance)}
        await self._write_manifest(
            artifacts, "synth", planted.params, {"format": format}, {}, outputs, timings, started,
        )
        return files

    async def sweep(
        self,
        paths: DataPaths,
        base: TrainConfig,
        out_dir: Path,
        dims: Sequence[int] = LATENT_DIM_GRID,
        variants: Sequence[Variant] = tuple(Variant),
        seeds: Sequence[int] = (0,),
    ) -> list[SweepResult]:
        """
        Train and evaluate every (variant, latent_dim, seed) combination.

        Each run writes its checkpoint, loss log, metrics and curves to
        `<out_dir>/<variant>-k<dim>-s<seed>/`. The summary tables list every
        run and the mean AUC/AUPR per (variant, latent_dim). No model
        selection is made.
        """
        started, timings = _utc_now(), _Timings()
        with timings.phase("load"):
            associations, drug_sim, disease_sim = self._load(paths)
        splits: dict[int, tuple[DataSplit, DatasetBundle]] = {}
        results: list[SweepResult] = []
        outputs: dict[str, Path] = {}
        root = self.artifacts(out_dir)

        for variant in variants:
            for dim in dims:
                for seed in seeds:
                    cfg = TrainConfig.model_validate(
                        {
                            **base.model_dump(),
                            "variant": Variant(variant),
                            "latent_dim": dim,
                            "seed": seed,
                        }
                    )
                    if seed not in splits:
                        split = split_associations(associations, cfg.ratio, seed)
                        splits[seed] = (
                            split,
                            self._bundle(associations, drug_sim, disease_sim, split),
                        )
                    split, bundle = splits[seed]
                    name = f"{cfg.variant.value}-k{dim}-s{seed}"
                    log.info(f"Sweep run {name}.")
                    with timings.phase("fit"):
                        result = fit(bundle, split, cfg)
                    with timings.phase("evaluate"):
                        metrics = evaluate(result.state, bundle, split)
                    run = self.artifacts(root.path(name))
                    checkpoint = Checkpoint(
                        cfg, result.state, associations.drug_ids,
                        associations.disease_ids, result.log,
                    )
                    written = await self._write_training(run, checkpoint)
                    written.update(await self._write_metrics(run, metrics))
                    outputs.update({f"{name}/{key}": path for key, path in written.items()})
                    results.append(
                        SweepResult(cfg.variant.value, dim, seed, metrics.auc, metrics.aupr)
                    )

        frame = pd.DataFrame([r.__dict__ for r in results])
        outputs["summary"] = await root.write_table(
            SUMMARY_FILE, list(frame.columns), frame.itertuples(index=False)
        )
        if not frame.empty:
            means = (
                frame.groupby(["variant", "latent_dim"], sort=False)[["auc", "aupr"]]
                .mean()
                .reset_index()
            )
            outputs["summary_mean"] = await root.write_table(
                SUMMARY_MEAN_FILE, list(means.columns), means.itertuples(index=False)
            )
        await self._write_manifest(
            root, "sweep", base.model_dump(mode="json"),
            {
                "format": paths.format,
                "dims": list(dims),
                "variants": [Variant(v).value for v in variants],
                "seeds": list(seeds),
            },
            paths.inputs(), outputs, timings, started,
        )
        return results
