"""
Defines the handler behind each command-line command.

This module acts as the Presentation Layer, translating parsed arguments
into calls to the ExperimentService and formatting the results. Data goes
to standard output; logs go to standard error. Each handler returns the
process exit status.
"""

import argparse
import json
import logging
from pathlib import Path
from typing import Any, Awaitable, Callable

from pydantic import ValidationError

from application.services import DataPaths, ExperimentService, SyntheticParams
from config import settings
from domain.errors import ConfigError
from domain.models import TrainConfig, Variant

log = logging.getLogger(__name__)

# Command-line flag destination -> TrainConfig field.
CONFIG_FLAGS = {
    "seed": "seed",
    "variant": "variant",
    "latent_dim": "latent_dim",
    "ratio": "ratio",
    "negatives": "negatives_per_positive",
    "neighbor_k": "neighbor_k",
    "epochs": "epochs",
    "alpha": "alpha",
    "beta": "beta",
    "learning_rate": "learning_rate",
    "batch_size": "batch_size",
}

Handler = Callable[[ExperimentService, argparse.Namespace], Awaitable[int]]


def _read_config_file(path: Path) -> dict[str, Any]:
    try:
        data = json.loads(Path(path).read_text(encoding="utf-8"))
    except (OSError, json.JSONDecodeError) as e:
        raise ConfigError(f"Cannot read config file {path}: {e}") from e
    if not isinstance(data, dict):
        raise ConfigError(f"Config file {path} must hold a JSON object.")
    return data


def resolve_config(args: argparse.Namespace) -> TrainConfig:
    """
    Build the run configuration: defaults, then the config file, then flags.

    Raises:
        ConfigError: If the file is unreadable or a value is invalid.
    """
    values = _read_config_file(args.config) if getattr(args, "config", None) else {}
    for dest, name in CONFIG_FLAGS.items():
        flag = getattr(args, dest, None)
        if flag is not None:
            values[name] = flag
    try:
        return TrainConfig.model_validate(values)
    except ValidationError as e:
        raise ConfigError(f"Invalid configuration: {e}") from e


def out_dir(args: argparse.Namespace) -> Path:
    """The `--out` directory, or `<NMF_OUTPUT_DIR>/<command>` when omitted."""
    if args.out:
        return Path(args.out)
    return settings.output_dir_path / args.command


def data_paths(args: argparse.Namespace) -> DataPaths:
    return DataPaths(
        assoc=Path(args.assoc),
        drug_sim=Path(args.drug_sim) if args.drug_sim else None,
        disease_sim=Path(args.disease_sim) if args.disease_sim else None,
        format=args.format,
    )


async def cmd_validate(service: ExperimentService, args: argparse.Namespace) -> int:
    """Print every violation, or the entity counts when the dataset is valid."""
    report = await service.validate(data_paths(args), out_dir(args))
    if report.ok:
        print(
            f"ok\tdrugs={report.n_drugs}\tdiseases={report.n_diseases}"
            f"\tassociations={report.n_positives}"
        )
        return 0
    for violation in report.violations:
        print(f"{violation.location}\t{violation.message}")
    print(f"{len(report.violations)} violation(s)")
    return 1


async def cmd_train(service: ExperimentService, args: argparse.Namespace) -> int:
    cfg = resolve_config(args)
    target = out_dir(args)
    checkpoint = await service.train(data_paths(args), cfg, target)
    if checkpoint.training_log:
        last = checkpoint.training_log[-1]
        print(
            f"epoch={last.epoch}\tloss={last.loss:.6f}\tloss_p={last.loss_p:.6f}"
            f"\tloss_d={last.loss_d:.6f}\tloss_s={last.loss_s:.6f}"
        )
    print(f"checkpoint\t{target / 'checkpoint.json'}")
    return 0


async def cmd_evaluate(service: ExperimentService, args: argparse.Namespace) -> int:
    metrics = await service.evaluate(
        Path(args.checkpoint), data_paths(args), out_dir(args), args.seed, args.ratio
    )
    print(f"auc\t{metrics.auc:.6f}")
    print(f"aupr\t{metrics.aupr:.6f}")
    return 0


async def cmd_predict(service: ExperimentService, args: argparse.Namespace) -> int:
    """Print the ranked diseases, tab-separated, under a header line."""
    ranked = await service.predict(
        Path(args.checkpoint),
        data_paths(args),
        args.drug_id,
        args.top_n,
        out_dir(args),
        exclude_known=args.exclude_known,
    )
    print("rank\tdisease_id\tprobability\tknown")
    for entry in ranked:
        print(f"{entry.rank}\t{entry.disease_id}\t{entry.probability:.6f}\t{int(entry.known)}")
    return 0


async def cmd_synth(service: ExperimentService, args: argparse.Namespace) -> int:
    params = SyntheticParams(
        n_drugs=args.n_drugs,
        n_diseases=args.n_diseases,
        latent_dim=args.latent_dim,
        density=args.density,
        noise=args.noise,
        seed=args.seed,
    )
    files = await service.synth(params, out_dir(args), args.format)
    for name, path in files.items():
        print(f"{name}\t{path}")
    return 0


async def cmd_sweep(service: ExperimentService, args: argparse.Namespace) -> int:
    base = resolve_config(args)
    try:
        variants = [Variant(v.replace("-", "_")) for v in args.variants]
    except ValueError as e:
        raise ConfigError(f"Unknown variant in --variants: {e}") from e
    results = await service.sweep(
        data_paths(args), base, out_dir(args), args.dims, variants, args.seeds
    )
    print("variant\tlatent_dim\tseed\tauc\taupr")
    for r in results:
        print(f"{r.variant}\t{r.latent_dim}\t{r.seed}\t{r.auc:.6f}\t{r.aupr:.6f}")
    return 0


COMMANDS: dict[str, Handler] = {
    "validate": cmd_validate,
    "train": cmd_train,
    "evaluate": cmd_evaluate,
    "predict": cmd_predict,
    "synth": cmd_synth,
    "sweep": cmd_sweep,
}
