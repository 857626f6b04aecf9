"""
Builds the command-line parser and runs one command per process.

Errors the engine raises on purpose (`NMFError`) are logged, reported on
standard error and turned into exit status 1; anything else is logged with
its traceback and exits 2.
"""

import argparse
import asyncio
import logging
import sys
from typing import Sequence

from application.services import ExperimentService, SyntheticParams
from cli.commands import COMMANDS
from domain.errors import NMFError
from domain.models import LATENT_DIM_GRID, TrainConfig

log = logging.getLogger(__name__)


def _default(name: str):
    return TrainConfig.model_fields[name].default


def _int_list(text: str) -> list[int]:
    try:
        return [int(part) for part in text.split(",") if part.strip()]
    except ValueError:
        raise argparse.ArgumentTypeError(f"expected comma-separated integers, got '{text}'")


def _name_list(text: str) -> list[str]:
    return [part.strip().lower() for part in text.split(",") if part.strip()]


def _add_data_arguments(p: argparse.ArgumentParser, require_similarity: bool) -> None:
    p.add_argument("--assoc", required=True, help="Association file (drugs x diseases).")
    p.add_argument(
        "--drug-sim",
        required=require_similarity,
        help="Drug similarity matrix. When omitted, Jaccard similarity of drug profiles is used.",
    )
    p.add_argument(
        "--disease-sim",
        required=require_similarity,
        help="Disease similarity matrix. When omitted, Jaccard similarity of disease "
        "profiles is used.",
    )
    p.add_argument(
        "--format",
        choices=["matrix", "triples"],
        default="matrix",
        help="Layout of the association file (default matrix).",
    )


def _add_out_argument(p: argparse.ArgumentParser) -> None:
    p.add_argument(
        "--out", default=None, help="Output directory (default <NMF_OUTPUT_DIR>/<command>)."
    )


def _add_config_arguments(p: argparse.ArgumentParser) -> None:
    p.add_argument("--config", help="Flat JSON file of TrainConfig fields; flags override it.")
    p.add_argument("--seed", type=int, help=f"Random seed (default {_default('seed')}).")
    p.add_argument(
        "--variant",
        choices=["nmf", "nmf-oh", "nmf_oh", "mf"],
        help=f"Model variant (default {_default('variant').value}).",
    )
    p.add_argument(
        "--latent-dim", type=int, help=f"Latent dimension k (default {_default('latent_dim')})."
    )
    p.add_argument(
        "--ratio", type=float, help=f"Fraction of positives used for training (default {_default('ratio')})."
    )
    p.add_argument(
        "--negatives",
        type=int,
        help=f"Negatives sampled per positive per epoch (default {_default('negatives_per_positive')}).",
    )
    p.add_argument(
        "--neighbor-k",
        help=f"Similarity neighbors per item, or 'all' (default {_default('neighbor_k')}).",
    )
    p.add_argument("--epochs", type=int, help=f"Training epochs (default {_default('epochs')}).")
    p.add_argument("--alpha", type=float, help=f"Drug autoencoder weight (default {_default('alpha')}).")
    p.add_argument("--beta", type=float, help=f"Disease autoencoder weight (default {_default('beta')}).")
    p.add_argument(
        "--learning-rate", type=float, help=f"Adam learning rate (default {_default('learning_rate')})."
    )
    p.add_argument(
        "--batch-size", type=int, help=f"Examples per Adam step (default {_default('batch_size')})."
    )


def build_parser() -> argparse.ArgumentParser:
    """Build the parser with one subcommand per use case."""
    parser = argparse.ArgumentParser(
        prog="nmf",
        description="Drug-disease association prediction by neural metric factorization.",
    )
    commands = parser.add_subparsers(dest="command", required=True)

    p = commands.add_parser("validate", help="Check every dataset invariant.")
    _add_data_arguments(p, require_similarity=True)
    _add_out_argument(p)

    p = commands.add_parser("train", help="Fit a model and write its checkpoint.")
    _add_data_arguments(p, require_similarity=False)
    _add_config_arguments(p)
    _add_out_argument(p)

    p = commands.add_parser("evaluate", help="Score held-out pairs and write metrics and curves.")
    p.add_argument("--checkpoint", required=True, help="Checkpoint written by train.")
    _add_data_arguments(p, require_similarity=False)
    p.add_argument("--seed", type=int, help="Split seed (default: the checkpoint's seed).")
    p.add_argument("--ratio", type=float, help="Split ratio (default: the checkpoint's ratio).")
    _add_out_argument(p)

    p = commands.add_parser("predict", help="Rank candidate diseases for one drug.")
    p.add_argument("--checkpoint", required=True, help="Checkpoint written by train.")
    _add_data_arguments(p, require_similarity=False)
    p.add_argument("--drug-id", required=True, help="Drug to rank diseases for.")
    p.add_argument("--top-n", type=int, default=10, help="Diseases to list (default 10).")
    p.add_argument(
        "--exclude-known", action="store_true", help="Leave out already associated diseases."
    )
    _add_out_argument(p)

    defaults = SyntheticParams()
    p = commands.add_parser("synth", help="Write a planted synthetic dataset.")
    p.add_argument("--n-drugs", type=int, default=defaults.n_drugs)
    p.add_argument("--n-diseases", type=int, default=defaults.n_diseases)
    p.add_argument("--latent-dim", type=int, default=defaults.latent_dim)
    p.add_argument("--density", type=float, default=defaults.density)
    p.add_argument("--noise", type=float, default=defaults.noise)
    p.add_argument("--seed", type=int, default=defaults.seed)
    p.add_argument("--format", choices=["matrix", "triples"], default="matrix")
    _add_out_argument(p)

    p = commands.add_parser("sweep", help="Train and evaluate a grid of variants and dimensions.")
    _add_data_arguments(p, require_similarity=False)
    _add_config_arguments(p)
    p.add_argument(
        "--dims",
        type=_int_list,
        default=list(LATENT_DIM_GRID),
        help="Comma-separated latent dimensions (default 8,16,32,64,128).",
    )
    p.add_argument(
        "--variants",
        type=_name_list,
        default=["nmf", "nmf_oh", "mf"],
        help="Comma-separated variants (default nmf,nmf_oh,mf).",
    )
    p.add_argument(
        "--seeds", type=_int_list, default=[0], help="Comma-separated seeds (default 0)."
    )
    _add_out_argument(p)
    return parser


def run(argv: Sequence[str] | None, service: ExperimentService) -> int:
    """
    Parse the arguments and run the chosen command.

    Returns:
        0 on success, 1 on an engine error or failed validation, 2 on anything else.
    """
    args = build_parser().parse_args(argv)
    handler = COMMANDS[args.command]
    try:
        return asyncio.run(handler(service, args))
    except NMFError as e:
        log.error(f"{args.command} failed: {e}")
        print(f"error: {e}", file=sys.stderr)
        return 1
    except Exception as e:
        log.critical(f"An unhandled error occurred in {args.command}: {e}", exc_info=True)
        print(f"internal error: {e}", file=sys.stderr)
        return 2
