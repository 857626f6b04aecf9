"""
The main entry point for the drug-disease association engine.

This script is responsible for setting up logging, initializing all layers
of the application (repositories, the experiment service and the
command-line surface), and running one command.
"""

import logging
import sys

from application.services import ExperimentService
from cli.app import run
from config import settings
from infrastructure.persistence import JsonCheckpointRepository, RunDirectory
from infrastructure.tabular import TsvDatasetStore

log = logging.getLogger(__name__)


def configure_logging() -> None:
    """Send structured log lines to standard error at the NMF_LOG_LEVEL verbosity."""
    logging.basicConfig(
        level=settings.logging_level,
        format="%(asctime)s [%(levelname)s] [%(name)s] %(message)s",
        datefmt="%Y-%m-%d %H:%M:%S",
        stream=sys.stderr,
    )


def build_service() -> ExperimentService:
    """Wire the repositories (Infrastructure Layer) into the application service."""
    return ExperimentService(
        datasets=TsvDatasetStore(),
        checkpoints=JsonCheckpointRepository,
        artifacts=RunDirectory,
    )


def main(argv: list[str] | None = None) -> int:
    configure_logging()
    try:
        return run(argv, build_service())
    except KeyboardInterrupt:
        log.info("Interrupted by user.")
        return 130


if __name__ == "__main__":
    sys.exit(main())
