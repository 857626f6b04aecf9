"""
Defines the exception hierarchy shared by every layer of the engine.

Domain code raises these; the services let them propagate; the CLI layer
catches `NMFError`, reports it, and turns it into a nonzero exit status.
"""

from dataclasses import dataclass


class NMFError(Exception):
    """Base class for every error the engine raises on purpose."""


@dataclass(frozen=True)
class Violation:
    """A single broken data invariant, with the place it was found."""

    location: str
    message: str

    def __str__(self) -> str:
        return f"{self.location}: {self.message}"


class DatasetError(NMFError):
    """Raised when input data cannot be parsed or used."""


class DatasetValidationError(DatasetError):
    """Raised when data parses but breaks one or more invariants.

    Carries every violation found, so a report can list them all instead
    of stopping at the first.
    """

    def __init__(self, violations: list[Violation]):
        self.violations = list(violations)
        summary = "; ".join(str(v) for v in self.violations[:5])
        if len(self.violations) > 5:
            summary += f"; ... ({len(self.violations) - 5} more)"
        super().__init__(summary)


class ShapeError(NMFError, ValueError):
    """Raised when array shapes do not conform."""


class GradientError(NMFError):
    """Raised when a gradient or loss value is not finite."""


class DivergenceError(NMFError):
    """Raised when training produces a non-finite loss."""


class EvaluationError(NMFError):
    """Raised when a metric is undefined for the given scored pairs."""


class PersistenceError(NMFError):
    """Raised when a checkpoint or run artifact cannot be read or written."""


class CheckpointVersionError(PersistenceError):
    """Raised when a checkpoint carries an unknown format tag."""


class VariantMismatchError(PersistenceError):
    """Raised when a checkpoint's variant differs from the one requested."""


class ConfigError(NMFError):
    """Raised when a run configuration file or override is invalid."""
