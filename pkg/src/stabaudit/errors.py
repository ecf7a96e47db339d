"""Exception types shared across the package.

Every error raised by stabaudit derives from :class:`StabauditError` so
callers can catch the whole family at a pipeline boundary.
"""

from __future__ import annotations


class StabauditError(Exception):
    """Base class for all stabaudit errors."""


# ---------------------------------------------------------------------------
# data ingestion / featurization


class MissingTargetError(StabauditError):
    """The configured target column is absent from the CSV header."""


class RaggedRowError(StabauditError):
    """A CSV row has a different cell count than the header."""

    def __init__(self, row_index: int, expected: int, got: int):
        self.row_index = row_index
        super().__init__(
            f"row {row_index}: expected {expected} cells, got {got}"
        )


class NonBinaryTargetError(StabauditError):
    """The target column does not contain exactly two distinct values."""

    def __init__(self, values):
        self.values = sorted(values)
        super().__init__(f"target must be binary, found values {self.values}")


class DegenerateSplitError(StabauditError):
    """A train/test split left one side empty."""


# ---------------------------------------------------------------------------
# training


class SingleClassTrainingSetError(StabauditError):
    """Training labels contain only one class."""


class DivergedLossError(StabauditError):
    """Non-finite loss or parameters encountered during training."""


class DegenerateHoldoutError(StabauditError):
    """Calibration holdout contains a single class."""


class SingularPrecisionError(StabauditError):
    """The posterior precision matrix is not positive definite."""


# ---------------------------------------------------------------------------
# rashomon construction


class EmptyRashomonSetError(StabauditError):
    """No candidate model satisfied the membership inequality.

    Usually a signal that epsilon is too small for the sampled models.
    """


# ---------------------------------------------------------------------------
# metrics


class LengthMismatchError(StabauditError):
    """Two per-sample vectors have different lengths."""

    def __init__(self, len_a: int, len_b: int):
        super().__init__(f"length mismatch: {len_a} vs {len_b}")


class BadRowIndexError(StabauditError):
    """A referenced model row does not exist in the prediction matrix."""


# ---------------------------------------------------------------------------
# bounds


class InsufficientPairsError(StabauditError):
    """The zero-churn-difference test needs at least two model pairs."""


# ---------------------------------------------------------------------------
# orchestration


class ConfigError(StabauditError):
    """Experiment config failed validation; carries per-field diagnostics."""

    def __init__(self, problems):
        self.problems = list(problems)
        super().__init__("invalid config:\n" + "\n".join(self.problems))


class MissingStageError(StabauditError):
    """A pipeline stage was requested before its inputs were cached."""
