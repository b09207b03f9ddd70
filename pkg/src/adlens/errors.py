"""Exception types shared across the pipeline.

Every error that signals a contract violation derives from AdlensError so
callers (CLI, service) can map them to exit codes / HTTP statuses in one
place.
"""

from __future__ import annotations


class AdlensError(Exception):
    """Base class for all domain errors."""


class ConfigError(AdlensError):
    """Invalid or incomplete pipeline configuration."""


class SchemaError(AdlensError):
    """A corpus file does not match the declared schema."""


class DegeneratePage(AdlensError):
    """Page has too few posts or zero score variance; must be excluded."""


class InsufficientData(AdlensError):
    """Not enough data points for the requested statistic."""


class BadK(AdlensError):
    """Neighborhood size k is not smaller than the number of points."""


class NoSeedInVocabulary(AdlensError):
    """None of the seed words appear in the embedding vocabulary."""


class DimensionMismatch(AdlensError):
    """Vectors of inconsistent dimension were supplied."""


class SupportMismatch(AdlensError):
    """Two distributions do not share identical bin edges."""


class TooFewScores(AdlensError):
    """Fewer scores than the operation's stated minimum."""


class NonFiniteLoss(AdlensError):
    """KL objective became non-finite; bins/bandwidth are misconfigured."""


class TooSmall(AdlensError):
    """Array is below the minimum size for the decomposition."""


class DecodeError(AdlensError):
    """Image payload could not be decoded."""


class UnsupportedFormat(AdlensError):
    """Image payload is neither PNG nor JPEG."""


class RegistryMismatch(AdlensError):
    """Feature vector / model built against a different registry."""


class SingleClass(AdlensError):
    """Classifier training requires both classes to be present."""


class EmptyTestSet(AdlensError):
    """Evaluation requires a non-empty test set."""


class DegenerateQuartiles(AdlensError):
    """Quartile labeling produced an empty class (e.g. all scores tied)."""


class UnknownFeature(AdlensError):
    """A delta references a feature id absent from the registry."""


class BudgetExceeded(AdlensError):
    """Tuning grid is larger than the configured combination cap."""


class StageFailure(AdlensError):
    """A pipeline stage failed; carries the stage name and the cause."""

    def __init__(self, stage: str, cause: BaseException):
        super().__init__(f"stage '{stage}' failed: {cause}")
        self.stage = stage
        self.cause = cause
