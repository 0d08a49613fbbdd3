"""Exception types shared across the package."""

from __future__ import annotations


class ArchEvalError(Exception):
    """Base class for all package errors."""


class ImageReadError(ArchEvalError, OSError):
    """The image file could not be read from disk."""


class ImageFormatError(ArchEvalError, ValueError):
    """Bytes could not be decoded, or the raster has an unsupported layout."""


class FeatureExtractionError(ArchEvalError):
    pass


class ContractViolation(ArchEvalError, ValueError):
    """A documented precondition was broken by the caller."""


class DatasetError(ArchEvalError):
    """The dataset directory does not follow the label-per-subdirectory layout."""


class IndexFormatError(ArchEvalError):
    pass


class IncompatibleIndexError(IndexFormatError):
    """The index file was written by an incompatible format version."""


class CorruptIndexError(IndexFormatError):
    """The index file is truncated or otherwise malformed."""


class ConfigMismatchError(ArchEvalError):
    """Features were extracted under a different pipeline configuration."""


class DegenerateIndexError(ArchEvalError):
    """The index cannot support the requested evaluation (too few records or labels)."""


class UnknownQAError(ArchEvalError, KeyError):
    def __str__(self) -> str:
        return Exception.__str__(self)


class KBValidationError(ArchEvalError):
    """Raised with the complete list of violations found in a knowledge-base file."""

    def __init__(self, violations: list[str]):
        self.violations = list(violations)
        super().__init__(f"{len(self.violations)} knowledge-base violation(s):\n" + "\n".join(
            f"  - {v}" for v in self.violations))


class StageError(ArchEvalError):
    """Wraps a failure in one stage of the evaluation pipeline."""

    def __init__(self, stage: str, cause: BaseException):
        self.stage = stage
        self.cause = cause
        super().__init__(f"[{stage}] {cause}")


class QualityGateError(ArchEvalError):
    """An image was refused by the ingestion quality gate."""
