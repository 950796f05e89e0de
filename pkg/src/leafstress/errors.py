"""Exception types raised across the package.

Everything derives from :class:`LeafStressError`. Subclasses of
:class:`ValidationError` signal bad inputs or configuration (CLI exit code 1);
:class:`IoError` signals filesystem or decoding-level I/O trouble (exit code 2).
"""


class LeafStressError(Exception):
    """Base class for all package errors."""


class ValidationError(LeafStressError, ValueError):
    pass


class IoError(LeafStressError, OSError):
    pass


# tensor-core
class ShapeMismatch(ValidationError):
    pass


class DomainError(ValidationError):
    pass


class InvalidAxis(ValidationError):
    pass


class InvalidParameter(ValidationError):
    pass


# neural-layers / model
class BatchTooSmall(ValidationError):
    pass


class InvalidTarget(ValidationError):
    pass


class InvalidConfig(ValidationError):
    pass


# trainer
class OutOfRange(ValidationError):
    pass


class EmptyDataset(ValidationError):
    pass


class LabelMissing(ValidationError):
    pass


class FingerprintMismatch(ValidationError):
    pass


# checkpoint files
class CheckpointError(ValidationError):
    pass


class BadMagic(CheckpointError):
    pass


class UnsupportedVersion(CheckpointError):
    pass


class TruncatedFile(CheckpointError):
    pass


class CrcMismatch(CheckpointError):
    pass


# imaging
class MalformedHeader(ValidationError):
    pass


class TruncatedPixelData(ValidationError):
    pass


class UnsupportedFormat(ValidationError):
    pass


class NoLeafFound(ValidationError):
    pass


class EmptyMask(ValidationError):
    pass


class EmptyLeafMask(EmptyMask):
    pass


class SymptomOutsideLeaf(ValidationError):
    pass


# augmentation
class InvalidFactor(ValidationError):
    pass


# metrics
class IndexOutOfRange(ValidationError, IndexError):
    pass


class EmptyMatrix(ValidationError):
    pass


# t-SNE
class CalibrationFailed(LeafStressError):
    """Bisection did not reach the entropy tolerance for some rows.

    ``rows`` lists the offending row indices; ``sigma`` holds the best
    bandwidths found so callers can decide whether to continue.
    """

    def __init__(self, message, rows=(), sigma=None):
        super().__init__(message)
        self.rows = list(rows)
        self.sigma = sigma


# dataset
class MissingHeader(ValidationError):
    pass


class UnknownLabel(ValidationError):
    def __init__(self, row, column, value):
        super().__init__(f"row {row}: unknown {column} label {value!r}")
        self.row = row
        self.column = column
        self.value = value


class MissingSeverity(LabelMissing):
    pass


class FileNotFound(ValidationError):
    pass
