"""Exception types raised by the engine.

Every error derives from ``HsimError``, itself a ``ValueError``: callers that
only care about bad input can keep catching ``ValueError``.
"""


class HsimError(ValueError):
    """Base class for all engine errors."""


class NonFiniteInputError(HsimError):
    """An input vector or matrix contains NaN or infinity."""


class ZeroVectorError(HsimError):
    """A vector norm is too small for cosine similarity."""


class DimensionMismatchError(HsimError):
    """Two vectors or arrays have incompatible dimensions."""


class OutsideBallError(HsimError):
    """A point lies on or outside the Poincaré ball boundary."""


class EmptyClassError(HsimError):
    """A class id in ``[0, c)`` has no samples."""


class EmptyBatchError(HsimError):
    """A loss was evaluated on a batch without anchors."""


class StaleMarginTableError(HsimError):
    """A margin table built for another epoch was handed to a loss."""


class TooFewClassesError(HsimError):
    """Label flipping needs at least two classes."""


class ShapeMismatchError(HsimError):
    """Parameter, gradient or moment shapes disagree."""


class MissingCacheError(HsimError):
    """``backward`` was called without a preceding caching ``forward``."""


class UnsatisfiableBatchSpecError(HsimError):
    """The dataset cannot fill the requested class-balanced batch."""


class InvalidSpecError(HsimError):
    """A synthetic dataset specification is out of range."""


class MalformedFileError(HsimError):
    """A feature or checkpoint file could not be parsed.

    Parameters
    ----------
    message : str
        Human readable description.
    line : int, optional
        1-based line number (CSV input).
    offset : int, optional
        Byte offset (binary input).
    """

    def __init__(self, message: str, *, line: int | None = None, offset: int | None = None) -> None:
        self.line = line
        self.offset = offset
        where = ""
        if line is not None:
            where = f" (line {line})"
        elif offset is not None:
            where = f" (offset {offset})"
        super().__init__(f"{message}{where}")


class InconsistentDimensionsError(HsimError):
    """Declared and actual sizes in a file disagree."""


class UnknownMagicError(HsimError):
    """A binary file does not start with the expected magic bytes."""


class KTooLargeError(HsimError):
    """A Recall@K cut-off is not smaller than the number of samples."""


class IndexOutOfRangeError(HsimError):
    """A query index does not address a sample."""


class ConfigError(HsimError):
    """Experiment configuration failed validation.

    Parameters
    ----------
    problems : list[str]
        One ``field.path: message`` entry per offending field.
    """

    def __init__(self, problems: list[str]) -> None:
        self.problems = problems
        super().__init__("invalid configuration:\n  " + "\n  ".join(problems))


class OutsideOutputRootError(HsimError):
    """A tool path resolves outside the configured output root."""
