"""Exception hierarchy.

``DataError`` subclasses describe bad input (exit code 2 in the CLI);
anything else escaping the library is treated as an internal failure.
"""


class TSRError(Exception):
    pass


class DataError(TSRError):
    pass


class UnsupportedFormat(DataError):
    pass


class CorruptFile(DataError):
    pass


class EmptyShape(DataError):
    pass


class EmptyDirectory(DataError):
    pass


class DatasetLoadError(DataError):
    """Raised in strict mode when any file of a dataset fails to load."""

    def __init__(self, failures):
        self.failures = list(failures)
        names = ", ".join(str(p) for p, _ in self.failures[:5])
        super().__init__(f"{len(self.failures)} file(s) failed to load: {names}")


class VersionMismatch(DataError):
    pass


class ChecksumFailure(DataError):
    pass


class DegenerateShape(DataError):
    pass


class TooFewContourPixels(DegenerateShape):
    pass


class DisconnectedInterior(TSRError):
    pass


class DimensionMismatch(TSRError):
    pass


class InvalidM(DataError):
    pass


class EigenFailure(TSRError):
    pass


class SingleClassTraining(DataError):
    pass


class NonFiniteFeature(DataError):
    pass


class EmptyGallery(DataError):
    pass


class RankingTooShort(DataError):
    pass


class IncompatibleIndex(DataError):
    pass


class ZeroBandwidth(UserWarning):
    """A shape had too many zero-distance duplicates for its kernel bandwidth."""


class SubsetTooSmall(UserWarning):
    """A diffusion subset was smaller than the locality size, which was shrunk."""
