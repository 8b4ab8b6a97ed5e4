"""Exception hierarchy.

``DataError`` subclasses map to CLI exit code 2, ``BackendError`` to 3.
"""


class AugcapError(Exception):
    pass


class DataError(AugcapError):
    """Input data is malformed or violates a precondition."""


class NotWav(DataError):
    pass


class UnsupportedEncoding(DataError):
    pass


class CorruptHeader(DataError):
    pass


class ClipTooShort(DataError):
    pass


class RateMismatch(DataError):
    pass


class SilentInput(DataError):
    pass


class CorpusTooSmall(DataError):
    pass


class MissingSource(DataError):
    pass


class NoInvertibleTransforms(DataError):
    pass


class NotEnoughEligible(DataError):
    pass


class DimensionMismatch(DataError):
    pass


class MissingIds(DataError):
    pass


class BackendError(AugcapError):
    """The caption backend failed after exhausting retries."""


class ParseError(BackendError):
    """A backend response could not be parsed; ``raw`` keeps the text for audit."""

    def __init__(self, message: str, raw: str):
        super().__init__(message)
        self.raw = raw
