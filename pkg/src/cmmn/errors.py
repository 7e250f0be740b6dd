"""Exception types raised by the cmmn package.

Every error derives from :class:`CmmnError`, itself a ``ValueError``, so
callers that only care about "bad input" can catch one type. The CLI maps
these to exit code 1; ``OSError`` maps to exit code 2.
"""


class CmmnError(ValueError):
    """Base class for validation errors."""


class EmptyInputError(CmmnError):
    pass


class FilterTooLargeError(CmmnError):
    pass


class NonFiniteError(CmmnError):
    pass


class LengthMismatchError(CmmnError):
    pass


class NegativeBinError(CmmnError):
    pass


class DimMismatchError(CmmnError):
    pass


class NotSymmetricError(CmmnError):
    pass


class NotPsdError(CmmnError):
    pass


class SingularSourceError(CmmnError):
    pass


class ChannelMismatchError(CmmnError):
    pass


class UnknownDomainError(CmmnError, KeyError):
    pass


class InvalidSpecError(CmmnError):
    pass


class TooFewDomainsError(CmmnError):
    pass


class EmptyBandError(CmmnError):
    pass


class FormatError(CmmnError):
    """Manifest or model document is malformed or has an unknown version."""


class SizeMismatchError(CmmnError):
    """A binary file does not hold the number of bytes its manifest declares."""


class NoConvergenceWarning(RuntimeWarning):
    """Fixed-point solver stopped at ``max_iter`` above tolerance."""
