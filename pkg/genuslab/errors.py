"""Exception hierarchy for genuslab.

Every exception carries the process exit code the CLI reports for it:
2 for bad input, 3 for arithmetic cases outside the implemented tables,
4 for resource caps.
"""

from __future__ import annotations

from typing import Any, Optional


class GenuslabError(Exception):
    """Base class for all errors raised by genuslab."""

    exit_code = 1


class InputError(GenuslabError):
    exit_code = 2


class UnsupportedCase(GenuslabError):
    exit_code = 3


class ResourceLimit(GenuslabError):
    exit_code = 4


class FormParseError(InputError):
    """A form file could not be read as a Gram matrix."""


class NotSymmetric(InputError):
    pass


class NotPositiveDefinite(InputError):
    pass


class DimensionOutOfRange(InputError):
    pass


class BadPrime(InputError):
    """The prime is 2 or divides the determinant."""


class InsufficientData(InputError):
    pass


class OracleOutOfRange(InputError):
    """The brute-force oracle only covers ternary forms of small determinant."""


class ConfigError(InputError):
    pass


class EmptyFamily(InputError):
    pass


class Unsupported(UnsupportedCase):
    """A local computation falls outside the implemented tables."""


class InconsistentSpinorData(UnsupportedCase):
    """Spinor labels propagated over the neighbor graph disagree on an edge."""


class DegenerateBasis(UnsupportedCase):
    pass


class RadiusTooLarge(ResourceLimit):
    pass


class CacheBusy(ResourceLimit):
    """Another process holds the cache directory lock."""


class BudgetExhausted(ResourceLimit):
    """Raised by strict enumeration when the class budget is hit.

    The partial enumeration is available as ``partial``.
    """

    def __init__(self, message: str, partial: Optional[Any] = None) -> None:
        super().__init__(message)
        self.partial = partial
