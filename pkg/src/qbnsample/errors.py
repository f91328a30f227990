"""Exception hierarchy shared by all modules."""

from __future__ import annotations


class QbnError(Exception):
    """Base class for library errors."""


class NetFormatError(QbnError, ValueError):
    """A net, query, or CPT description is malformed.

    ``field`` names the offending node or key so callers can report it.
    """

    def __init__(self, message: str, field: str | None = None):
        super().__init__(message)
        self.field = field


class InvalidCptError(NetFormatError):
    """A probability table violates nonnegativity or normalization."""


class CycleError(NetFormatError):
    """The parent relation contains a directed cycle."""


class NumericError(QbnError):
    """Base for failures that arise while computing, not while parsing."""


class TooLargeError(NumericError):
    """A joint state space exceeds the enumeration cap."""


class ZeroEvidenceError(NumericError):
    """The evidence has probability zero under the net."""


class DegenerateError(NumericError):
    """A conditional distribution has an identically zero numerator."""


class AllRejectedError(NumericError):
    """Every importance sample was rejected (total weight is zero)."""


class ZeroProposalError(NumericError):
    """A Metropolis-Hastings ratio has a zero denominator."""


class WidthError(NumericError):
    """A circuit needs more qubits than the simulator cap allows."""


class NotUnitaryError(NumericError):
    """A matrix expected to be unitary is not."""
