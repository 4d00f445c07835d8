"""Exception hierarchy.

Input problems derive from :class:`InputError` (CLI exit code 2); numerical
failures and degenerate pairings derive from :class:`NumericError` (exit 3).
"""


class GsficaError(Exception):
    """Base class for all package errors."""


class InputError(GsficaError, ValueError):
    """Malformed input: bad parameters, shapes or files."""


class ParameterError(InputError):
    """Invalid distribution or configuration parameter."""


class InsufficientSampleError(InputError):
    """Too few samples for the requested dimension."""


class NumericError(GsficaError, ArithmeticError):
    """A numerical procedure failed or an integral diverged."""


class IllConditionedError(NumericError):
    """Covariance too close to singular to be whitened."""


class DegenerateError(NumericError):
    """Degenerate update or nonlinearity/source pairing (alpha close to 0)."""


class NonIdentifiableError(NumericError):
    """Source pair whose gain entry admits no finite Cramer-Rao bound."""


class UnsupportedError(GsficaError):
    """Operation not available for the given arguments."""


class ExperimentInvalidError(NumericError):
    """Monte Carlo experiment in which most trials failed to converge."""
