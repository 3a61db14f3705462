"""Exception hierarchy for klreg.

Every error raised by the library derives from :class:`KlregError` so callers
can catch library failures without swallowing programming errors.  The leaf
classes are semantic: they name what went wrong, not where.
"""

from __future__ import annotations


class KlregError(Exception):
    """Base class for all klreg errors."""


class InvalidArgumentError(KlregError, ValueError):
    """An argument violates a documented precondition."""


class UnsupportedCombinationError(KlregError):
    """A (kind, kind) pairing that the library deliberately does not support."""


class DomainMismatchError(InvalidArgumentError):
    """Points, functions, or measures attached to incompatible domains."""


class EvaluationError(KlregError):
    """A function produced a non-finite value where a finite one was required."""


class NotDifferentiableError(KlregError):
    """Derivative requested for a representation that has none."""


class IllConditionedKernelError(KlregError):
    """Kernel Gram matrix failed to factor even at the jitter ceiling."""


class AccuracyError(KlregError):
    """A quadrature or solver could not certify the requested tolerance."""


class DivergentIntegralError(KlregError):
    """An integral failed its stabilization check and appears infinite."""


class GridTooNarrowError(KlregError):
    """A density grid misses too much probability mass to be trusted."""


class SamplerFailureError(KlregError):
    """An MCMC run ended in a state that should not be used for inference."""


class ConfigError(KlregError):
    """A scenario configuration failed validation; message names the key path."""
