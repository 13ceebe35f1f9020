"""Error taxonomy shared across the package.

Exit-code mapping used by the CLI: configuration/argument problems exit 2,
failed verification checks exit 1, numerical failures exit 3.
"""


class SoftGossipError(Exception):
    """Base class for all package errors."""


class ConfigurationError(SoftGossipError):
    """Invalid configuration: bad schema, unknown keys, inconsistent blocks."""


class ArgumentError(SoftGossipError):
    """Invalid argument to a library call: shape mismatch, broken invariant."""


class CapacityError(ArgumentError):
    """Problem size exceeds what an exhaustive routine is willing to do."""


class NumericalError(SoftGossipError):
    """An iterative routine failed to reach its required tolerance."""


class RetransmissionError(ConfigurationError):
    """A retransmitting link has zero delivery probability and cannot finish."""


class CheckFailure(SoftGossipError):
    """An asserted verification check did not pass."""
