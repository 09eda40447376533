"""
Exception hierarchy for the stochastic-integration engine.
"""


class ItoIntError(Exception):
    """Base class for all engine errors."""


class UsageError(ItoIntError, ValueError):
    """A precondition of an operation was violated by the caller."""


class ConfigError(ItoIntError, ValueError):
    """The experiment configuration is invalid."""


class OffGridError(ItoIntError, ValueError):
    """A time was requested that is not a knot of the path's grid."""


class RefinementMismatchError(ItoIntError, ValueError):
    """The fine grid does not contain every knot of the path being refined."""


class PrefixReadError(ItoIntError, LookupError):
    """A functional tried to read the path beyond its prefix cutoff."""


class InapplicableCheckError(ItoIntError, ValueError):
    """A verification check was requested for an integrand outside its hypotheses."""
