class KolmoError(Exception):
    """Base class for all kolmoprice errors."""


class ConfigError(KolmoError, ValueError):
    """Invalid configuration; the message starts with the offending field path."""


class DomainError(KolmoError, ValueError):
    """Mathematically invalid input (degenerate grid, strike outside domain, σ ≤ 0, ...)."""


class NumericError(KolmoError, RuntimeError):
    """A numerical stage failed or its accuracy preconditions do not hold."""


class PostSelectionError(NumericError):
    """Retrieval left (almost) nothing to post-select on."""
