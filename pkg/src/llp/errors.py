"""Exception types shared across the package."""


class LLPError(Exception):
    pass


class ConfigurationError(LLPError, ValueError):
    """Invalid sizes, fractions or flags supplied by the caller."""


class PropagationError(LLPError, RuntimeError):
    """Label propagation cannot proceed (e.g. no labelled candidates)."""


class ContractViolation(LLPError, RuntimeError):
    """A precondition between two cooperating objects was broken."""
