"""Exception types shared across the package."""


class InvalidIndexError(ValueError):
    """A wavelet index is malformed or out of range for its basis."""


class LevelError(ValueError):
    """A resolution level lies below the basis' coarsest level."""


class DomainError(ValueError):
    """A point lies outside the domain a function is defined on."""


class ShapeError(ValueError):
    """Tensor shapes are incompatible for the requested operation."""


class TapeError(RuntimeError):
    """A gradient tape was reused after being consumed."""


class ContextLengthError(ValueError):
    """Prompt length is zero or exceeds the configured maximum context."""


class DegenerateLikelihoodError(ValueError):
    """Likelihood computations were requested with zero noise scale."""


class ConditioningError(RuntimeError):
    """All posterior sample weights vanished; conditioning is impossible."""


class DivergenceError(RuntimeError):
    """Training produced a non-finite loss."""

    def __init__(self, step: int, message: str = ""):
        self.step = step
        super().__init__(message or f"non-finite loss at step {step}")


class ConfigError(ValueError):
    """An experiment configuration is invalid.

    ``problems`` collects every violation found, not just the first.
    """

    def __init__(self, problems):
        if isinstance(problems, str):
            problems = [problems]
        self.problems = list(problems)
        super().__init__("; ".join(self.problems))


class ShiftBudgetError(ConfigError):
    """A distribution shift exceeds its configured chi-squared budget."""


class LogDomainError(ValueError):
    """A log-log fit was requested on nonpositive values."""
