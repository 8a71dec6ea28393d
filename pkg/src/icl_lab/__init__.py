"""Desk-scale laboratory for in-context learning of nonparametric regression.

Sample regression tasks from wavelet-coefficient priors, compute the
Bayes-optimal in-context predictor by Monte Carlo, pretrain a
from-scratch transformer by empirical risk minimization, and verify
contraction-rate slopes and distribution-shift robustness.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: F401
    ConditioningError,
    ConfigError,
    ContextLengthError,
    DegenerateLikelihoodError,
    DivergenceError,
    DomainError,
    InvalidIndexError,
    LevelError,
    LogDomainError,
    ShapeError,
    ShiftBudgetError,
    TapeError,
)
