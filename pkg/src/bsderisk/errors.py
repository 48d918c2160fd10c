"""Failure taxonomy shared across the package.

Argument misuse raises plain ValueError/TypeError; the classes here mark
failures of the numerical machinery itself, so callers (and the CLI) can
map them to distinct exit codes.
"""

from __future__ import annotations


class BsdeRiskError(Exception):
    """Base class for domain failures raised by this package."""


class SolverFailure(BsdeRiskError):
    """Backward solver could not produce a usable solution.

    Carries the step index at which the solve broke down, when known.
    """

    def __init__(self, message: str, step: int | None = None):
        super().__init__(message)
        self.step = step


class EstimatorFailure(BsdeRiskError):
    """A Monte Carlo estimator produced unusable output (non-positive
    normalizer, non-finite values, ...). ``paths`` lists offending path
    indices when they are identifiable."""

    def __init__(self, message: str, paths=None):
        super().__init__(message)
        self.paths = paths


class SignedDensityFailure(EstimatorFailure):
    """A stochastic exponential hit a non-positive per-jump factor, so the
    candidate density cannot define a probability measure."""


class RootFailure(EstimatorFailure):
    """A bracketed root search failed to locate a sign change."""


class UnsupportedPayoff(BsdeRiskError, ValueError):
    """Payoff outside the closed family an operation supports."""


class ConfigParseError(BsdeRiskError):
    """Scenario config file is not syntactically valid."""


class ConfigValidationError(BsdeRiskError):
    """Scenario config parsed but violates the schema; message names the field."""
