"""Exception hierarchy.

The CLI maps families of these to exit codes: :class:`ConfigError` to 2,
:class:`AssumptionViolation` (and other library errors) to 3 and
:class:`NumericalFailure` to 4.
"""

from __future__ import annotations


class MaslovError(Exception):
    """Base class for all library errors."""


class DimensionError(MaslovError, ValueError):
    """Matrix shapes are inconsistent with the declared dimension."""


class AssumptionViolation(MaslovError):
    """Input violates a standing hypothesis (positivity, decay, boundary form, ...)."""

    def __init__(self, message: str, *, quantity: str | None = None, where=None):
        super().__init__(message)
        self.quantity = quantity
        self.where = where


class NotLagrangianError(AssumptionViolation):
    """A frame is rank deficient or fails the isotropy test."""


class TransversalityError(AssumptionViolation):
    """Two planes required to be transverse intersect non-trivially."""

    def __init__(self, message: str, *, pair: str | None = None, dimension: int | None = None):
        super().__init__(message, quantity=pair)
        self.pair = pair
        self.dimension = dimension


class NumericalFailure(MaslovError):
    """A computation could not reach the requested accuracy."""

    def __init__(self, message: str, *, where=None):
        super().__init__(message)
        self.where = where


class StepSizeUnderflow(NumericalFailure):
    """The adaptive integrator needed a step below the allowed minimum."""


class TrackingError(NumericalFailure):
    """Eigenvalue tracks could not be matched between neighbouring samples."""


class DegenerateSignatureError(NumericalFailure):
    """A Hermitian form has an eigenvalue too close to zero to sign reliably."""


class IndefiniteFormError(NumericalFailure):
    """A crossing form is neither definite, so it gives no direction."""


class UnconvergedError(NumericalFailure):
    """Successive refinements of a discretization disagree."""


class AmbiguousCountError(NumericalFailure):
    """An eigenvalue lies within the uncertainty margin of the cut-off."""

    def __init__(self, message: str, *, value: float | None = None, margin: float | None = None):
        super().__init__(message)
        self.value = value
        self.margin = margin


class ConfigError(MaslovError, ValueError):
    """A run configuration is malformed or refers to unknown models."""
