"""Morse indices of half-line Sturm-Liouville systems from Maslov indices.

The eigenvalues of ``-(P phi')' + V phi = lambda Q phi`` on ``[0, inf)`` below
a reference value are counted as the spectral flow of a unitary pair matrix
through ``-1`` along the edges of a box in the ``(lambda, x)`` plane.  An
independent finite-difference count is provided for validation.
"""

__version__ = "0.1.0"

from .errors import (  # noqa: E402
    AmbiguousCountError,
    AssumptionViolation,
    ConfigError,
    MaslovError,
    NotLagrangianError,
    NumericalFailure,
    TransversalityError,
)
from .problem import BoundaryCondition, CoefficientModel, HalfLineSystem, validate_system  # noqa: E402
from .spectral_flow import maslov_index, spectral_flow, track_path  # noqa: E402
from .hormander import hormander_index, q_form  # noqa: E402
from .morse import (  # noqa: E402
    MaslovBox,
    MorseOptions,
    MorseReport,
    check_boundary_inconjugate,
    morse_all,
    morse_via_corollary,
    morse_via_target0,
    morse_via_targetplus,
)
from .fd_oracle import count_below, eigenvalues_below  # noqa: E402
from .star_graph import StarGraphNLS, build_system  # noqa: E402

__all__ = [
    "AmbiguousCountError",
    "AssumptionViolation",
    "BoundaryCondition",
    "CoefficientModel",
    "ConfigError",
    "HalfLineSystem",
    "MaslovBox",
    "MaslovError",
    "MorseOptions",
    "MorseReport",
    "NotLagrangianError",
    "NumericalFailure",
    "StarGraphNLS",
    "TransversalityError",
    "build_system",
    "check_boundary_inconjugate",
    "count_below",
    "eigenvalues_below",
    "hormander_index",
    "maslov_index",
    "morse_all",
    "morse_via_corollary",
    "morse_via_target0",
    "morse_via_targetplus",
    "q_form",
    "spectral_flow",
    "track_path",
    "validate_system",
]
