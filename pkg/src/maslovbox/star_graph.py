"""Linearised NLS on a star graph with n half-line edges.

The standing wave of ``i u_t = -Δu - (p+1)|u|^{2p} u`` (frequency 1) is
``s(x) (1, ..., 1)`` with ``s(x) = sech(px)^{1/p}``.  Linearising gives

    L+ = -d²/dx² + 1 - (p+1)(2p+1) s^{2p},
    L- = -d²/dx² + 1 - (p+1) s^{2p},

acting on each edge, coupled at the vertex by Neumann-Kirchhoff conditions
(continuity plus zero total outgoing derivative).  The derivative ``s'`` solves
the ``L+`` equation at ``lambda = 0`` and ``s`` the ``L-`` one, which gives
closed forms for several quantities that the numerics must reproduce.
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .errors import AssumptionViolation
from .problem import BoundaryCondition, CoefficientModel, HalfLineSystem

OPERATORS = ("L+", "L-")


def _canonical_operator(op: str) -> str:
    key = str(op).strip().replace("_", "").replace(" ", "").lower()
    table = {"l+": "L+", "lplus": "L+", "+": "L+", "plus": "L+", "l-": "L-", "lminus": "L-", "-": "L-", "minus": "L-"}
    if key not in table:
        raise AssumptionViolation(f"unknown operator {op!r}; expected one of {OPERATORS}", quantity="operator")
    return table[key]


def neumann_kirchhoff(n: int) -> BoundaryCondition:
    """Continuity rows ``phi_j(0) - phi_{j+1}(0) = 0`` and the derivative-sum row."""
    a1 = np.zeros((n, n))
    for j in range(n - 1):
        a1[j, j], a1[j, j + 1] = 1.0, -1.0
    a2 = np.zeros((n, n))
    a2[n - 1, :] = 1.0
    return BoundaryCondition(a1, a2)


@dataclass(frozen=True)
class StarGraphNLS:
    """Parameters of the star-graph problem; ``operator`` is ``"L+"`` or ``"L-"``."""

    n: int
    p: float
    operator: str = "L+"

    def __post_init__(self):
        if int(self.n) < 1 or int(self.n) != self.n:
            raise AssumptionViolation(f"number of edges must be a positive integer, got {self.n}", quantity="n")
        if not self.p > 0:
            raise AssumptionViolation(f"nonlinearity power must be positive, got {self.p}", quantity="p")
        object.__setattr__(self, "n", int(self.n))
        object.__setattr__(self, "p", float(self.p))
        object.__setattr__(self, "operator", _canonical_operator(self.operator))

    @property
    def strength(self) -> float:
        """Coefficient ``c`` in ``v(x) = 1 - c sech²(px)``."""
        p = self.p
        return (p + 1) * (2 * p + 1) if self.operator == "L+" else p + 1

    # -- profile --------------------------------------------------------------
    def s(self, x):
        return np.cosh(self.p * np.asarray(x, dtype=float)) ** (-1.0 / self.p)

    def ds(self, x):
        x = np.asarray(x, dtype=float)
        return -self.s(x) * np.tanh(self.p * x)

    def d2s(self, x):
        x = np.asarray(x, dtype=float)
        t = np.tanh(self.p * x)
        return self.s(x) * (t**2 - self.p * (1 - t**2))

    def potential(self, x):
        """Scalar potential ``v(x)`` (the same on every edge)."""
        x = np.asarray(x, dtype=float)
        return 1.0 - self.strength / np.cosh(self.p * x) ** 2

    def zero_mode(self, x):
        """The decaying ``lambda = 0`` solution and its derivative on one edge:
        ``(s', s'')`` for ``L+``, ``(s, s')`` for ``L-``."""
        if self.operator == "L+":
            return self.ds(x), self.d2s(x)
        return self.s(x), self.ds(x)


def build_system(cfg: StarGraphNLS) -> HalfLineSystem:
    """``P = Q = I``, ``V = v(x) I``, Neumann-Kirchhoff vertex condition.

    ``v - 1 = -c sech²(px)`` is bounded by ``4c exp(-2px)``, which is the
    declared decay (``eta = 2p``, ``decay_C = 4c``).
    """
    n, c = cfg.n, cfg.strength
    I = np.eye(n)

    def ident(xs):
        return np.broadcast_to(I, np.shape(xs) + (n, n)).astype(complex)

    def V(xs):
        return cfg.potential(xs)[..., None, None] * I

    def zero(xs):
        return np.zeros(np.shape(xs) + (n, n), dtype=complex)

    model = CoefficientModel(
        n=n,
        P=ident,
        V=V,
        Q=ident,
        P_plus=I,
        V_plus=I,
        Q_plus=I,
        eta=2.0 * cfg.p,
        theta_P=1.0,
        theta_Q=1.0,
        C_V=max(1.0, c - 1.0),
        decay_C=4.0 * c,
        Pprime=zero,
        name=f"star_graph_nls(n={n}, p={cfg.p:g}, {cfg.operator})",
        constant_P=True,
    )
    return HalfLineSystem(model, neumann_kirchhoff(n), name=model.name)


def boundary_factor_eigenvalues(n: int) -> np.ndarray:
    """Eigenvalues ``a_j`` of the boundary unitary factor for Neumann-Kirchhoff:
    ``+1`` once and ``-1`` with multiplicity ``n - 1``."""
    return np.array([1.0] + [-1.0] * (n - 1), dtype=complex)


def analytic_q(cfg: StarGraphNLS, x):
    """``q(x) = (s' - i s'') / (s' + i s'')`` for the ``L+`` zero mode.

    For ``L-`` the analogous quotient is built from ``(s, s')``.  At ``x = 0``
    (``s'(0) = 0``, ``s''(0) = -p``) the ``L+`` value is ``-1``.
    """
    a, b = cfg.zero_mode(x)
    return (a - 1j * b) / (a + 1j * b)


def analytic_right_shelf(cfg: StarGraphNLS, x) -> np.ndarray:
    """Eigenvalues ``{-a_j q(x)}`` of the right-shelf pair matrix, shape ``(..., n)``."""
    q = np.asarray(analytic_q(cfg, x))
    a = boundary_factor_eigenvalues(cfg.n)
    return -q[..., None] * a


def q_plus_point(cfg: StarGraphNLS) -> float:
    """The point ``x̄ > 0`` with ``s''(x̄) = 0`` (``tanh² = p sech²``), where ``q = +1`` for ``L+``."""
    p = cfg.p
    # tanh²(px) = p (1 - tanh²(px))  =>  tanh²(px) = p / (1 + p)
    return float(np.arctanh(np.sqrt(p / (1.0 + p))) / p)


def analytic_top_shelf(cfg: StarGraphNLS, lam: float) -> np.ndarray:
    """Eigenvalues of the pair matrix of the boundary plane and the decaying
    plane ``(I; -sqrt(1 - lambda) I)``: ``(1 + ir)/(1 - ir)`` with
    multiplicity ``n - 1`` and its negative once, ``r = sqrt(1 - lambda)``."""
    if not lam < 1.0:
        raise AssumptionViolation(f"lambda = {lam} is not below the essential spectrum edge 1", quantity="lambda")
    r = np.sqrt(1.0 - lam)
    z = (1 + 1j * r) / (1 - 1j * r)
    return np.array([-z] + [z] * (cfg.n - 1))
