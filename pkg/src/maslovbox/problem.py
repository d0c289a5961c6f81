"""Half-line Sturm-Liouville systems

    -(P(x) phi')' + V(x) phi = lambda Q(x) phi,   x in [0, inf),
    alpha1 phi(0) + alpha2 P(0) phi'(0) = 0,

their standing hypotheses, the Hamiltonian form, and the vertex projector
decomposition of the boundary condition.

With ``X = (phi; P phi')`` the equation is ``J X' = B(x; lambda) X`` where
``B = diag(lambda Q - V, P^{-1})``, equivalently ``X' = A X`` with
``A = [[0, P^{-1}], [V - lambda Q, 0]]``.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Optional

import numpy as np
from scipy.interpolate import CubicSpline

from .errors import AssumptionViolation, DimensionError, MaslovError
from .symplectic import lagrangian_defect, symplectic_matrix

Evaluator = Callable[[np.ndarray], np.ndarray]

_HERM_TOL = 1e-10


def _hermitian_defect(M: np.ndarray) -> float:
    M = np.asarray(M)
    scale = max(1.0, float(np.max(np.abs(M)))) if M.size else 1.0
    return float(np.max(np.abs(M - np.swapaxes(M.conj(), -1, -2)))) / scale


def _const(M: np.ndarray) -> Evaluator:
    M = np.asarray(M, dtype=complex)

    def f(xs):
        xs = np.asarray(xs, dtype=float)
        return np.broadcast_to(M, xs.shape + M.shape).copy()

    return f


@dataclass(frozen=True)
class CoefficientModel:
    """Coefficients ``P, V, Q`` with their limits at infinity.

    The evaluators map an array of ``x`` values of shape ``(m,)`` to a stack
    of shape ``(m, n, n)``.  Set ``vectorized=False`` for evaluators that only
    take a scalar ``x`` and return one ``n x n`` matrix; they are then looped.

    ``eta`` and ``decay_C`` declare the settling rate: every coefficient obeys
    ``|C(x) - C_+| <= decay_C * exp(-eta x)``.  ``theta_P``, ``theta_Q`` and
    ``C_V`` are the declared positivity and boundedness constants.  None of
    these are inferred; :func:`validate_system` spot-checks them.
    ``constant_P`` declares ``P(x) = P_plus`` everywhere, which lets the
    integrator skip per-node inversions.
    """

    n: int
    P: Evaluator
    V: Evaluator
    Q: Evaluator
    P_plus: np.ndarray
    V_plus: np.ndarray
    Q_plus: np.ndarray
    eta: float
    theta_P: float
    theta_Q: float
    C_V: float
    decay_C: float = 1.0
    Pprime: Optional[Evaluator] = None
    vectorized: bool = True
    name: str = "custom"
    constant_P: bool = False

    def __post_init__(self):
        for attr in ("P_plus", "V_plus", "Q_plus"):
            M = np.atleast_2d(np.asarray(getattr(self, attr), dtype=complex))
            if M.shape != (self.n, self.n):
                raise DimensionError(f"{attr} has shape {M.shape}, expected {(self.n, self.n)}")
            object.__setattr__(self, attr, M)
        if not self.eta > 0:
            raise AssumptionViolation(f"decay rate eta must be positive, got {self.eta}", quantity="eta")

    # -- evaluation -----------------------------------------------------------
    def _eval(self, fn: Evaluator, xs) -> np.ndarray:
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        if self.vectorized:
            out = np.asarray(fn(xs), dtype=complex)
        else:
            out = np.array([np.asarray(fn(float(x)), dtype=complex) for x in xs])
        out = out.reshape(xs.shape + (self.n, self.n))
        return out

    def P_at(self, xs) -> np.ndarray:
        return self._eval(self.P, xs)

    def V_at(self, xs) -> np.ndarray:
        return self._eval(self.V, xs)

    def Q_at(self, xs) -> np.ndarray:
        return self._eval(self.Q, xs)

    def Pprime_at(self, xs) -> np.ndarray:
        if self.Pprime is None:
            raise MaslovError("model has no P' evaluator")
        return self._eval(self.Pprime, xs)

    # -- constructors ---------------------------------------------------------
    @classmethod
    def constant(cls, P, V, Q, *, eta: float = 1.0, name: str = "constant") -> "CoefficientModel":
        """x-independent coefficients; bounds are read off the matrices."""
        P = np.atleast_2d(np.asarray(P, dtype=complex))
        V = np.atleast_2d(np.asarray(V, dtype=complex))
        Q = np.atleast_2d(np.asarray(Q, dtype=complex))
        n = P.shape[0]
        return cls(
            n=n,
            P=_const(P),
            V=_const(V),
            Q=_const(Q),
            P_plus=P,
            V_plus=V,
            Q_plus=Q,
            eta=eta,
            theta_P=float(np.linalg.eigvalsh((P + P.conj().T) / 2).min()),
            theta_Q=float(np.linalg.eigvalsh((Q + Q.conj().T) / 2).min()),
            C_V=float(np.abs(np.linalg.eigvalsh((V + V.conj().T) / 2)).max()),
            decay_C=0.0,
            Pprime=_const(np.zeros((n, n))),
            name=name,
            constant_P=True,
        )

    @classmethod
    def tabulated(
        cls,
        grid,
        P,
        V,
        Q,
        *,
        eta: float,
        theta_P: float,
        theta_Q: float,
        C_V: float,
        decay_C: float = 1.0,
        name: str = "tabulated",
    ) -> "CoefficientModel":
        """Cubic-spline interpolation of sampled coefficients.

        ``P, V, Q`` are arrays of shape ``(m, n, n)`` on the increasing
        ``grid``.  Beyond the last grid point the coefficients are held at
        their final sample, which is also taken as the endstate.
        """
        grid = np.asarray(grid, dtype=float)
        arrs = [np.asarray(a, dtype=complex) for a in (P, V, Q)]
        n = arrs[0].shape[-1]
        for a in arrs:
            if a.shape != (grid.size, n, n):
                raise DimensionError(f"tabulated coefficient has shape {a.shape}, expected {(grid.size, n, n)}")
        splines = [CubicSpline(grid, a, axis=0) for a in arrs]
        xmax = grid[-1]

        def make(s, last):
            def f(xs):
                xs = np.asarray(xs, dtype=float)
                out = s(np.clip(xs, grid[0], xmax))
                out[xs >= xmax] = last
                return out

            return f

        dP = splines[0].derivative()

        def Pprime(xs):
            xs = np.asarray(xs, dtype=float)
            out = dP(np.clip(xs, grid[0], xmax))
            out[xs >= xmax] = 0.0
            return out

        return cls(
            n=n,
            P=make(splines[0], arrs[0][-1]),
            V=make(splines[1], arrs[1][-1]),
            Q=make(splines[2], arrs[2][-1]),
            P_plus=arrs[0][-1],
            V_plus=arrs[1][-1],
            Q_plus=arrs[2][-1],
            eta=eta,
            theta_P=theta_P,
            theta_Q=theta_Q,
            C_V=C_V,
            decay_C=decay_C,
            Pprime=Pprime,
            name=name,
        )


@dataclass(frozen=True)
class BoundaryCondition:
    """``alpha1 phi(0) + alpha2 P(0) phi'(0) = 0``."""

    alpha1: np.ndarray
    alpha2: np.ndarray

    def __post_init__(self):
        a1 = np.atleast_2d(np.asarray(self.alpha1, dtype=complex))
        a2 = np.atleast_2d(np.asarray(self.alpha2, dtype=complex))
        if a1.shape != a2.shape or a1.shape[0] != a1.shape[1]:
            raise DimensionError(f"alpha1, alpha2 must be equal square matrices: {a1.shape}, {a2.shape}")
        object.__setattr__(self, "alpha1", a1)
        object.__setattr__(self, "alpha2", a2)

    @property
    def n(self) -> int:
        return self.alpha1.shape[0]

    @property
    def alpha(self) -> np.ndarray:
        return np.hstack([self.alpha1, self.alpha2])

    def defect(self) -> float:
        """Relative size of ``alpha J alpha^*``."""
        a = self.alpha
        return float(np.linalg.norm(a @ symplectic_matrix(self.n) @ a.conj().T, 2) / np.linalg.norm(a, 2) ** 2)

    @classmethod
    def dirichlet(cls, n: int) -> "BoundaryCondition":
        return cls(np.eye(n), np.zeros((n, n)))

    @classmethod
    def neumann(cls, n: int) -> "BoundaryCondition":
        return cls(np.zeros((n, n)), np.eye(n))

    @classmethod
    def from_frame(cls, frame) -> "BoundaryCondition":
        """Condition whose boundary plane is spanned by ``frame = (X; Y)``.

        Uses ``alpha1 = Y^*``, ``alpha2 = -X^*`` so that ``J alpha^* = frame``.
        """
        F = np.asarray(frame, dtype=complex)
        n = F.shape[1]
        return cls(F[n:].conj().T, -F[:n].conj().T)


def initial_frame(bc: BoundaryCondition) -> np.ndarray:
    """Boundary frame ``J alpha^* = (-alpha2^*; alpha1^*)``."""
    return np.vstack([-bc.alpha2.conj().T, bc.alpha1.conj().T])


@dataclass(frozen=True)
class VertexProjectors:
    """Dirichlet / Neumann / Robin splitting of a boundary condition.

    ``phi(0)`` and ``w = P(0) phi'(0)`` satisfy the condition iff

        P_D phi = 0,   P_N w = 0,   P_R w = Lambda P_R phi.
    """

    P_D: np.ndarray
    P_N: np.ndarray
    P_R: np.ndarray
    Lambda: np.ndarray
    C_b: float
    hermitian_defect: float = 0.0

    def residuals(self, u: np.ndarray, w: np.ndarray) -> np.ndarray:
        """Norms of the three relations for boundary data columns ``(u, w)``."""
        u = np.atleast_2d(np.asarray(u).T).T
        w = np.atleast_2d(np.asarray(w).T).T
        return np.array(
            [
                np.linalg.norm(self.P_D @ u),
                np.linalg.norm(self.P_N @ w),
                np.linalg.norm(self.P_R @ w - self.Lambda @ self.P_R @ u),
            ]
        )


def _kernel_projector(M: np.ndarray, rtol: float = 1e-10) -> np.ndarray:
    """Orthogonal projection onto ``ker M``; singular values below
    ``rtol * max(1, |M|)`` count as zero, so ``M = 0`` gives the identity."""
    _, s, Vh = np.linalg.svd(M)
    cut = rtol * max(1.0, s[0] if s.size else 0.0)
    Z = Vh[s <= cut].conj().T
    return Z @ Z.conj().T


def vertex_projectors(bc: BoundaryCondition, tol: float = 1e-8) -> VertexProjectors:
    """Split the boundary condition into Dirichlet, Neumann and Robin parts.

    ``P_D`` projects onto ``ker alpha2`` and ``P_N`` onto ``ker alpha1``.  On
    the remainder, ``Lambda`` is obtained by least squares: for each basis
    vector ``b`` of ``range P_R`` solve ``-alpha2^* c = b`` and read off
    ``P_R alpha1^* c``.
    """
    n = bc.n
    a1, a2 = bc.alpha1, bc.alpha2
    P_D = _kernel_projector(a2)
    P_N = _kernel_projector(a1)
    P_R = np.eye(n) - P_D - P_N
    P_R = (P_R + P_R.conj().T) / 2
    if np.linalg.norm(P_D @ P_N, 2) > tol or np.linalg.norm(P_R @ P_R - P_R, 2) > tol:
        raise MaslovError("boundary kernels are not orthogonal; the condition is not self-adjoint")
    evals, evecs = np.linalg.eigh(P_R)
    B_R = evecs[:, evals > 0.5]
    k = B_R.shape[1]
    if k == 0:
        return VertexProjectors(P_D, P_N, np.zeros((n, n), dtype=complex), np.zeros((n, n), dtype=complex), 0.0)
    C, *_ = np.linalg.lstsq(-a2.conj().T, B_R, rcond=None)
    resid = np.linalg.norm(-a2.conj().T @ C - B_R)
    if resid > tol * max(1.0, np.linalg.norm(a2)):
        raise MaslovError(f"Robin block is not solvable (residual {resid:.2e})")
    L_R = B_R.conj().T @ (a1.conj().T @ C)  # k x k, should be Hermitian
    herm = float(np.linalg.norm(L_R - L_R.conj().T, 2) / max(np.linalg.norm(L_R, 2), 1e-300))
    if herm > 1e-6:
        raise MaslovError(f"Robin block is not Hermitian (defect {herm:.2e})")
    L_R = (L_R + L_R.conj().T) / 2
    if np.linalg.svd(L_R, compute_uv=False)[-1] <= tol * max(np.linalg.norm(L_R, 2), 1.0):
        raise MaslovError("Robin block is singular on range(P_R)")
    Lam = B_R @ L_R @ B_R.conj().T
    return VertexProjectors(P_D, P_N, P_R, Lam, float(np.linalg.norm(L_R, 2)), herm)


@dataclass
class ValidationReport:
    """Outcome of :func:`validate_system`.

    ``margins`` holds the worst slack per checked quantity (positive means
    satisfied); ``violations`` lists ``(quantity, x, detail)`` triples.
    """

    ok: bool
    margins: dict = field(default_factory=dict)
    violations: list = field(default_factory=list)

    def raise_if_failed(self):
        if not self.ok:
            q, x, detail = self.violations[0]
            where = "" if x is None else f" at x = {x:.6g}"
            raise AssumptionViolation(f"{q} violated{where}: {detail}", quantity=q, where=x)


def validate_system(
    model: CoefficientModel,
    bc: BoundaryCondition,
    sample_grid=None,
    *,
    tol: float = 1e-8,
    raise_on_failure: bool = False,
) -> ValidationReport:
    """Spot-check every standing hypothesis at the sample points."""
    if sample_grid is None:
        sample_grid = np.linspace(0.0, 40.0 / model.eta, 401)
    xs = np.atleast_1d(np.asarray(sample_grid, dtype=float))
    if xs.size == 0:
        raise ValueError("sample grid is empty")
    rep = ValidationReport(ok=True)

    def check(name, slack, x=None, detail=""):
        prev = rep.margins.get(name, np.inf)
        rep.margins[name] = min(prev, float(slack))
        if slack < 0:
            rep.ok = False
            rep.violations.append((name, x, detail))

    if bc.n != model.n:
        raise DimensionError(f"boundary condition has n = {bc.n}, model has n = {model.n}")

    # boundary condition
    rank = np.linalg.matrix_rank(bc.alpha, tol=1e-10 * np.linalg.norm(bc.alpha, 2))
    check("rank_alpha", rank - model.n, None, f"rank {rank} < {model.n}")
    d = bc.defect()
    check("alpha_J_alpha", tol - d, None, f"|alpha J alpha^*| = {d:.3e}")

    P, V, Q = model.P_at(xs), model.V_at(xs), model.Q_at(xs)
    ends = {"P": (P, model.P_plus), "V": (V, model.V_plus), "Q": (Q, model.Q_plus)}
    for name, (S, plus) in ends.items():
        hd = np.array([_hermitian_defect(M) for M in S])
        i = int(np.argmax(hd))
        check(f"hermitian_{name}", _HERM_TOL - hd[i], xs[i], f"defect {hd[i]:.2e}")
        check(f"hermitian_{name}_plus", _HERM_TOL - _hermitian_defect(plus), None, "endstate not Hermitian")
        # decay towards the endstate
        dev = np.linalg.norm(S - plus, ord=2, axis=(1, 2))
        bound = model.decay_C * np.exp(-model.eta * xs)
        slack = bound * (1 + 1e-6) + 1e-12 - dev
        i = int(np.argmin(slack))
        check(f"decay_{name}", slack[i], xs[i], f"|{name}-{name}+| = {dev[i]:.3e} > {bound[i]:.3e}")
        if name == "P" and model.constant_P:
            i = int(np.argmax(dev))
            check("constant_P", tol * (1 + np.linalg.norm(plus, 2)) - dev[i], xs[i], "P varies but constant_P is declared")

    herm = lambda S: (S + np.swapaxes(S.conj(), -1, -2)) / 2  # noqa: E731
    for name, S, plus, theta in (("P", P, model.P_plus, model.theta_P), ("Q", Q, model.Q_plus, model.theta_Q)):
        if not theta > 0:
            check(f"theta_{name}", -1.0, None, f"declared theta_{name} = {theta} is not positive")
            continue
        ev = np.linalg.eigvalsh(herm(S))[:, 0]
        i = int(np.argmin(ev))
        check(f"theta_{name}", ev[i] - theta * (1 - 1e-9), xs[i], f"min eigenvalue {ev[i]:.6g} < {theta}")
        evp = float(np.linalg.eigvalsh(herm(plus))[0])
        check(f"theta_{name}", evp - theta * (1 - 1e-9), np.inf, f"endstate min eigenvalue {evp:.6g} < {theta}")
    ev = np.abs(np.linalg.eigvalsh(herm(V))).max(axis=1)
    i = int(np.argmax(ev))
    check("C_V", model.C_V * (1 + 1e-9) + 1e-12 - ev[i], xs[i], f"|V| = {ev[i]:.6g} > C_V = {model.C_V}")

    if model.Pprime is not None:
        h = 1e-5
        xi = xs[xs > h]
        if xi.size:
            fd = (model.P_at(xi + h) - model.P_at(xi - h)) / (2 * h)
            err = np.abs(fd - model.Pprime_at(xi)).max(axis=(1, 2))
            scale = 1.0 + np.abs(fd).max(axis=(1, 2))
            j = int(np.argmax(err / scale))
            check("Pprime", 1e-4 - err[j] / scale[j], xi[j], f"P' mismatch {err[j]:.2e}")

    if raise_on_failure:
        rep.raise_if_failed()
    return rep


@dataclass(frozen=True)
class HalfLineSystem:
    """A coefficient model together with a boundary condition at ``x = 0``."""

    model: CoefficientModel
    bc: BoundaryCondition
    name: str = "system"

    def __post_init__(self):
        if self.model.n != self.bc.n:
            raise DimensionError(f"model n = {self.model.n} but boundary condition n = {self.bc.n}")

    @property
    def n(self) -> int:
        return self.model.n

    @cached_property
    def projectors(self) -> VertexProjectors:
        return vertex_projectors(self.bc)

    @cached_property
    def kappa(self) -> float:
        from .asymptotics import essential_edge

        return essential_edge(self.model.P_plus, self.model.V_plus, self.model.Q_plus).kappa

    def validate(self, sample_grid=None, **kw) -> ValidationReport:
        return validate_system(self.model, self.bc, sample_grid, **kw)

    def initial_frame(self) -> np.ndarray:
        return initial_frame(self.bc)

    # -- Hamiltonian form -----------------------------------------------------
    def B(self, x, lam: float) -> np.ndarray:
        """``diag(lambda Q - V, P^{-1})`` at ``x`` (scalar or array)."""
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        n = self.n
        out = np.zeros(xs.shape + (2 * n, 2 * n), dtype=complex)
        out[..., :n, :n] = lam * self.model.Q_at(xs) - self.model.V_at(xs)
        out[..., n:, n:] = np.linalg.inv(self.model.P_at(xs))
        return out[0] if np.ndim(x) == 0 else out

    def B_lambda(self, x, lam: float = 0.0) -> np.ndarray:
        """``d B / d lambda = diag(Q, 0)``."""
        xs = np.atleast_1d(np.asarray(x, dtype=float))
        n = self.n
        out = np.zeros(xs.shape + (2 * n, 2 * n), dtype=complex)
        out[..., :n, :n] = self.model.Q_at(xs)
        return out[0] if np.ndim(x) == 0 else out

    def A(self, xs, lam: float) -> np.ndarray:
        """Generator of ``X' = A X``: ``[[0, P^{-1}], [V - lambda Q, 0]]``, stacked over ``xs``."""
        xs = np.atleast_1d(np.asarray(xs, dtype=float))
        n = self.n
        out = np.zeros(xs.shape + (2 * n, 2 * n), dtype=complex)
        if self.model.constant_P:
            out[..., :n, n:] = self._P_plus_inv
        else:
            out[..., :n, n:] = np.linalg.inv(self.model.P_at(xs))
        out[..., n:, :n] = self.model.V_at(xs) - lam * self.model.Q_at(xs)
        return out

    @cached_property
    def _P_plus_inv(self) -> np.ndarray:
        return np.linalg.inv(self.model.P_plus)


def boundary_frame_defect(bc: BoundaryCondition) -> float:
    return lagrangian_defect(initial_frame(bc))
