"""Lagrangian frames in C^{2n}, the pair matrix, and intersection counts.

A *frame* is a ``2n x n`` complex matrix ``F = (X; Y)`` of full rank whose
column span is Lagrangian for ``J = [[0, -I], [I, 0]]``, i.e. ``F^* J F = 0``.
Functions accept either a raw array or a :class:`LagrangianFrame`.

The pair matrix of two frames is

    W = -(X1 + iY1)(X1 - iY1)^{-1} (X2 - iY2)(X2 + iY2)^{-1},

a unitary matrix with ``dim ker(W + I) = dim(l1 ∩ l2)``.  It depends only on
the two subspaces, not on the frames chosen for them.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from functools import lru_cache

import numpy as np

from .errors import DimensionError, NotLagrangianError

#: angular window around ``pi`` that counts as "eigenvalue -1"
CROSSING_TOL = 1e-6
#: relative singular-value threshold for the rank test
RANK_TOL = 1e-10


@dataclass(frozen=True)
class SymplecticForm:
    """The standard symplectic form on ``C^{2n}``."""

    n: int

    def __post_init__(self):
        if int(self.n) < 1:
            raise DimensionError(f"half-dimension must be positive, got {self.n}")

    @property
    def J(self) -> np.ndarray:
        return symplectic_matrix(self.n)

    def __call__(self, u, v) -> complex:
        """``(J u, v) = v^* J u``."""
        return complex(np.vdot(np.asarray(v), self.J @ np.asarray(u)))


@lru_cache(maxsize=32)
def _J(n: int) -> np.ndarray:
    I = np.eye(n)
    Z = np.zeros((n, n))
    J = np.block([[Z, -I], [I, Z]])
    J.setflags(write=False)
    return J


def symplectic_matrix(n: int) -> np.ndarray:
    """Return ``J`` for half-dimension ``n`` (read-only array)."""
    return _J(int(n))


@dataclass(frozen=True)
class LagrangianFrame:
    """Stacked frame ``(X; Y)``.  ``matrix`` is the ``2n x n`` array."""

    matrix: np.ndarray

    def __post_init__(self):
        object.__setattr__(self, "matrix", _as_array(self.matrix))

    @classmethod
    def from_blocks(cls, X, Y) -> "LagrangianFrame":
        X = np.atleast_2d(np.asarray(X, dtype=complex))
        Y = np.atleast_2d(np.asarray(Y, dtype=complex))
        if X.shape != Y.shape or X.shape[0] != X.shape[1]:
            raise DimensionError(f"blocks must be equal square matrices, got {X.shape} and {Y.shape}")
        return cls(np.vstack([X, Y]))

    @property
    def n(self) -> int:
        return self.matrix.shape[1]

    @property
    def X(self) -> np.ndarray:
        return self.matrix[: self.n]

    @property
    def Y(self) -> np.ndarray:
        return self.matrix[self.n :]

    def __array__(self, dtype=None, copy=None):
        return self.matrix if dtype is None else self.matrix.astype(dtype)


def _as_array(frame) -> np.ndarray:
    if isinstance(frame, LagrangianFrame):
        return frame.matrix
    F = np.asarray(frame, dtype=complex)
    if F.ndim == 1:
        F = F.reshape(-1, 1)
    if F.ndim != 2 or F.shape[0] != 2 * F.shape[1]:
        raise DimensionError(f"a frame must be 2n x n, got shape {F.shape}")
    return F


def as_frame(frame) -> np.ndarray:
    """Coerce to a complex ``2n x n`` array, checking the shape."""
    return _as_array(frame)


def dirichlet_frame(n: int) -> np.ndarray:
    """Frame ``(0; I)`` of the Dirichlet plane."""
    return np.vstack([np.zeros((n, n)), np.eye(n)]).astype(complex)


def neumann_frame(n: int) -> np.ndarray:
    """Frame ``(I; 0)`` of the Neumann plane."""
    return np.vstack([np.eye(n), np.zeros((n, n))]).astype(complex)


def frame_from_unitary(U) -> np.ndarray:
    """Frame ``((I+U)/2; (I-U)/(2i))`` whose plane has ``(X-iY)(X+iY)^{-1} = U``.

    Every Lagrangian plane arises this way from exactly one unitary ``U``,
    which makes this the natural parametrisation for random planes and for
    explicit paths (rotate the eigenphases of ``U``).
    """
    U = np.atleast_2d(np.asarray(U, dtype=complex))
    I = np.eye(U.shape[0])
    return np.vstack([(I + U) / 2.0, (I - U) / 2j])


def plane_unitary(frame) -> np.ndarray:
    """Inverse of :func:`frame_from_unitary`: ``(X - iY)(X + iY)^{-1}``."""
    F = orthonormal_frame(frame)
    n = F.shape[1]
    X, Y = F[:n], F[n:]
    return np.linalg.solve((X + 1j * Y).T, (X - 1j * Y).T).T


def random_unitary(n: int, rng: np.random.Generator) -> np.ndarray:
    """Haar-distributed ``n x n`` unitary."""
    Z = (rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n))) / np.sqrt(2.0)
    Q, R = np.linalg.qr(Z)
    d = np.diag(R)
    return Q * (d / np.abs(d))


def random_lagrangian_frame(n: int, rng: np.random.Generator) -> np.ndarray:
    """Orthonormal frame of a Haar-random Lagrangian plane."""
    return orthonormal_frame(frame_from_unitary(random_unitary(n, rng)))


def orthonormal_frame(frame) -> np.ndarray:
    """Orthonormal basis (thin QR) of the frame's column span."""
    Q, _ = np.linalg.qr(_as_array(frame))
    return Q


def lagrangian_defect(frame) -> float:
    """Scale-free isotropy defect ``||F^* J F|| / ||F||^2`` (spectral norms).

    Equals ``||F^* J F||`` for orthonormal frames.
    """
    F = _as_array(frame)
    J = symplectic_matrix(F.shape[1])
    nrm = np.linalg.norm(F, 2)
    if nrm == 0.0:
        return np.inf
    return float(np.linalg.norm(F.conj().T @ J @ F, 2) / nrm**2)


def lagrangian_defects(frames: np.ndarray) -> np.ndarray:
    """Vectorised :func:`lagrangian_defect` over a stack of orthonormal frames."""
    F = np.asarray(frames)
    n = F.shape[-1]
    X, Y = F[..., :n, :], F[..., n:, :]
    S = np.swapaxes(Y.conj(), -1, -2) @ X - np.swapaxes(X.conj(), -1, -2) @ Y
    return np.linalg.norm(S, ord=2, axis=(-2, -1))


def is_lagrangian(frame, tol: float = RANK_TOL) -> bool:
    """True iff the frame has rank ``n`` and ``F^* J F`` vanishes to ``tol``.

    Rank uses a relative singular-value threshold; isotropy is measured by
    :func:`lagrangian_defect`, which is invariant under rescaling.
    """
    F = _as_array(frame)
    s = np.linalg.svd(F, compute_uv=False)
    if s[0] == 0.0 or s[-1] <= tol * s[0]:
        return False
    return lagrangian_defect(F) <= tol


def require_lagrangian(frame, tol: float = 1e-8, name: str = "frame") -> np.ndarray:
    F = _as_array(frame)
    if not is_lagrangian(F, tol):
        raise NotLagrangianError(
            f"{name} is not Lagrangian (defect {lagrangian_defect(F):.3e})", quantity="lagrangian_defect"
        )
    return F


def projector(frame) -> np.ndarray:
    """Orthogonal projection ``X (X^* X)^{-1} X^*`` onto the column span."""
    F = _as_array(frame)
    s = np.linalg.svd(F, compute_uv=False)
    if s[-1] <= RANK_TOL * s[0]:
        raise NotLagrangianError("rank-deficient frame", quantity="rank")
    Q = orthonormal_frame(F)
    return Q @ Q.conj().T


def grassmannian_distance(f1, f2) -> float:
    """Spectral-norm distance between the orthogonal projections."""
    F1, F2 = _as_array(f1), _as_array(f2)
    if F1.shape != F2.shape:
        raise DimensionError(f"frames of different size: {F1.shape} vs {F2.shape}")
    return float(np.linalg.norm(projector(F1) - projector(F2), 2))


@dataclass(frozen=True)
class PairMatrix:
    """The unitary pair matrix together with its numerical health."""

    W: np.ndarray
    unitarity_defect: float
    eigenvalues: np.ndarray = field(repr=False)

    @property
    def angles(self) -> np.ndarray:
        """Eigenvalue arguments in ``(-pi, pi]``, sorted."""
        return np.sort(np.angle(self.eigenvalues))


def _cayley_factors(F: np.ndarray):
    n = F.shape[-1]
    X, Y = F[..., :n, :], F[..., n:, :]
    return X + 1j * Y, X - 1j * Y


def pair_matrices(frames1: np.ndarray, frames2: np.ndarray, cond_max: float = 1e8) -> np.ndarray:
    """Pair matrices for stacks of *orthonormal* frames, shape ``(..., n, n)``.

    Broadcasts over leading axes.  Raises :class:`NotLagrangianError` if any
    Cayley factor is near-singular (this can only happen for non-Lagrangian
    input, since for Lagrangian orthonormal frames they are unitary).
    """
    P1, M1 = _cayley_factors(np.asarray(frames1))
    P2, M2 = _cayley_factors(np.asarray(frames2))
    for name, A in (("X1 - iY1", M1), ("X2 + iY2", P2)):
        s = np.linalg.svd(A, compute_uv=False)
        if np.any(s[..., -1] * cond_max <= s[..., 0]):
            raise NotLagrangianError(f"{name} is near-singular; input frame is not Lagrangian")
    # A B^{-1} = (B^{-T} A^T)^T
    left = np.swapaxes(np.linalg.solve(np.swapaxes(M1, -1, -2), np.swapaxes(P1, -1, -2)), -1, -2)
    right = np.swapaxes(np.linalg.solve(np.swapaxes(P2, -1, -2), np.swapaxes(M2, -1, -2)), -1, -2)  # (X2-iY2)(X2+iY2)^{-1}
    return -(left @ right)


def pair_matrix(f1, f2) -> PairMatrix:
    """Pair matrix of two Lagrangian frames (see module docstring)."""
    F1, F2 = _as_array(f1), _as_array(f2)
    if F1.shape != F2.shape:
        raise DimensionError(f"frames of different size: {F1.shape} vs {F2.shape}")
    for F in (F1, F2):
        s = np.linalg.svd(F, compute_uv=False)
        if s[-1] <= RANK_TOL * s[0]:
            raise NotLagrangianError("rank-deficient frame", quantity="rank")
    W = pair_matrices(orthonormal_frame(F1), orthonormal_frame(F2))
    n = W.shape[0]
    defect = float(np.linalg.norm(W.conj().T @ W - np.eye(n), 2))
    return PairMatrix(W=W, unitarity_defect=defect, eigenvalues=np.linalg.eigvals(W))


def wrap_angle(theta):
    """Map angles into ``(-pi, pi]``."""
    t = np.mod(np.asarray(theta) + np.pi, 2 * np.pi) - np.pi
    return np.where(t <= -np.pi, t + 2 * np.pi, t)


def distance_to_minus_one(theta) -> np.ndarray:
    """Angular distance of ``e^{i theta}`` from ``-1``."""
    return np.pi - np.abs(wrap_angle(theta))


def intersection_dimension(f1, f2, tol: float = CROSSING_TOL) -> int:
    """``dim(l1 ∩ l2)``: eigenvalues of the pair matrix within ``tol`` rad of ``-1``."""
    pm = pair_matrix(f1, f2)
    return int(np.count_nonzero(distance_to_minus_one(np.angle(pm.eigenvalues)) < tol))
