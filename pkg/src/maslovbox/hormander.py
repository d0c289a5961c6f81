"""Hörmander index: how a Maslov index changes when the fixed target moves.

For transverse targets ``l1, l2`` and a path ``l(t)`` whose endpoints meet
neither target,

    Mas(l, l2) - Mas(l, l1) = s(l1, l2; l(0), l(1))
                            = (sgn Q(l1, l2; l(1)) - sgn Q(l1, l2; l(0))) / 2,

where ``Q(l1, l2; l0)(u, v) = (J C u, v)`` on ``l1`` and ``C: l1 -> l2`` is the
map whose graph ``{u + Cu}`` is ``l0``.  With ``l1`` the Dirichlet plane the
form reduces to an ``n x n`` Hermitian matrix ``C12``; a general ``l1`` is
first moved onto the Dirichlet plane by a unitary symplectic map, which
leaves every Q-form unchanged.

Sign convention: with the pair-matrix orientation used throughout the package
(a counter-clockwise passage of an eigenvalue through ``-1`` counts ``+1``)
and ``Q(u, v) = (J C u, v)``, the signature difference has to be taken
end-minus-start for the identity above to hold.  This is checked against the
defining Maslov-index difference along explicit paths in the test-suite.
"""

from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np
from scipy import linalg as sla

from .asymptotics import AsymptoticData
from .errors import AssumptionViolation, DegenerateSignatureError, NumericalFailure, TransversalityError
from .problem import BoundaryCondition
from .symplectic import (
    frame_from_unitary,
    intersection_dimension,
    orthonormal_frame,
    plane_unitary,
    symplectic_matrix,
)

#: eigenvalues below this fraction of the norm count as zero
SIGNATURE_RTOL = 1e-8
#: Hermitisation defect that signals broken preconditions
HERMITIAN_ABORT = 1e-6
#: smallest singular value of an orthonormal frame block treated as invertible
BLOCK_INVERTIBLE = 1e-6


def signature(M: np.ndarray, rtol: float = SIGNATURE_RTOL) -> tuple[int, int]:
    """``(#positive - #negative, #zero)`` eigenvalues of a Hermitian matrix."""
    ev = np.linalg.eigvalsh((M + M.conj().T) / 2)
    scale = float(np.abs(ev).max()) if ev.size else 0.0
    zero = np.abs(ev) <= rtol * scale if scale > 0 else np.ones(ev.shape, bool)
    return int(np.sum(ev[~zero] > 0) - np.sum(ev[~zero] < 0)), int(zero.sum())


def strict_signature(M: np.ndarray, rtol: float = SIGNATURE_RTOL) -> int:
    sgn, zeros = signature(M, rtol)
    if zeros:
        raise DegenerateSignatureError(f"form has {zeros} eigenvalue(s) within {rtol:g} of zero")
    return sgn


def _hermitize(A: np.ndarray) -> tuple[np.ndarray, float]:
    H = (A + A.conj().T) / 2
    defect = float(np.linalg.norm(A - A.conj().T, 2) / max(np.linalg.norm(A, 2), 1e-300))
    return H, defect


def c12_matrix(ell_G, ell_0, *, method: Optional[str] = None) -> tuple[np.ndarray, str, float]:
    """Hermitian ``C12`` with ``sgn Q(l_D, l_G; l_0) = sgn C12``.

    Returns ``(C12, formula, hermitian_defect)``.  ``formula`` is ``"both"``
    when ``X_G`` and ``X_0`` are invertible (``(Y0 X0^{-1} - YG XG^{-1})^{-1}``),
    ``"simple"`` when only ``X_G`` is (``X0 (Y0 - YG XG^{-1} X0)^{-1}``), and
    ``"general"`` otherwise (Cayley-transform formula, valid always).
    """
    FG, F0 = orthonormal_frame(ell_G), orthonormal_frame(ell_0)
    n = FG.shape[1]
    D = np.vstack([np.zeros((n, n)), np.eye(n)])
    if intersection_dimension(F0, D) > 0:
        raise TransversalityError("l_0 meets the Dirichlet plane", pair="l0,lD")
    if intersection_dimension(F0, FG) > 0:
        raise TransversalityError("l_0 meets l_G", pair="l0,lG")
    XG, YG = FG[:n], FG[n:]
    X0, Y0 = F0[:n], F0[n:]
    sG = np.linalg.svd(XG, compute_uv=False)[-1]
    s0 = np.linalg.svd(X0, compute_uv=False)[-1]
    if method is None:
        method = "both" if (sG > BLOCK_INVERTIBLE and s0 > BLOCK_INVERTIBLE) else ("simple" if sG > BLOCK_INVERTIBLE else "general")
    if method == "both":
        A = np.linalg.inv(Y0 @ np.linalg.inv(X0) - YG @ np.linalg.inv(XG))
    elif method == "simple":
        A = X0 @ np.linalg.inv(Y0 - YG @ np.linalg.solve(XG, X0))
    elif method == "general":
        W0 = np.linalg.solve((X0 + 1j * Y0).T, (X0 - 1j * Y0).T).T
        WG = np.linalg.solve((XG + 1j * YG).T, (XG - 1j * YG).T).T
        M = -1j * np.linalg.solve(XG + 1j * YG, np.linalg.solve(W0 - WG, W0 + np.eye(n)))
        A = XG @ M
    else:
        raise ValueError(f"unknown method {method!r}")
    H, defect = _hermitize(A)
    if defect > HERMITIAN_ABORT:
        raise NumericalFailure(f"C12 is not Hermitian (defect {defect:.2e}); preconditions broken")
    return H, method, defect


def to_dirichlet_map(ell_1) -> np.ndarray:
    """Unitary symplectic ``S`` with ``S l1 = l_D``.

    ``T = [-J F, F]`` (``F`` an orthonormal frame of ``l1``) is unitary,
    symplectic and sends the Dirichlet plane onto ``l1``; ``S = T^*``.
    """
    F = orthonormal_frame(ell_1)
    n = F.shape[1]
    T = np.hstack([-symplectic_matrix(n) @ F, F])
    return T.conj().T


@dataclass(frozen=True)
class QForm:
    """Q-form ``Q(l1, l2; l0)`` through its ``n x n`` Hermitian representative."""

    base: tuple
    evaluand: np.ndarray
    matrix: np.ndarray
    signature: int
    zero_eigen_count: int
    formula: str
    hermitian_defect: float


def q_form(ell_1, ell_2, ell_0, *, method: Optional[str] = None, rtol: float = SIGNATURE_RTOL) -> QForm:
    """Build ``Q(l1, l2; l0)``; requires ``l1 ∩ l2 = 0`` and ``l0 ∩ l2 = 0``."""
    F1, F2, F0 = (orthonormal_frame(f) for f in (ell_1, ell_2, ell_0))
    if intersection_dimension(F1, F2) > 0:
        raise TransversalityError("base planes intersect", pair="l1,l2")
    S = to_dirichlet_map(F1)
    C, formula, defect = c12_matrix(S @ F2, S @ F0, method=method)
    sgn, zeros = signature(C, rtol)
    return QForm((F1, F2), F0, C, sgn, zeros, formula, defect)


@dataclass(frozen=True)
class HormanderIndex:
    value: float
    q_start: QForm
    q_end: QForm
    inputs: tuple = field(repr=False, default=())

    @property
    def is_integer(self) -> bool:
        return float(self.value).is_integer()


def hormander_index(l1, l2, lstart, lend, *, rtol: float = SIGNATURE_RTOL) -> HormanderIndex:
    """``s(l1, l2; lstart, lend) = (sgn Q(l1,l2;lend) - sgn Q(l1,l2;lstart)) / 2``.

    Equals ``Mas(l, l2) - Mas(l, l1)`` for any path ``l`` from ``lstart`` to
    ``lend``.
    """
    for name, a, b in (("lstart,l1", lstart, l1), ("lstart,l2", lstart, l2), ("lend,l1", lend, l1), ("lend,l2", lend, l2)):
        k = intersection_dimension(a, b)
        if k:
            raise TransversalityError(f"{name.replace(',', ' meets ')} (dimension {k})", pair=name, dimension=k)
    qs = q_form(l1, l2, lstart, rtol=rtol)
    qe = q_form(l1, l2, lend, rtol=rtol)
    for q, which in ((qs, "start"), (qe, "end")):
        if q.zero_eigen_count:
            raise DegenerateSignatureError(f"Q-form at {which} is degenerate")
    return HormanderIndex(0.5 * (qe.signature - qs.signature), qs, qe, (l1, l2, lstart, lend))


# -- explicit connecting paths (definition-based check) ---------------------


def unitary_path(U0: np.ndarray, U1: np.ndarray, winding: Optional[np.ndarray] = None):
    """``t -> U0 exp(t log(U0^* U1))`` with optional extra ``2 pi k_j`` turns.

    ``winding`` adds ``2 pi`` times the given integers to the eigen-phases of
    ``U0^* U1``, producing a path with the same endpoints in a different
    homotopy class of the unitary group.  Returns a function mapping an array
    of ``t`` to a stack of frames.
    """
    U0 = np.asarray(U0, dtype=complex)
    Z = U0.conj().T @ np.asarray(U1, dtype=complex)
    T, Zs = sla.schur(Z, output="complex")  # Z = Zs T Zs^*, T diagonal for normal Z
    phases = np.angle(np.diag(T))
    if winding is not None:
        phases = phases + 2 * np.pi * np.asarray(winding)

    def frames(ts):
        ts = np.atleast_1d(np.asarray(ts, dtype=float))
        E = np.exp(1j * ts[:, None] * phases[None, :])
        U = U0[None] @ (Zs[None] * E[:, None, :]) @ Zs.conj().T[None]
        return np.array([frame_from_unitary(u) for u in U])

    return frames


def mas_difference(l1, l2, path_frames, **track_kw) -> int:
    """``Mas(l, l2) - Mas(l, l1)`` along an explicit path on ``t in [0, 1]``."""
    from .spectral_flow import spectral_flow

    m2 = spectral_flow(path_frames, l2, (0.0, 1.0), **track_kw).maslov_index
    m1 = spectral_flow(path_frames, l1, (0.0, 1.0), **track_kw).maslov_index
    return int(m2 - m1)


def hormander_by_paths(l1, l2, lstart, lend, windings=(None,), **track_kw) -> list[int]:
    """Evaluate the defining Maslov-index difference along several explicit paths."""
    U0, U1 = plane_unitary(lstart), plane_unitary(lend)
    return [mas_difference(l1, l2, unitary_path(U0, U1, w), **track_kw) for w in windings]


# -- Dirichlet exchange -----------------------------------------------------


def dirichlet_exchange_matrix(bc: BoundaryCondition, asym: AsymptoticData) -> np.ndarray:
    """``-alpha1^* (alpha2^*)^{-1} - P_+ R D R^* P_+`` (Hermitised)."""
    a1, a2 = bc.alpha1, bc.alpha2
    s = np.linalg.svd(a2, compute_uv=False)
    if s[-1] <= 1e-10 * max(1.0, s[0]):
        raise AssumptionViolation("alpha2 is singular: the boundary plane meets the Dirichlet plane", quantity="alpha2")
    P, R, D = asym.P_plus, asym.R, asym.D
    A = -a1.conj().T @ np.linalg.inv(a2.conj().T) - P @ R @ D @ R.conj().T @ P
    H, defect = _hermitize(A)
    if defect > HERMITIAN_ABORT:
        raise NumericalFailure(f"exchange matrix is not Hermitian (defect {defect:.2e})")
    return H


def dirichlet_exchange_correction(bc: BoundaryCondition, asym: AsymptoticData, rtol: float = SIGNATURE_RTOL) -> int:
    """``(-n + sgn(-alpha1^* (alpha2^*)^{-1} - P_+ R D R^* P_+)) / 2``.

    Always an integer: a non-degenerate Hermitian ``n x n`` matrix has
    signature of the same parity as ``n``.  It equals
    ``Mas(l1, l_D) - Mas(l1, l2+)`` over the half-line (the decaying frame of
    the boundary plane tends to the growing plane at infinity), so a Morse
    count built on the Dirichlet target *adds* it.
    """
    H = dirichlet_exchange_matrix(bc, asym)
    sgn = strict_signature(H, rtol)
    return (sgn - bc.n) // 2
