"""The constant-coefficient problem at x = +infinity.

For ``lambda < kappa`` the limiting system ``X' = A_+(lambda) X`` has ``n``
decaying modes ``exp(mu_k x) (r_k; mu_k P_+ r_k)`` with ``mu_k < 0`` solving

    (V_+ - lambda Q_+) r = mu^2 P_+ r,

and ``n`` growing modes with exponents ``-mu_k``.  Collecting the ``r_k`` in a
``P_+``-orthonormal matrix ``R`` and ``D = diag(mu_k)`` gives the frames
``(R; P_+ R D)`` (decaying plane) and ``(R; -P_+ R D)`` (growing plane).
"""

from __future__ import annotations

from dataclasses import dataclass

import numpy as np
from scipy import linalg as sla

from .errors import AssumptionViolation
from .problem import CoefficientModel, VertexProjectors

_HERM_TOL = 1e-10


@dataclass(frozen=True)
class EssentialSpectrumEdge:
    """Bottom ``kappa`` of the essential spectrum."""

    kappa: float


def _require_hermitian(name: str, M: np.ndarray) -> np.ndarray:
    M = np.atleast_2d(np.asarray(M, dtype=complex))
    if M.shape[0] != M.shape[1]:
        raise AssumptionViolation(f"{name} must be square, got {M.shape}", quantity=name)
    scale = max(1.0, float(np.abs(M).max()))
    if np.abs(M - M.conj().T).max() > _HERM_TOL * scale:
        raise AssumptionViolation(f"{name} is not Hermitian", quantity=name)
    return (M + M.conj().T) / 2


def _require_pd(name: str, M: np.ndarray) -> np.ndarray:
    M = _require_hermitian(name, M)
    if np.linalg.eigvalsh(M)[0] <= 0:
        raise AssumptionViolation(f"{name} is not positive definite", quantity=name)
    return M


def essential_edge(P_plus, V_plus, Q_plus) -> EssentialSpectrumEdge:
    """``kappa = min (V_+ r, r) / (Q_+ r, r)``, the smallest eigenvalue of the
    pencil ``(V_+, Q_+)``.  ``P_+`` is only checked, it does not enter."""
    _require_pd("P_plus", P_plus)
    V = _require_hermitian("V_plus", V_plus)
    Q = _require_pd("Q_plus", Q_plus)
    return EssentialSpectrumEdge(float(sla.eigh(V, Q, eigvals_only=True)[0]))


@dataclass(frozen=True)
class AsymptoticData:
    """Decaying/growing splitting of the limiting system at one ``lambda``."""

    lam: float
    mu: np.ndarray
    R: np.ndarray
    D: np.ndarray
    A_plus: np.ndarray
    frame_decay: np.ndarray
    frame_grow: np.ndarray
    P_plus: np.ndarray
    Q_plus: np.ndarray

    @property
    def n(self) -> int:
        return self.mu.size

    @property
    def lambda_(self) -> float:
        return self.lam


def _cluster_bounds(w: np.ndarray, rtol: float) -> list[tuple[int, int]]:
    out = []
    start = 0
    for k in range(1, w.size + 1):
        if k == w.size or abs(w[k] - w[k - 1]) > rtol * max(1.0, abs(w[k - 1])):
            out.append((start, k))
            start = k
    return out


def _align(R: np.ndarray, P: np.ndarray, reference: np.ndarray, w: np.ndarray, rtol: float) -> np.ndarray:
    """Rotate ``R`` within each eigenvalue cluster towards ``reference``.

    Each cluster block ``Rc`` is replaced by ``Rc U`` where ``U`` is the
    unitary polar factor of ``Rc^* P ref_c`` and ``ref_c`` are the reference
    columns with the largest overlap.  Singletons only get a phase fix.
    """
    R = R.copy()
    for a, b in _cluster_bounds(w, rtol):
        Rc = R[:, a:b]
        C = Rc.conj().T @ P @ reference  # k x n overlaps
        k = b - a
        cols = np.argsort(-np.linalg.norm(C, axis=0), kind="stable")[:k]
        cols.sort()
        U, _ = sla.polar(C[:, cols])
        R[:, a:b] = Rc @ U
    return R


def asymptotic_data(model: CoefficientModel, lam: float, reference: np.ndarray | None = None, cluster_rtol: float = 1e-8) -> AsymptoticData:
    """Solve the limiting eigenproblem at ``lam`` and assemble the frames.

    ``mu`` is sorted ascending (most negative first).  Columns of ``R`` are
    ``P_+``-orthonormal; inside clusters of equal ``mu`` they are rotated to
    match ``reference`` (default: ``P_+^{-1/2}``), which keeps ``R`` continuous
    along a ``lambda`` sweep when each call passes the previous ``R``.
    """
    P = _require_pd("P_plus", model.P_plus)
    V = _require_hermitian("V_plus", model.V_plus)
    Q = _require_pd("Q_plus", model.Q_plus)
    kappa = float(sla.eigh(V, Q, eigvals_only=True)[0])
    if not lam < kappa:
        raise AssumptionViolation(f"lambda = {lam} is not below the essential spectrum edge {kappa}", quantity="lambda")
    M = V - lam * Q
    w, R = sla.eigh(M, P)
    w, R = w[::-1], R[:, ::-1]  # descending eigenvalue -> ascending mu
    if w[-1] <= 0:
        raise AssumptionViolation(f"V_+ - lambda Q_+ not positive definite at lambda = {lam}", quantity="lambda")
    if reference is None:
        ev, evec = np.linalg.eigh(P)
        reference = evec @ np.diag(ev**-0.5) @ evec.conj().T
    R = _align(R, P, np.asarray(reference, dtype=complex), w, cluster_rtol)
    mu = -np.sqrt(w)
    D = np.diag(mu).astype(complex)
    n = model.n
    PRD = P @ R @ D
    A_plus = np.zeros((2 * n, 2 * n), dtype=complex)
    A_plus[:n, n:] = np.linalg.inv(P)
    A_plus[n:, :n] = M
    return AsymptoticData(
        lam=float(lam),
        mu=mu,
        R=R,
        D=D,
        A_plus=A_plus,
        frame_decay=np.vstack([R, PRD]),
        frame_grow=np.vstack([R, -PRD]),
        P_plus=P,
        Q_plus=Q,
    )


def decaying_frames(model: CoefficientModel, lams) -> np.ndarray:
    """Stack of orthonormalised decaying-plane frames over ``lams``."""
    out = []
    ref = None
    for lam in np.atleast_1d(lams):
        a = asymptotic_data(model, float(lam), reference=ref)
        ref = a.R
        Qf, _ = np.linalg.qr(a.frame_decay)
        out.append(Qf)
    return np.array(out)


def lambda_infinity_bound(
    model: CoefficientModel,
    projectors: VertexProjectors,
    *,
    factor: float = 1.1,
    shift: float = 1.0,
) -> float:
    """A value ``lambda_inf`` such that no eigenvalue (of the half-line or of
    any truncation ``[0, x]`` with Dirichlet at ``x``) lies below ``-lambda_inf``.

    Base bound ``C_V/theta_Q + 2 C_b^2/(theta_P theta_Q)`` (this dominates
    the variant with ``eps = theta_P / C_b``); the result is
    ``factor * bound + shift``.  With no Robin part the ``C_b`` term drops.
    """
    base = model.C_V / model.theta_Q
    Cb = projectors.C_b
    if Cb > 0:
        eps = model.theta_P / Cb
        b1 = base + Cb / (eps * model.theta_Q)
        b2 = base + 2.0 * Cb**2 / (model.theta_P * model.theta_Q)
        base = max(b1, b2)
    return factor * base + shift
