"""Finite-difference eigenvalue counts, independent of the Maslov machinery.

The operator ``-(P phi')' + V phi = lambda Q phi`` is cut at ``x = L`` with a
Dirichlet condition there.  On the grid ``x_i = i h`` the quadratic form

    sum_j (P_{j+1/2} (phi_{j+1} - phi_j), phi_{j+1} - phi_j) / h
      + sum_i w_i (V_i phi_i, phi_i) + (Lambda phi_0, phi_0)

(``w_0 = h/2``, otherwise ``w_i = h``) is paired with the lumped mass
``sum_i w_i (Q_i phi_i, phi_i)``.  The Dirichlet part of the vertex condition
is imposed exactly by dropping ``range P_D`` at ``x = 0``; the Neumann and
Robin parts are natural.  The result is a Hermitian block-tridiagonal pencil;
a block Cholesky factor of the mass turns it into a banded Hermitian matrix
for :func:`scipy.linalg.eigvals_banded`.  The scheme is second order, so two
resolutions ``N`` and ``2N`` give both a convergence check and an error bar.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np
from scipy import linalg as sla

from .asymptotics import asymptotic_data
from .errors import AmbiguousCountError, UnconvergedError
from .evolution import settle_truncation
from .problem import HalfLineSystem


@dataclass
class Discretization:
    """Block-tridiagonal pencil ``(A, M)`` on ``N`` unknown nodes.

    ``diag[i]`` and ``lower[i]`` (coupling node ``i+1`` to ``i``) hold the
    blocks of ``A``; ``mass[i]`` the diagonal mass blocks.  The first block is
    ``k x k`` with ``k = n - rank P_D``; ``basis0`` maps it back to ``C^n``.
    """

    L: float
    N: int
    h: float
    diag: list
    lower: list
    mass: list
    basis0: np.ndarray

    @property
    def size(self) -> int:
        return sum(b.shape[0] for b in self.diag)

    def dense(self) -> tuple[np.ndarray, np.ndarray]:
        """Dense ``(A, M)``; for tests on small grids."""
        offs = np.cumsum([0] + [b.shape[0] for b in self.diag])
        A = np.zeros((offs[-1], offs[-1]), dtype=complex)
        M = np.zeros_like(A)
        for i, (D, Mi) in enumerate(zip(self.diag, self.mass)):
            A[offs[i] : offs[i + 1], offs[i] : offs[i + 1]] = D
            M[offs[i] : offs[i + 1], offs[i] : offs[i + 1]] = Mi
        for i, B in enumerate(self.lower):
            A[offs[i + 1] : offs[i + 2], offs[i] : offs[i + 1]] = B
            A[offs[i] : offs[i + 1], offs[i + 1] : offs[i + 2]] = B.conj().T
        return A, M


def discretize(system: HalfLineSystem, L: float, N: int) -> Discretization:
    """Assemble the pencil on ``[0, L]`` with ``N`` cells (node ``N`` is Dirichlet)."""
    model, n = system.model, system.n
    h = L / N
    xs = np.arange(N) * h
    mids = (np.arange(N) + 0.5) * h
    K = model.P_at(mids) / h  # (N, n, n)
    V = model.V_at(xs)
    Q = model.Q_at(xs)
    w = np.full(N, h)
    w[0] = h / 2
    diag = K.copy()
    diag[1:] += K[:-1]
    diag += w[:, None, None] * V
    mass = w[:, None, None] * Q
    lower = [-K[j] for j in range(N - 1)]  # block (j+1, j); K Hermitian
    pr = system.projectors
    diag[0] = diag[0] + pr.Lambda
    evals, evecs = np.linalg.eigh((pr.P_D + pr.P_D.conj().T) / 2)
    B0 = evecs[:, evals < 0.5]
    diag = list(diag)
    mass = list(mass)
    diag[0] = B0.conj().T @ diag[0] @ B0
    mass[0] = B0.conj().T @ mass[0] @ B0
    if N > 1:
        lower[0] = lower[0] @ B0
    return Discretization(float(L), int(N), h, diag, lower, mass, B0)


def _banded(disc: Discretization) -> tuple[np.ndarray, int]:
    """Lower banded storage of ``L^{-1} A L^{-*}`` with ``M = L L^*`` blockwise."""
    chol = [np.linalg.cholesky(Mi) for Mi in disc.mass]
    inv = [sla.solve_triangular(c, np.eye(c.shape[0]), lower=True) for c in chol]
    sizes = [b.shape[0] for b in disc.diag]
    offs = np.cumsum([0] + sizes)
    n = max(sizes)
    bw = 2 * n - 1
    m = offs[-1]
    ab = np.zeros((bw + 1, m), dtype=complex)

    def put(r0, c0, B):
        for a in range(B.shape[0]):
            for b in range(B.shape[1]):
                r, c = r0 + a, c0 + b
                if r >= c:
                    ab[r - c, c] = B[a, b]

    for i, D in enumerate(disc.diag):
        put(offs[i], offs[i], inv[i] @ D @ inv[i].conj().T)
    for i, B in enumerate(disc.lower):
        put(offs[i + 1], offs[i], inv[i + 1] @ B @ inv[i].conj().T)
    return ab, bw


def _eigs_upto(disc: Discretization, upper: float) -> np.ndarray:
    ab, bw = _banded(disc)
    # Gershgorin lower bound for the select range
    absum = np.abs(ab[1:]).sum(axis=0)
    rowsum = absum.copy()
    for d in range(1, bw + 1):
        rowsum[d:] += np.abs(ab[d, : ab.shape[1] - d])
    lo = float(np.min(ab[0].real - rowsum)) - 1.0
    if lo >= upper:
        return np.zeros(0)
    return np.sort(sla.eigvals_banded(ab, lower=True, select="v", select_range=(lo, upper)))


@dataclass(frozen=True)
class OracleResult:
    """Count below ``lambda0`` together with the evidence behind it."""

    count: int
    eigenvalues: np.ndarray
    eigenvalues_coarse: np.ndarray
    lambda0: float
    L: float
    N: int
    margin: float
    nearest_gap: float

    @property
    def extrapolated(self) -> np.ndarray:
        """Richardson values ``(4 lam_2N - lam_N) / 3``."""
        k = min(self.eigenvalues.size, self.eigenvalues_coarse.size)
        return (4 * self.eigenvalues[:k] - self.eigenvalues_coarse[:k]) / 3


def default_length(system: HalfLineSystem, lambda0: float, settle_tol: float = 1e-8) -> float:
    """``max(1.25 x_inf, 25 / min |mu|)``: past the settle point and many decay lengths."""
    x_inf = settle_truncation(system, [lambda0], settle_tol=settle_tol, probe=False).x_inf
    mu = np.abs(asymptotic_data(system.model, lambda0).mu).min()
    return float(max(1.25 * x_inf, 25.0 / mu))


def default_cells(system: HalfLineSystem, L: float, h_target: float = 0.02) -> int:
    return int(max(200 * system.n, math.ceil(L / h_target)))


def fd_count(
    system: HalfLineSystem,
    lambda0: float = 0.0,
    L: Optional[float] = None,
    N: Optional[int] = None,
    *,
    safety: float = 10.0,
    window: float = 1.0,
) -> OracleResult:
    """Count eigenvalues below ``lambda0`` at ``N`` and ``2N`` cells.

    ``margin = safety * |lam_N - lam_2N|`` for the eigenvalue nearest
    ``lambda0`` (among those computed up to ``lambda0 + window``).  Raises
    :class:`AmbiguousCountError` when that eigenvalue lies within the margin
    and :class:`UnconvergedError` when the two counts differ.
    """
    lambda0 = float(lambda0)
    if L is None:
        L = default_length(system, lambda0)
    if N is None:
        N = default_cells(system, L)
    upper = lambda0 + window
    coarse = _eigs_upto(discretize(system, L, N), upper)
    fine = _eigs_upto(discretize(system, L, 2 * N), upper)
    k = min(coarse.size, fine.size)
    margin, gap = 0.0, float("inf")
    if fine.size:
        j = int(np.argmin(np.abs(fine - lambda0)))
        gap = float(abs(fine[j] - lambda0))
        diff = abs(fine[j] - coarse[j]) if j < k else abs(fine[j] - lambda0)
        margin = safety * float(diff)
        if gap <= margin:
            raise AmbiguousCountError(
                f"eigenvalue {fine[j]:.6g} within margin {margin:.2e} of lambda0 = {lambda0}", value=float(fine[j]), margin=margin
            )
    c_coarse = int(np.sum(coarse < lambda0))
    c_fine = int(np.sum(fine < lambda0))
    if c_coarse != c_fine:
        raise UnconvergedError(f"counts differ between N = {N} ({c_coarse}) and 2N ({c_fine})")
    return OracleResult(c_fine, fine[fine < upper], coarse[coarse < upper], lambda0, float(L), int(N), margin, gap)


def count_below(system: HalfLineSystem, lambda0: float = 0.0, L: Optional[float] = None, N: Optional[int] = None) -> int:
    """Number of eigenvalues below ``lambda0`` (see :func:`fd_count`)."""
    return fd_count(system, lambda0, L, N).count


def eigenvalues_below(system: HalfLineSystem, lambda0: float = 0.0, L: Optional[float] = None, N: Optional[int] = None) -> list:
    """Richardson-extrapolated eigenvalues below ``lambda0``, ascending."""
    res = fd_count(system, lambda0, L, N)
    ext = res.extrapolated
    return sorted(float(v) for v in ext[: res.count])
