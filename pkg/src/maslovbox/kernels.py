"""Hot inner loops: Runge-Kutta frame sweeps and eigen-angle continuation.

Every function here is valid numba ``nopython`` source and also plain
Python/numpy; :func:`maslovbox._accel.jit` decides which one runs.  The two
element-wise helpers (QR and Frobenius norm) get LAPACK-backed numpy versions
on the fallback path, where explicit loops would be needlessly slow.
"""

from __future__ import annotations

import math

import numpy as np

from ._accel import USE_NUMBA, jit

# Dormand-Prince 5(4) tableau.  Stage abscissae c = 0, 1/5, 3/10, 4/5, 8/9, 1;
# the seventh (FSAL) stage reuses the coefficient matrix at c = 1.
DOPRI_C = np.array([0.0, 1.0 / 5.0, 3.0 / 10.0, 4.0 / 5.0, 8.0 / 9.0, 1.0])

_A21 = 1.0 / 5.0
_A31, _A32 = 3.0 / 40.0, 9.0 / 40.0
_A41, _A42, _A43 = 44.0 / 45.0, -56.0 / 15.0, 32.0 / 9.0
_A51, _A52, _A53, _A54 = 19372.0 / 6561.0, -25360.0 / 2187.0, 64448.0 / 6561.0, -212.0 / 729.0
_A61, _A62, _A63, _A64, _A65 = (
    9017.0 / 3168.0,
    -355.0 / 33.0,
    46732.0 / 5247.0,
    49.0 / 176.0,
    -5103.0 / 18656.0,
)
_B1, _B3, _B4, _B5, _B6 = 35.0 / 384.0, 500.0 / 1113.0, 125.0 / 192.0, -2187.0 / 6784.0, 11.0 / 84.0
_E1, _E3, _E4, _E5, _E6, _E7 = (
    71.0 / 57600.0,
    -71.0 / 16695.0,
    71.0 / 1920.0,
    -17253.0 / 339200.0,
    22.0 / 525.0,
    -1.0 / 40.0,
)


def _orthonormalize_numpy(Y):
    Q, R = np.linalg.qr(Y)
    ph = np.diag(R).copy()
    mag = np.abs(ph)
    ph = np.where(mag > 0, ph / np.where(mag > 0, mag, 1.0), 1.0)
    return Q * ph, (R * ph.conj()[:, None]).astype(np.complex128)


def _frob_numpy(M):
    return float(np.linalg.norm(M))


def _orthonormalize_loops(Y):
    """Thin QR by twice-iterated modified Gram-Schmidt.

    Returns ``(Q, R)`` with ``Y = Q R`` and ``R`` upper triangular with a real
    positive diagonal, so the factorization is continuous in ``Y``.
    """
    N, n = Y.shape
    Q = Y.copy()
    R = np.zeros((n, n), dtype=np.complex128)
    for j in range(n):
        for _ in range(2):
            for k in range(j):
                r = 0j
                for p in range(N):
                    r += Q[p, k].conjugate() * Q[p, j]
                R[k, j] += r
                for p in range(N):
                    Q[p, j] -= r * Q[p, k]
        nrm = 0.0
        for p in range(N):
            nrm += Q[p, j].real ** 2 + Q[p, j].imag ** 2
        nrm = math.sqrt(nrm)
        R[j, j] = nrm
        for p in range(N):
            Q[p, j] /= nrm
    return Q, R


def _frob_loops(M):
    s = 0.0
    for i in range(M.shape[0]):
        for j in range(M.shape[1]):
            s += M[i, j].real ** 2 + M[i, j].imag ** 2
    return math.sqrt(s)


if USE_NUMBA:
    orthonormalize = jit(_orthonormalize_loops)
    _frob = jit(_frob_loops)
else:
    orthonormalize = _orthonormalize_numpy
    _frob = _frob_numpy
orthonormalize.__doc__ = _orthonormalize_loops.__doc__


@jit
def dopri_step(A, h, X):
    """One Dormand-Prince step of ``X' = A(x) X``.

    ``A`` holds the coefficient matrix at the six distinct stage abscissae,
    shape ``(6, N, N)``.  Returns the 5th-order update and the embedded error
    estimate relative to its Frobenius norm.
    """
    k1 = A[0] @ X
    k2 = A[1] @ (X + h * _A21 * k1)
    k3 = A[2] @ (X + h * (_A31 * k1 + _A32 * k2))
    k4 = A[3] @ (X + h * (_A41 * k1 + _A42 * k2 + _A43 * k3))
    k5 = A[4] @ (X + h * (_A51 * k1 + _A52 * k2 + _A53 * k3 + _A54 * k4))
    k6 = A[5] @ (X + h * (_A61 * k1 + _A62 * k2 + _A63 * k3 + _A64 * k4 + _A65 * k5))
    y5 = X + h * (_B1 * k1 + _B3 * k3 + _B4 * k4 + _B5 * k5 + _B6 * k6)
    k7 = A[5] @ y5
    err = h * (_E1 * k1 + _E3 * k3 + _E4 * k4 + _E5 * k5 + _E6 * k6 + _E7 * k7)
    return y5, _frob(err) / _frob(y5)


@jit
def frame_sweep(A, hs, X0):
    """Integrate an orthonormal frame through a precomputed step sequence.

    ``A`` has shape ``(m, 6, N, N)`` (stage coefficient matrices per step),
    ``hs`` the ``m`` signed step sizes and ``X0`` the starting ``N x k``
    frame.  After every step the frame is re-orthonormalized; the triangular
    factors are returned so callers can rebuild true solution scalings.

    Returns ``frames (m+1, N, k)``, ``rfactors (m, k, k)``, per-step relative
    error estimates and per-step subspace-motion bounds (Frobenius norm of
    the component of the new frame orthogonal to the old one).
    """
    m = hs.shape[0]
    N, k = X0.shape
    frames = np.empty((m + 1, N, k), dtype=np.complex128)
    rfac = np.empty((m, k, k), dtype=np.complex128)
    errs = np.empty(m)
    moves = np.empty(m)
    X = np.ascontiguousarray(X0)
    frames[0] = X
    for i in range(m):
        y, e = dopri_step(A[i], hs[i], X)
        Xn, R = orthonormalize(y)
        C = X.conj().T @ Xn
        moves[i] = _frob(Xn - X @ C)
        errs[i] = e
        rfac[i] = R
        frames[i + 1] = Xn
        X = Xn
    return frames, rfac, errs, moves


@jit
def _wrap(d):
    """Map an angle difference into ``(-pi, pi]``."""
    tau = 2.0 * math.pi
    w = d - tau * math.floor((d + math.pi) / tau)
    if w <= -math.pi:
        w += tau
    return w


@jit
def match_step(prev, phi):
    """Assign wrapped angles ``phi`` to continuing tracks ``prev``.

    Greedy smallest-displacement assignment followed by pairwise-swap repair.
    Returns the continued (unwrapped) angles and the largest displacement.
    """
    n = prev.shape[0]
    d = np.empty((n, n))
    for a in range(n):
        for b in range(n):
            d[a, b] = _wrap(phi[b] - prev[a])
    sigma = -np.ones(n, dtype=np.int64)
    used = np.zeros(n, dtype=np.bool_)
    for _ in range(n):
        best = np.inf
        ba = -1
        bb = -1
        for a in range(n):
            if sigma[a] >= 0:
                continue
            for b in range(n):
                if used[b]:
                    continue
                c = abs(d[a, b])
                if c < best:
                    best = c
                    ba = a
                    bb = b
        sigma[ba] = bb
        used[bb] = True
    improved = True
    while improved:
        improved = False
        for a in range(n):
            for b in range(a + 1, n):
                now = abs(d[a, sigma[a]]) + abs(d[b, sigma[b]])
                swp = abs(d[a, sigma[b]]) + abs(d[b, sigma[a]])
                if swp < now - 1e-14:
                    t = sigma[a]
                    sigma[a] = sigma[b]
                    sigma[b] = t
                    improved = True
    out = np.empty(n)
    worst = 0.0
    for a in range(n):
        step = d[a, sigma[a]]
        out[a] = prev[a] + step
        if abs(step) > worst:
            worst = abs(step)
    return out, worst


@jit
def unwrap_tracks(phi, theta0):
    """Continue eigen-angle tracks through a sequence of wrapped samples.

    ``phi`` is ``(m, n)`` with angles in ``(-pi, pi]``; ``theta0`` gives the
    unwrapped angles for row 0.  Returns ``(theta, displacement)`` where
    ``displacement[i]`` is the largest single-track move from row ``i-1``.
    """
    m, n = phi.shape
    theta = np.empty((m, n))
    disp = np.zeros(m)
    theta[0] = theta0
    for i in range(1, m):
        row, worst = match_step(theta[i - 1], phi[i])
        theta[i] = row
        disp[i] = worst
    return theta, disp
