"""Evolution of Lagrangian frames along ``x`` for fixed ``lambda``.

Frames solve ``X' = A(x; lambda) X`` and are re-orthonormalised after every
step (thin QR), which keeps the column span exact while discarding the
exponential growth of the raw solutions.  The triangular factors are kept so
that quantities depending on the true solution scaling (the monotonicity
matrix) can still be reconstructed.

Step selection is global and iterative: an initial grid is built from the
local size of ``A``, the whole sweep is run in one compiled kernel, and every
step whose embedded error estimate or subspace motion is too large is
bisected.  This repeats until all steps pass.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional, Sequence

import numpy as np
from scipy import linalg as sla

from . import kernels
from .asymptotics import AsymptoticData, asymptotic_data
from .errors import AssumptionViolation, NumericalFailure, StepSizeUnderflow
from .problem import HalfLineSystem
from .symplectic import (
    frame_from_unitary,
    lagrangian_defects,
    orthonormal_frame,
    pair_matrix,
    plane_unitary,
)


@dataclass(frozen=True)
class IntegratorOptions:
    """Accuracy knobs for :func:`integrate_frame`.

    ``rtol`` bounds the per-step relative error estimate, ``angle_cap`` the
    subspace motion per step (radians, Frobenius bound), ``h_max``/``h_min``
    the step range.  ``reach`` sets the initial step as ``reach / |A(x)|``.
    Frames whose Lagrangian defect exceeds ``project_tol`` are projected back
    onto the Lagrangian Grassmannian (polar factor of the plane unitary).
    """

    rtol: float = 1e-10
    angle_cap: float = 0.05
    h_max: float = 0.25
    h_min: float = 1e-10
    reach: float = 0.1
    max_rounds: int = 60
    project_tol: float = 1e-9


DEFAULT_OPTIONS = IntegratorOptions()


@dataclass
class FramePath:
    """Orthonormal frames along an ``x`` grid for one ``lambda``.

    ``xs``/``frames_raw`` are in integration order; :attr:`grid` and
    :attr:`frames` present the same data with ``x`` increasing.
    ``renormalization_log`` holds per-step error estimates, subspace motions
    and the QR triangular factors.
    """

    system: HalfLineSystem
    lam: float
    direction: str
    xs: np.ndarray
    frames_raw: np.ndarray
    renormalization_log: dict = field(default_factory=dict)
    seed: Optional[AsymptoticData] = None
    options: IntegratorOptions = DEFAULT_OPTIONS

    @property
    def grid(self) -> np.ndarray:
        return self.xs if self.direction == "forward" else self.xs[::-1]

    @property
    def frames(self) -> np.ndarray:
        return self.frames_raw if self.direction == "forward" else self.frames_raw[::-1]

    @property
    def lagrangian_defects(self) -> np.ndarray:
        return lagrangian_defects(self.frames)

    @property
    def max_lagrangian_defect(self) -> float:
        return float(self.lagrangian_defects.max())

    @property
    def start(self) -> float:
        return float(self.xs[0])

    @property
    def end(self) -> float:
        return float(self.xs[-1])

    def frame_at(self, x) -> np.ndarray:
        """Frame(s) at arbitrary ``x`` inside the path (dense output).

        Takes one Dormand-Prince step from the nearest preceding node in the
        integration direction, so accuracy matches an accepted step.
        """
        xq = np.atleast_1d(np.asarray(x, dtype=float))
        lo, hi = min(self.start, self.end), max(self.start, self.end)
        if np.any(xq < lo - 1e-12) or np.any(xq > hi + 1e-12):
            raise ValueError(f"x outside path range [{lo}, {hi}]")
        s = 1.0 if self.direction == "forward" else -1.0
        # index of the node preceding x in integration order
        key = s * self.xs
        idx = np.clip(np.searchsorted(key, s * xq, side="right") - 1, 0, self.xs.size - 1)
        out = np.empty((xq.size,) + self.frames_raw.shape[1:], dtype=complex)
        hs = xq - self.xs[idx]
        todo = np.abs(hs) > 0
        out[~todo] = self.frames_raw[idx[~todo]]
        if np.any(todo):
            A = _stage_matrices(self.system, self.lam, self.xs[idx[todo]], hs[todo])
            for j, (k, h) in enumerate(zip(idx[todo], hs[todo])):
                y, _ = kernels.dopri_step(A[j], float(h), np.ascontiguousarray(self.frames_raw[k]))
                Qf, _ = kernels.orthonormalize(y)
                out[np.flatnonzero(todo)[j]] = Qf
        return out[0] if np.ndim(x) == 0 else out

    def __call__(self, x):
        return self.frame_at(x)

    def to_csv(self, path) -> None:
        """Dump ``x``, real/imag frame entries (column-major) and defect."""
        F = self.frames
        m, N, k = F.shape
        cols = ["x"]
        for j in range(k):
            for i in range(N):
                cols += [f"re_{i}_{j}", f"im_{i}_{j}"]
        cols.append("defect")
        flat = F.transpose(0, 2, 1).reshape(m, -1)
        data = np.empty((m, 2 + 2 * flat.shape[1]))
        data[:, 0] = self.grid
        data[:, 1:-1:2] = flat.real
        data[:, 2:-1:2] = flat.imag
        data[:, -1] = self.lagrangian_defects
        np.savetxt(path, data, delimiter=",", header=",".join(cols), comments="", fmt="%.12e")


def _stage_matrices(system: HalfLineSystem, lam: float, x0: np.ndarray, h: np.ndarray) -> np.ndarray:
    """``A`` at the six Dormand-Prince abscissae of each step: ``(m, 6, N, N)``."""
    pts = x0[:, None] + h[:, None] * kernels.DOPRI_C[None, :]
    A = system.A(pts.ravel(), lam)
    N = A.shape[-1]
    return np.ascontiguousarray(A.reshape(x0.size, 6, N, N))


def _initial_nodes(system: HalfLineSystem, lam: float, a: float, b: float, opts: IntegratorOptions) -> np.ndarray:
    L = abs(b - a)
    probe = np.linspace(a, b, max(int(L / 0.05), 2) + 1)
    normA = np.linalg.norm(system.A(probe, lam), ord=2, axis=(1, 2))
    s = math.copysign(1.0, b - a)
    nodes = [a]
    x = a
    while s * (b - x) > 1e-14:
        local = float(np.interp(x, probe if s > 0 else probe[::-1], normA if s > 0 else normA[::-1]))
        h = min(opts.h_max, opts.reach / max(local, 1e-12))
        if s * (x + s * h) >= s * b or abs(b - (x + s * h)) < 0.25 * h:
            x = b
        else:
            x = x + s * h
        nodes.append(x)
    return np.array(nodes)


def _project_lagrangian(F: np.ndarray) -> np.ndarray:
    U = plane_unitary(F)
    Up, _ = sla.polar(U)
    return orthonormal_frame(frame_from_unitary(Up))


def integrate_frame(
    system: HalfLineSystem,
    lam: float,
    X0: np.ndarray,
    x_start: float,
    x_end: float,
    options: IntegratorOptions = DEFAULT_OPTIONS,
    *,
    nodes: Optional[Sequence[float]] = None,
) -> FramePath:
    """Adaptive orthonormalised integration of ``X' = A X`` from ``x_start`` to ``x_end``.

    ``nodes`` may supply an initial grid (it is refined further if needed).
    """
    X0 = orthonormal_frame(np.asarray(X0, dtype=complex))
    direction = "forward" if x_end >= x_start else "backward"
    if x_end == x_start:
        return FramePath(system, float(lam), direction, np.array([float(x_start)]), X0[None].copy(), {}, options=options)
    xs = np.asarray(nodes, dtype=float) if nodes is not None else _initial_nodes(system, lam, x_start, x_end, options)
    X0c = np.ascontiguousarray(X0)
    for _ in range(options.max_rounds):
        hs = np.diff(xs)
        A = _stage_matrices(system, lam, xs[:-1], hs)
        frames, rfac, errs, moves = kernels.frame_sweep(A, hs, X0c)
        bad = (errs > options.rtol) | (moves > options.angle_cap)
        if not np.any(bad):
            break
        if np.min(np.abs(hs[bad])) < 2 * options.h_min:
            i = int(np.flatnonzero(bad)[0])
            raise StepSizeUnderflow(f"step size underflow near x = {xs[i]:.6g} (lambda = {lam})", where=float(xs[i]))
        mids = xs[:-1][bad] + hs[bad] / 2
        xs = np.sort(np.concatenate([xs, mids])) if direction == "forward" else -np.sort(-np.concatenate([xs, mids]))
    else:
        raise NumericalFailure(f"step refinement did not converge (lambda = {lam})")
    defects = lagrangian_defects(frames)
    projected = 0
    if defects.max() > options.project_tol:
        for i in np.flatnonzero(defects > options.project_tol):
            frames[i] = _project_lagrangian(frames[i])
            projected += 1
        defects = lagrangian_defects(frames)
    log = {"error": errs, "motion": moves, "rfactors": rfac, "defect": defects, "projected": projected}
    return FramePath(system, float(lam), direction, xs, frames, log, options=options)


def evolve_boundary_frame(
    system: HalfLineSystem,
    lam: float,
    x_span=(0.0, 1.0),
    options: IntegratorOptions = DEFAULT_OPTIONS,
) -> FramePath:
    """Frame of ``l1(x; lam)``: the boundary plane ``J alpha^*`` carried forward."""
    a, b = float(x_span[0]), float(x_span[1])
    return integrate_frame(system, lam, system.initial_frame(), a, b, options)


@dataclass(frozen=True)
class TruncationConfig:
    """Where the half-line is cut.

    ``x_inf`` is chosen so that ``decay_C * exp(-eta x_inf) <= settle_tol``;
    ``probe_change`` records the largest pair-matrix angle change seen when
    the cut was moved out by 25%.
    """

    x_inf: float
    settle_tol: float = 1e-8
    max_x: float = 200.0
    decay_C: float = 1.0
    probe_change: float = float("nan")


def evolve_decaying_frame(
    system: HalfLineSystem,
    lam: float,
    trunc,
    options: IntegratorOptions = DEFAULT_OPTIONS,
    *,
    x_end: float = 0.0,
    asym: Optional[AsymptoticData] = None,
) -> FramePath:
    """Frame of ``l2(x; lam)``: seeded with the decaying plane at ``x_inf`` and
    integrated backward to ``x_end``.  ``trunc`` is a :class:`TruncationConfig`
    or a plain ``x_inf``."""
    x_inf = trunc.x_inf if isinstance(trunc, TruncationConfig) else float(trunc)
    if asym is None:
        asym = asymptotic_data(system.model, lam)
    path = integrate_frame(system, lam, asym.frame_decay, x_inf, x_end, options)
    path.seed = asym
    return path


def monotonicity_matrices(path: FramePath) -> np.ndarray:
    """``-int_x^inf X2^* Q X2 dy`` at every node of a decaying-frame path.

    At node ``x`` the solution is normalised so that ``X2(x)`` equals the
    stored orthonormal frame.  Node contributions use the trapezoid rule;
    the part beyond ``x_inf`` uses the exact integral of the asymptotic
    modes.  Returned in :attr:`FramePath.grid` order.
    """
    if path.direction != "backward" or path.seed is None:
        raise ValueError("monotonicity data needs a decaying-frame path")
    asym = path.seed
    n = asym.n
    F = path.frames_raw  # x decreasing: index 0 is x_inf
    Rf = path.renormalization_log["rfactors"]
    xs = path.xs
    Qx = path.system.model.Q_at(xs)
    phi = F[:, :n, :]
    local = np.swapaxes(phi.conj(), 1, 2) @ Qx @ phi  # X^* Q X at each node
    # tail beyond x_inf in the normalisation of F[0]
    _, G = np.linalg.qr(asym.frame_decay)
    RQR = asym.R.conj().T @ asym.Q_plus @ asym.R
    mu = asym.mu
    T = RQR / (-(mu[:, None] + mu[None, :]))
    Ginv = np.linalg.inv(G)
    I_next = Ginv.conj().T @ T @ Ginv
    out = np.empty((xs.size, n, n), dtype=complex)
    out[0] = -I_next
    for i in range(xs.size - 1):
        # step i maps F[i] (at xs[i]) to F[i+1] R_i (at xs[i+1]); the solution
        # normalised to F[i+1] at xs[i+1] equals F[i] R_i^{-1} at xs[i].
        Rinv = np.linalg.inv(Rf[i])
        h = abs(xs[i] - xs[i + 1])
        I_cur = Rinv.conj().T @ (I_next + 0.5 * h * local[i]) @ Rinv + 0.5 * h * local[i + 1]
        I_cur = (I_cur + I_cur.conj().T) / 2
        out[i + 1] = -I_cur
        I_next = I_cur
    return out[::-1]


def settle_truncation(
    system: HalfLineSystem,
    lambda_range,
    *,
    settle_tol: float = 1e-8,
    probe_tol: Optional[float] = None,
    max_x: float = 200.0,
    x_min: float = 1.0,
    probe: bool = True,
    options: IntegratorOptions = DEFAULT_OPTIONS,
) -> TruncationConfig:
    """Pick ``x_inf`` from the declared decay, then confirm it by probing.

    The a-priori choice is ``ln(C / settle_tol) / eta`` (at least ``x_min``).
    The probe compares eigenvalue angles of the pair matrix between the
    boundary plane and ``l2(0; lambda)`` for cuts at ``x_inf`` and
    ``1.25 x_inf`` at both ends of ``lambda_range``; while the change exceeds
    ``probe_tol`` (default ``settle_tol``) the cut moves out by 25%.
    """
    model = system.model
    C = model.decay_C
    x_inf = x_min if C <= settle_tol else max(x_min, math.log(C / settle_tol) / model.eta)
    if x_inf > max_x:
        raise NumericalFailure(f"truncation point {x_inf:.3g} exceeds max_x = {max_x}")
    if not probe or C == 0.0:
        return TruncationConfig(x_inf, settle_tol, max_x, C, 0.0 if C == 0.0 else float("nan"))
    ptol = settle_tol if probe_tol is None else probe_tol
    lams = sorted({float(l) for l in np.atleast_1d(lambda_range)})
    ell1 = system.initial_frame()

    def angles(xi, lam):
        F = evolve_decaying_frame(system, lam, xi, options).frames[0]
        return np.angle(pair_matrix(ell1, F).eigenvalues)

    while True:
        change = 0.0
        for lam in lams:
            _, d = kernels.match_step(angles(x_inf, lam), angles(1.25 * x_inf, lam))
            change = max(change, float(d))
        if change <= ptol:
            return TruncationConfig(x_inf, settle_tol, max_x, C, change)
        x_inf *= 1.25
        if 1.25 * x_inf > max_x:
            raise NumericalFailure(
                f"truncation did not settle before max_x = {max_x} (last change {change:.2e})"
            )
