"""Spectral flow of the pair matrix through -1.

A path of frame pairs ``t -> (F1(t), F2(t))`` gives a path of unitary pair
matrices ``W(t)``.  Its eigenvalue arguments are continued into real-valued
tracks ``theta_j(t)``; the Maslov index is the net number of times the tracks
pass the level ``pi`` (mod ``2 pi``) counterclockwise.

Counting rule.  With ``G(theta) = floor((theta - pi) / (2 pi)) + 1`` and
angles within ``crossing_tol`` of ``pi (mod 2 pi)`` snapped onto the level,
each track contributes ``G(theta_end) - G(theta_start)``.  This realises all
the endpoint conventions at once: leaving -1 clockwise at the start counts
-1, leaving counterclockwise counts 0, arriving counterclockwise at the end
counts +1, arriving clockwise counts 0, a tangential touch counts 0, and a
dwell at -1 only counts through its arrival and departure.  Being a
difference of a function of the endpoint values, it is exactly additive
under concatenation of paths.
"""

from __future__ import annotations

import csv
from dataclasses import dataclass, field
from typing import Callable, Optional, Union

import numpy as np
from scipy.optimize import linear_sum_assignment

from . import kernels
from .errors import IndefiniteFormError, TrackingError
from .symplectic import CROSSING_TOL, pair_matrices, symplectic_matrix

FrameSource = Union[np.ndarray, Callable[[np.ndarray], np.ndarray]]

TWO_PI = 2.0 * np.pi


def _orthonormal_stack(F: np.ndarray) -> np.ndarray:
    Q, R = np.linalg.qr(F)
    d = np.diagonal(R, axis1=-2, axis2=-1)
    ph = d / np.where(np.abs(d) > 0, np.abs(d), 1.0)
    return Q * ph[..., None, :]


def _frame_fn(src: FrameSource) -> Callable[[np.ndarray], np.ndarray]:
    """Normalise a frame source into ``ts -> (m, 2n, n)`` orthonormal stack."""
    if callable(src):

        def f(ts):
            ts = np.atleast_1d(np.asarray(ts, dtype=float))
            out = np.asarray(src(ts), dtype=complex)
            if out.ndim == 2:
                out = np.broadcast_to(out, (ts.size,) + out.shape)
            return _orthonormal_stack(out)

        return f
    F = _orthonormal_stack(np.asarray(src, dtype=complex))

    def g(ts):
        ts = np.atleast_1d(ts)
        return np.broadcast_to(F, (ts.size,) + F.shape)

    return g


def snap(theta: np.ndarray, tol: float = CROSSING_TOL) -> np.ndarray:
    """Move angles within ``tol`` of ``pi (mod 2 pi)`` exactly onto the level."""
    theta = np.asarray(theta, dtype=float)
    k = np.round((theta - np.pi) / TWO_PI)
    level = np.pi + TWO_PI * k
    return np.where(np.abs(theta - level) < tol, level, theta)


def level_count(theta: np.ndarray, tol: float = CROSSING_TOL) -> np.ndarray:
    """``G(theta)``: number of levels ``pi + 2 pi k`` at or below ``theta`` (offset fixed)."""
    s = snap(theta, tol)
    return np.floor((s - np.pi) / TWO_PI + 1e-12).astype(np.int64) + 1


@dataclass
class UnitaryPath:
    """Sampled pair-matrix path with continued eigenvalue-angle tracks."""

    ts: np.ndarray
    eigen_tracks: np.ndarray  # (m, n) unwrapped angles
    matching_residual: np.ndarray  # (m,) largest per-track move from previous sample
    unitarity_defect: np.ndarray  # (m,)
    crossing_tol: float = CROSSING_TOL
    reassigned: int = 0

    @property
    def n(self) -> int:
        return self.eigen_tracks.shape[1]

    @property
    def eigenvalues(self) -> np.ndarray:
        return np.exp(1j * self.eigen_tracks)

    def min_distance_to_minus_one(self) -> float:
        d = np.pi - np.abs(np.angle(np.exp(1j * self.eigen_tracks)))
        return float(d.min())

    def to_csv(self, path) -> None:
        """Write ``t, theta_1, ..., theta_n`` (unwrapped) as CSV."""
        with open(path, "w", newline="") as fh:
            w = csv.writer(fh)
            w.writerow(["t"] + [f"theta_{j + 1}" for j in range(self.n)])
            for t, row in zip(self.ts, self.eigen_tracks):
                w.writerow([f"{t:.12e}"] + [f"{v:.12e}" for v in row])


@dataclass(frozen=True)
class ConjugatePoint:
    """Parameter value where the two planes intersect.

    ``direction`` is the net signed contribution to the index; ``track_signs``
    the contribution of each participating track (0 for departures/arrivals
    that the endpoint conventions do not count, and for tangential touches).
    ``kind`` is ``interior``, ``left-endpoint``, ``right-endpoint`` or
    ``whole-path``.  ``dwell`` is the length of an interval spent at -1.
    """

    t_star: float
    multiplicity: int
    direction: int
    track_signs: tuple
    kind: str
    dwell: float = 0.0
    bracket: tuple = ()

    @property
    def mixed(self) -> bool:
        s = {v for v in self.track_signs if v != 0}
        return len(s) > 1

    @property
    def tangential(self) -> bool:
        return self.kind == "interior" and all(v == 0 for v in self.track_signs)


@dataclass
class SpectralFlowResult:
    conjugate_points: list
    maslov_index: int
    path: Optional[UnitaryPath] = None
    degenerate: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "maslov_index": int(self.maslov_index),
            "conjugate_points": [
                {
                    "t": cp.t_star,
                    "multiplicity": cp.multiplicity,
                    "direction": cp.direction,
                    "track_signs": list(cp.track_signs),
                    "kind": cp.kind,
                    "dwell": cp.dwell,
                }
                for cp in self.conjugate_points
            ],
        }


def _eig_angles(W: np.ndarray) -> np.ndarray:
    return np.angle(np.linalg.eigvals(W))


def _assign(prev: np.ndarray, phi: np.ndarray):
    """Optimal assignment fallback (Hungarian) on wrapped displacements."""
    d = np.angle(np.exp(1j * (phi[None, :] - prev[:, None])))
    r, c = linear_sum_assignment(np.abs(d))
    out = prev.copy()
    out[r] = prev[r] + d[r, c]
    return out, float(np.abs(d[r, c]).max())


def _continue(prev: np.ndarray, phi: np.ndarray):
    row, worst = kernels.match_step(prev, phi)
    return row, worst


def track_path(
    frames1: FrameSource,
    frames2: FrameSource,
    t_span,
    samples=None,
    *,
    cap: float = 0.3,
    crossing_tol: float = CROSSING_TOL,
    t_rtol: float = 1e-9,
    min_step: Optional[float] = None,
    max_samples: int = 200_000,
    locate: bool = True,
    initial_samples: int = 33,
) -> UnitaryPath:
    """Sample ``W(t)`` on ``t_span`` and continue its eigenvalue angles.

    Samples are refined by bisection until no track moves more than ``cap``
    radians between neighbours.  With ``locate`` set, every step in which a
    track passes ``pi (mod 2 pi)`` is bisected until its width is below
    ``t_rtol`` times the span length.
    """
    f1, f2 = _frame_fn(frames1), _frame_fn(frames2)
    t0, t1 = float(t_span[0]), float(t_span[1])
    span = abs(t1 - t0)
    if min_step is None:
        min_step = max(span, 1.0) * 1e-13
    if span == 0.0:
        ts = np.array([t0])
    elif samples is None:
        ts = np.linspace(t0, t1, initial_samples)
    else:
        s = np.asarray(samples, dtype=float)
        inner = s[((s - t0) * (t1 - t0) > 0) & ((s - t1) * (t1 - t0) < 0)]
        inner = np.unique(inner)
        if t1 < t0:
            inner = inner[::-1]
        ts = np.concatenate([[t0], inner, [t1]])

    def eval_W(tq):
        return pair_matrices(f1(tq), f2(tq))

    W = eval_W(ts)
    phi = np.array([_eig_angles(w) for w in W]) if W.shape[0] else np.zeros((0, 0))

    def unwrap(ts, phi):
        theta, disp = kernels.unwrap_tracks(np.ascontiguousarray(phi), np.ascontiguousarray(np.sort(phi[0])))
        return theta, disp

    for _ in range(200):
        theta, disp = unwrap(ts, phi)
        bad = np.flatnonzero(disp[1:] > cap)
        if bad.size == 0:
            break
        widths = np.abs(ts[bad + 1] - ts[bad])
        if np.any(widths < 2 * min_step):
            i = int(bad[np.argmin(widths)])
            raise TrackingError(f"eigenvalue tracks unresolved near t = {ts[i]:.12g}", where=float(ts[i]))
        mids = (ts[bad] + ts[bad + 1]) / 2
        Wm = eval_W(mids)
        phim = np.array([_eig_angles(w) for w in Wm])
        ts = np.insert(ts, bad + 1, mids)
        W = np.insert(W, bad + 1, Wm, axis=0)
        phi = np.insert(phi, bad + 1, phim, axis=0)
        if ts.size > max_samples:
            raise TrackingError("too many samples needed to resolve eigenvalue tracks")
    else:
        raise TrackingError("sample refinement did not converge")

    if locate and ts.size > 1:
        ts, W, phi, theta, disp = _locate_crossings(ts, W, phi, theta, disp, eval_W, crossing_tol, t_rtol * max(span, 1e-300), cap)

    n = W.shape[-1]
    udef = np.linalg.norm(np.swapaxes(W.conj(), -1, -2) @ W - np.eye(n), ord=2, axis=(-2, -1))
    return UnitaryPath(ts=ts, eigen_tracks=theta, matching_residual=disp, unitarity_defect=udef, crossing_tol=crossing_tol)


def _locate_crossings(ts, W, phi, theta, disp, eval_W, tol, t_tol, cap):
    """Bisect every step in which a track passes the level ``pi`` (mod 2 pi).

    Bisection uses the raw (unsnapped) level count of the individual track so
    the bracket shrinks to ``t_tol`` even inside the snapping window.  The new
    samples are merged into the path and the tracks are re-continued.
    """
    G = level_count(theta, 0.0)
    new_t, new_W, new_phi = [], [], []
    for i, k in zip(*np.nonzero(G[1:] != G[:-1])):
        ta, tha = ts[i], theta[i]
        tb = ts[i + 1]
        g_a = G[i, k]
        for _ in range(200):
            if abs(tb - ta) <= t_tol:
                break
            tm = 0.5 * (ta + tb)
            Wm = eval_W(np.array([tm]))[0]
            pm = _eig_angles(Wm)
            thm, worst = _continue(tha, pm)
            if worst > cap:
                thm, worst = _assign(tha, pm)
            new_t.append(tm)
            new_W.append(Wm)
            new_phi.append(pm)
            if level_count(thm[k], 0.0) == g_a:
                ta, tha = tm, thm
            else:
                tb = tm
    if not new_t:
        return ts, W, phi, theta, disp
    ts2 = np.concatenate([ts, new_t])
    order = np.argsort(ts2, kind="stable") if ts[-1] > ts[0] else np.argsort(-ts2, kind="stable")
    ts2 = ts2[order]
    W2 = np.concatenate([W, np.array(new_W)])[order]
    phi2 = np.concatenate([phi, np.array(new_phi)])[order]
    theta2, disp2 = kernels.unwrap_tracks(np.ascontiguousarray(phi2), np.ascontiguousarray(theta[0]))
    return ts2, W2, phi2, theta2, disp2


def maslov_index(path: UnitaryPath, crossing_tol: Optional[float] = None, t_group: Optional[float] = None) -> SpectralFlowResult:
    """Signed count of passes through -1 with the endpoint conventions.

    Events of different tracks closer than ``t_group`` are merged into one
    conjugate point (default: 1e-8 of the path length).
    """
    tol = path.crossing_tol if crossing_tol is None else crossing_tol
    ts, th = path.ts, path.eigen_tracks
    m, n = th.shape
    if m == 0:
        return SpectralFlowResult([], 0, path)
    span = abs(ts[-1] - ts[0])
    if t_group is None:
        t_group = 1e-8 * max(span, 1e-300)
    G = level_count(th, tol)
    at = np.abs(snap(th, tol) - th) > 0
    # exact "at level" also counts (already snapped values)
    at |= np.isclose(np.mod(th - np.pi, TWO_PI), 0.0, atol=0.0)
    total = int((G[-1] - G[0]).sum())
    events = []  # (t, contribution, kind, dwell, bracket)
    for k in range(n):
        i = 0
        while i < m:
            if at[i, k]:
                j = i
                while j + 1 < m and at[j + 1, k]:
                    j += 1
                before = G[i - 1, k] if i > 0 else G[i, k]
                after = G[j + 1, k] if j + 1 < m else G[j, k]
                if i == 0 and j == m - 1:
                    kind = "whole-path"
                elif i == 0:
                    kind = "left-endpoint"
                elif j == m - 1:
                    kind = "right-endpoint"
                else:
                    kind = "interior"
                if kind == "left-endpoint":
                    t_star = ts[i]
                elif kind == "right-endpoint":
                    t_star = ts[j]
                else:
                    dist = np.abs(np.mod(th[i : j + 1, k] - np.pi + np.pi, TWO_PI) - np.pi)
                    t_star = ts[i + int(np.argmin(dist))]
                events.append((float(t_star), int(after - before), kind, float(abs(ts[j] - ts[i])), (float(ts[i]), float(ts[j])), k))
                i = j + 1
                continue
            if i + 1 < m and not at[i + 1, k] and G[i + 1, k] != G[i, k]:
                a, b = float(ts[i]), float(ts[i + 1])
                # passes through several levels in one step count individually
                events.append(((a + b) / 2, int(G[i + 1, k] - G[i, k]), "interior", 0.0, (a, b), k))
            i += 1
    events.sort(key=lambda e: (e[0] if ts[-1] >= ts[0] else -e[0]))
    cps = []
    degenerate = []
    group: list = []

    def flush():
        if not group:
            return
        signs = tuple(int(np.sign(e[1])) if abs(e[1]) <= 1 else int(e[1]) for e in group)
        kinds = {e[2] for e in group}
        kind = group[0][2] if len(kinds) == 1 else sorted(kinds)[0]
        cp = ConjugatePoint(
            t_star=float(np.mean([e[0] for e in group])),
            multiplicity=len(group),
            direction=int(sum(e[1] for e in group)),
            track_signs=signs,
            kind=kind,
            dwell=float(max(e[3] for e in group)),
            bracket=(min(e[4][0] for e in group), max(e[4][1] for e in group)),
        )
        cps.append(cp)
        if cp.tangential or cp.mixed:
            degenerate.append(cp)
        group.clear()

    for e in events:
        if group and abs(e[0] - group[-1][0]) > t_group:
            flush()
        group.append(e)
    flush()
    assert sum(cp.direction for cp in cps) == total
    return SpectralFlowResult(cps, total, path, degenerate)


def spectral_flow(frames1: FrameSource, frames2: FrameSource, t_span, samples=None, **kw) -> SpectralFlowResult:
    """Convenience: :func:`track_path` followed by :func:`maslov_index`."""
    tol = kw.get("crossing_tol", CROSSING_TOL)
    return maslov_index(track_path(frames1, frames2, t_span, samples, **kw), tol)


# -- crossing forms ---------------------------------------------------------


def _derivative(f, t: float, delta: float) -> tuple[np.ndarray, np.ndarray]:
    F = f(np.array([t - delta, t, t + delta]))
    return F[1], (F[2] - F[0]) / (2 * delta)


def crossing_form(
    frames1: FrameSource,
    frames2: FrameSource,
    t_star: float,
    *,
    delta: float = 1e-5,
    restrict: bool = True,
    tol: float = 1e-6,
) -> np.ndarray:
    """Hermitian form whose definiteness gives the rotation direction of ``W``.

    ``-X1^* J dX1 + X2^* J dX2`` (derivatives by central differences).  With
    ``restrict`` and a non-trivial intersection at ``t_star`` it is restricted
    to the intersection; otherwise the sum is returned in the coordinates
    ``u -> (F1 u)`` and ``u -> (F2 u)`` added together (meaningful when one
    slot is constant).
    """
    f1, f2 = _frame_fn(frames1), _frame_fn(frames2)
    X1, d1 = _derivative(f1, t_star, delta)
    X2, d2 = _derivative(f2, t_star, delta)
    n = X1.shape[1]
    J = symplectic_matrix(n)
    M1 = -(X1.conj().T @ J @ d1)
    M2 = X2.conj().T @ J @ d2
    M1 = (M1 + M1.conj().T) / 2
    M2 = (M2 + M2.conj().T) / 2
    if restrict:
        # intersection: X1 a = X2 b  <=>  [X1, -X2] (a; b) = 0
        _, s, Vh = np.linalg.svd(np.hstack([X1, -X2]))
        null = Vh[np.concatenate([s, np.zeros(2 * n - s.size)]) < tol * max(1.0, s[0])].conj().T
        if null.shape[1] > 0:
            A, B = null[:n], null[n:]
            G = A.conj().T @ M1 @ A + B.conj().T @ M2 @ B
            return (G + G.conj().T) / 2
    return M1 + M2


def form_direction(M: np.ndarray, rtol: float = 1e-8) -> int:
    """+1 for positive definite, -1 for negative definite, else raise."""
    ev = np.linalg.eigvalsh(M)
    scale = max(np.abs(ev).max(), 1e-300) if ev.size else 0.0
    if ev.size == 0 or scale < 1e-14:
        raise IndefiniteFormError("crossing form vanishes")
    if np.all(ev > rtol * scale):
        return 1
    if np.all(ev < -rtol * scale):
        return -1
    raise IndefiniteFormError(f"crossing form is indefinite (eigenvalues {ev})")


def crossing_form_direction(
    frames1: FrameSource,
    frames2: FrameSource,
    t_star: float,
    *,
    which: str = "both",
    delta: float = 1e-5,
    restrict: bool = True,
) -> int:
    """Direction (+1 counterclockwise, -1 clockwise) of eigenvalue rotation at ``t_star``.

    ``which`` selects the varying slot(s): ``first``, ``second`` or ``both``;
    the other slot is frozen at its value at ``t_star``.
    """
    f1, f2 = _frame_fn(frames1), _frame_fn(frames2)
    if which == "first":
        fixed = f2(np.array([t_star]))[0]
        f2 = _frame_fn(fixed)
    elif which == "second":
        fixed = f1(np.array([t_star]))[0]
        f1 = _frame_fn(fixed)
    elif which != "both":
        raise ValueError("which must be 'first', 'second' or 'both'")
    return form_direction(crossing_form(f1, f2, t_star, delta=delta, restrict=restrict))
