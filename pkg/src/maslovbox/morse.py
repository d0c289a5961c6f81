"""Morse counts from the Maslov box.

The box lives in the ``(lambda, x)`` plane with corners at ``lambda = -lambda_inf``,
``lambda = lambda0``, ``x = 0`` and ``x = x_inf`` (standing in for ``x = +inf``).
Shelves are traversed in the fixed order

    bottom  (lambda increasing at x = 0)
    right   (x increasing at lambda = lambda0)
    top     (lambda decreasing at x = inf)
    left    (x decreasing at lambda = -lambda_inf)

so the four oriented indices always sum to zero.  Two boxes are used:

* ``target0`` pairs the fixed boundary plane ``l1(0)`` with the decaying
  plane ``l2(x; lambda)``.  The bottom shelf counts the eigenvalues
  (each one clockwise), the top shelf is computed from the closed form of the
  asymptotic decaying plane, and ``Mor = right + top``.
* ``targetplus`` pairs the evolving boundary plane ``l1(x; lambda)`` with the
  asymptotic decaying plane ``l2+(lambda)``.  Its bottom shelf is the same
  ``lambda``-sweep as the top shelf above (reversed) and ``Mor = -(right +
  bottom)``.  The far shelf counts the eigenvalues again; it is evaluated
  through the symplectically equivalent pair ``(l1(0), l2(0; lambda))``.

The corollary replaces the target ``l2+`` by the Dirichlet plane and adds a
signature correction.
"""

from __future__ import annotations

import logging
import time
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .asymptotics import asymptotic_data, decaying_frames, lambda_infinity_bound
from .errors import AmbiguousCountError, AssumptionViolation, NumericalFailure, TransversalityError
from .evolution import (
    DEFAULT_OPTIONS,
    IntegratorOptions,
    TruncationConfig,
    evolve_boundary_frame,
    evolve_decaying_frame,
    settle_truncation,
)
from .hormander import dirichlet_exchange_correction, dirichlet_exchange_matrix, signature
from .problem import HalfLineSystem
from .spectral_flow import SpectralFlowResult, spectral_flow
from .symplectic import CROSSING_TOL, dirichlet_frame, distance_to_minus_one, intersection_dimension

log = logging.getLogger(__name__)

METHODS = ("target0", "targetplus", "corollary")
SHELVES = ("bottom", "right", "top", "left")


@dataclass(frozen=True)
class MorseOptions:
    """Knobs shared by all three counting methods.

    ``bump`` is the increment applied to ``lambda_inf`` while the boundary plane
    meets the asymptotic decaying plane, at most ``max_bumps`` times and never
    past ``lambda_inf_cap``.  ``eigen_shift`` is the distance by which
    ``lambda0`` is moved down when it is (numerically) an eigenvalue and a
    method cannot work at an eigenvalue.  ``close_box`` also computes the two
    shelves that do not enter the count, so the loop sum can be checked.
    """

    settle_tol: float = 1e-8
    max_x: float = 200.0
    lambda_inf: Optional[float] = None
    lambda_inf_factor: float = 1.1
    lambda_inf_shift: float = 1.0
    bump: float = 1.0
    max_bumps: int = 20
    lambda_inf_cap: float = 1e6
    crossing_tol: float = CROSSING_TOL
    eigen_tol: float = CROSSING_TOL
    eigen_shift: float = 1e-2
    end_margin: float = 1e-3
    close_box: bool = True
    validate: bool = True
    integrator: IntegratorOptions = DEFAULT_OPTIONS


DEFAULT_MORSE_OPTIONS = MorseOptions()


@dataclass
class MaslovBox:
    """The four oriented shelves of one box."""

    target: str
    lambda0: float
    lambda_inf: float
    x_inf: float
    bottom: Optional[SpectralFlowResult] = None
    right: Optional[SpectralFlowResult] = None
    top: Optional[SpectralFlowResult] = None
    left: Optional[SpectralFlowResult] = None

    @property
    def indices(self) -> dict:
        return {s: (None if getattr(self, s) is None else int(getattr(self, s).maslov_index)) for s in SHELVES}

    @property
    def closed(self) -> bool:
        return all(v is not None for v in self.indices.values())

    @property
    def loop_sum(self) -> Optional[int]:
        idx = self.indices
        return sum(idx.values()) if self.closed else None

    def max_unitarity_defect(self) -> float:
        vals = [float(np.max(r.path.unitarity_defect)) for r in (self.bottom, self.right, self.top, self.left) if r is not None and r.path.ts.size]
        return max(vals) if vals else 0.0

    def as_dict(self) -> dict:
        return {
            "target": self.target,
            "lambda0": self.lambda0,
            "lambda_inf": self.lambda_inf,
            "x_inf": self.x_inf,
            "indices": self.indices,
            "loop_sum": self.loop_sum,
            "conjugate_points": {
                s: getattr(self, s).as_dict()["conjugate_points"] for s in SHELVES if getattr(self, s) is not None
            },
        }


@dataclass
class MorseReport:
    """Result of one counting method."""

    morse_index: int
    method: str
    lambda0: float
    lambda_eff: float
    shelves: dict
    box: Optional[MaslovBox] = None
    correction: Optional[int] = None
    lambda_inf: float = float("nan")
    x_inf: float = float("nan")
    bumps: int = 0
    degenerate_lambda0: bool = False
    flags: list = field(default_factory=list)
    diagnostics: dict = field(default_factory=dict)
    elapsed: float = 0.0

    def __post_init__(self):
        if self.morse_index < 0:
            raise NumericalFailure(f"{self.method}: assembled a negative Morse count {self.morse_index}; shelves {self.shelves}")

    def as_dict(self) -> dict:
        out = {
            "method": self.method,
            "morse_index": int(self.morse_index),
            "lambda0": self.lambda0,
            "lambda_eff": self.lambda_eff,
            "lambda_inf": self.lambda_inf,
            "x_inf": self.x_inf,
            "bumps": self.bumps,
            "shelves": dict(self.shelves),
            "correction": self.correction,
            "degenerate_lambda0": self.degenerate_lambda0,
            "flags": list(self.flags),
            "diagnostics": dict(self.diagnostics),
        }
        if self.box is not None:
            out["box"] = self.box.as_dict()
        return out


# -- set-up ------------------------------------------------------------------


def check_boundary_inconjugate(system: HalfLineSystem, lambda_inf: float, tol: float = CROSSING_TOL) -> bool:
    """True iff the boundary plane is transverse to ``l2+(-lambda_inf)``."""
    if not lambda_inf > 0:
        raise AssumptionViolation(f"lambda_inf must be positive, got {lambda_inf}", quantity="lambda_inf")
    decay = asymptotic_data(system.model, -float(lambda_inf)).frame_decay
    return intersection_dimension(system.initial_frame(), decay, tol) == 0


def choose_lambda_inf(system: HalfLineSystem, options: MorseOptions = DEFAULT_MORSE_OPTIONS, lambda0: float = 0.0) -> tuple[float, int]:
    """Start from the a-priori bound (or the configured value) and bump until
    the boundary plane is transverse to the asymptotic decaying plane."""
    if options.lambda_inf is not None:
        lam_inf = float(options.lambda_inf)
    else:
        lam_inf = lambda_infinity_bound(
            system.model, system.projectors, factor=options.lambda_inf_factor, shift=options.lambda_inf_shift
        )
    lam_inf = max(lam_inf, -float(lambda0) + options.bump, 1e-12)
    for bumps in range(options.max_bumps + 1):
        if lam_inf > options.lambda_inf_cap:
            break
        if check_boundary_inconjugate(system, lam_inf, options.crossing_tol):
            return lam_inf, bumps
        log.info("lambda_inf = %g is not boundary inconjugate; bumping by %g", lam_inf, options.bump)
        lam_inf += options.bump
    raise NumericalFailure(f"no boundary-inconjugate lambda_inf found below the cap {options.lambda_inf_cap:g}")


@dataclass
class _Context:
    system: HalfLineSystem
    lambda0: float
    lambda_inf: float
    bumps: int
    trunc: TruncationConfig
    options: MorseOptions
    degenerate: bool
    degenerate_dim: int


def _prepare(system: HalfLineSystem, lambda0: float, options: MorseOptions) -> _Context:
    lambda0 = float(lambda0)
    if options.validate:
        system.validate(raise_on_failure=True)
    if not lambda0 < system.kappa:
        raise AssumptionViolation(
            f"lambda0 = {lambda0} is not below the essential spectrum edge {system.kappa:.6g}", quantity="lambda0"
        )
    lam_inf, bumps = choose_lambda_inf(system, options, lambda0)
    trunc = settle_truncation(
        system, [-lam_inf, lambda0], settle_tol=options.settle_tol, max_x=options.max_x, options=options.integrator
    )
    ell2 = evolve_decaying_frame(system, lambda0, trunc, options.integrator).frames[0]
    dim = intersection_dimension(system.initial_frame(), ell2, options.eigen_tol)
    if dim:
        log.warning("lambda0 = %g is an eigenvalue (multiplicity %d); counting on (-inf, lambda0)", lambda0, dim)
    return _Context(system, lambda0, lam_inf, bumps, trunc, options, dim > 0, dim)


def _flow(f1, f2, span, samples=None, options: MorseOptions = DEFAULT_MORSE_OPTIONS) -> SpectralFlowResult:
    return spectral_flow(f1, f2, span, samples, crossing_tol=options.crossing_tol)


def _decaying_at_zero(ctx: _Context):
    def frames(lams):
        return np.array([evolve_decaying_frame(ctx.system, float(l), ctx.trunc, ctx.options.integrator).frames[0] for l in lams])

    return frames


def _asymptotic(ctx: _Context):
    return lambda lams: decaying_frames(ctx.system.model, lams)


def _end_distance(res: SpectralFlowResult) -> float:
    return float(np.min(distance_to_minus_one(res.path.eigen_tracks[-1])))


def _lambda_shelf(ctx: _Context, lam_from: float, lam_to: float) -> SpectralFlowResult:
    """``l1(0)`` against ``l2+(lambda)`` (closed form)."""
    return _flow(ctx.system.initial_frame(), _asymptotic(ctx), (lam_from, lam_to), options=ctx.options)


def _monotone(res: SpectralFlowResult, sign: int) -> bool:
    return all(all(s == sign for s in cp.track_signs if s != 0) for cp in res.conjugate_points if cp.kind == "interior")


def _effective_lambda(ctx: _Context) -> tuple[float, list]:
    """``lambda0`` itself, or ``lambda0 - delta`` with no eigenvalue in ``[lambda0 - delta, lambda0)``."""
    if not ctx.degenerate:
        return ctx.lambda0, []
    delta = ctx.options.eigen_shift
    ell1 = ctx.system.initial_frame()
    for _ in range(6):
        lam = ctx.lambda0 - delta
        gap = _flow(ell1, _decaying_at_zero(ctx), (lam, ctx.lambda0), options=ctx.options)
        start_clear = distance_to_minus_one(gap.path.eigen_tracks[0]).min() > ctx.options.eigen_tol
        if gap.maslov_index == 0 and start_clear:
            return lam, [f"lambda0 is an eigenvalue; evaluated at lambda0 - {delta:g}"]
        delta /= 4
    raise AmbiguousCountError(
        "could not separate lambda0 from nearby eigenvalues", value=ctx.lambda0, margin=delta
    )


def _base_report(ctx: _Context, method: str, lam_eff: float) -> dict:
    return dict(
        lambda0=ctx.lambda0,
        lambda_eff=lam_eff,
        lambda_inf=ctx.lambda_inf,
        x_inf=ctx.trunc.x_inf,
        bumps=ctx.bumps,
        degenerate_lambda0=ctx.degenerate,
    )


# -- methods ----------------------------------------------------------------


def morse_via_target0(system: HalfLineSystem, lambda0: float = 0.0, options: MorseOptions = DEFAULT_MORSE_OPTIONS, *, _ctx=None) -> MorseReport:
    """``Mor = Mas(l1(0), l2(.; lambda0); [0, inf)) - Mas(l1(0), l2+(.); [-lambda_inf, lambda0])``."""
    t0 = time.perf_counter()
    ctx = _ctx or _prepare(system, lambda0, options)
    opts = ctx.options
    ell1 = system.initial_frame()
    x_inf = ctx.trunc.x_inf
    right_path = evolve_decaying_frame(system, ctx.lambda0, ctx.trunc, opts.integrator)
    box = MaslovBox("target0", ctx.lambda0, ctx.lambda_inf, x_inf)
    box.right = _flow(ell1, right_path.frame_at, (0.0, x_inf), right_path.grid, opts)
    box.top = _lambda_shelf(ctx, ctx.lambda0, -ctx.lambda_inf)
    flags = []
    if not _monotone(box.top, +1):
        flags.append("top shelf not monotone")
    defects = [right_path.max_lagrangian_defect]
    if opts.close_box:
        box.bottom = _flow(ell1, _decaying_at_zero(ctx), (-ctx.lambda_inf, ctx.lambda0), options=opts)
        left_path = evolve_decaying_frame(system, -ctx.lambda_inf, ctx.trunc, opts.integrator)
        defects.append(left_path.max_lagrangian_defect)
        box.left = _flow(ell1, left_path.frame_at, (x_inf, 0.0), left_path.grid, opts)
        if box.loop_sum != 0:
            flags.append(f"loop sum {box.loop_sum}")
        if box.indices["left"] != 0:
            flags.append("left shelf has crossings")
    idx = box.indices
    mor = idx["right"] + idx["top"]
    diag = {
        "lagrangian_defect": max(defects),
        "unitarity_defect": box.max_unitarity_defect(),
        "top_min_distance": float(np.min(distance_to_minus_one(box.top.path.eigen_tracks))),
        "truncation_probe": ctx.trunc.probe_change,
    }
    if box.bottom is not None:
        diag["bottom_crossings"] = [cp.t_star for cp in box.bottom.conjugate_points if cp.kind == "interior"]
        if -idx["bottom"] != mor:
            flags.append("bottom shelf disagrees with count")
    return MorseReport(
        mor, "target0", shelves=idx, box=box, flags=flags, diagnostics=diag,
        elapsed=time.perf_counter() - t0, **_base_report(ctx, "target0", ctx.lambda0),
    )


def morse_via_targetplus(system: HalfLineSystem, lambda0: float = 0.0, options: MorseOptions = DEFAULT_MORSE_OPTIONS, *, _ctx=None) -> MorseReport:
    """``Mor = -Mas(l1(.; lambda0), l2+(lambda0); [0, inf)) - Mas(l1(0), l2+(.); [-lambda_inf, lambda0])``.

    At an eigenvalue ``lambda0`` the evolving boundary plane only approaches
    the target asymptotically, so the count is taken at ``lambda0 - delta``
    after checking that no eigenvalue lies in between.
    """
    t0 = time.perf_counter()
    ctx = _ctx or _prepare(system, lambda0, options)
    opts = ctx.options
    lam, flags = _effective_lambda(ctx)
    x_inf = ctx.trunc.x_inf
    target = asymptotic_data(system.model, lam).frame_decay
    right_path = evolve_boundary_frame(system, lam, (0.0, x_inf), opts.integrator)
    box = MaslovBox("targetplus", lam, ctx.lambda_inf, x_inf)
    box.bottom = _lambda_shelf(ctx, -ctx.lambda_inf, lam)
    box.right = _flow(right_path.frame_at, target, (0.0, x_inf), right_path.grid, opts)
    defects = [right_path.max_lagrangian_defect]
    end_dist = _end_distance(box.right)
    if end_dist < opts.end_margin:
        raise AmbiguousCountError(
            f"evolving boundary plane ends within {end_dist:.2e} rad of the target at x_inf", value=lam, margin=end_dist
        )
    if opts.close_box:
        # Far shelf: (l1(x_inf; lambda), l2(x_inf; lambda)) is the image of
        # (l1(0), l2(0; lambda)) under the lambda-dependent propagator, which is
        # symplectic, so it carries the same index.  Sampling the propagated
        # pair directly is ill-conditioned: near an eigenvalue it turns once in
        # a window of width ~exp(-2 mu x_inf).
        box.top = _flow(system.initial_frame(), _decaying_at_zero(ctx), (lam, -ctx.lambda_inf), options=opts)
        left_path = evolve_boundary_frame(system, -ctx.lambda_inf, (0.0, x_inf), opts.integrator)
        defects.append(left_path.max_lagrangian_defect)
        target_left = asymptotic_data(system.model, -ctx.lambda_inf).frame_decay
        box.left = _flow(left_path.frame_at, target_left, (x_inf, 0.0), left_path.grid, opts)
        if box.loop_sum != 0:
            flags.append(f"loop sum {box.loop_sum}")
        if box.indices["left"] != 0:
            flags.append("left shelf has crossings")
    idx = box.indices
    mor = -(idx["right"] + idx["bottom"])
    if box.top is not None and idx["top"] != mor:
        flags.append("far shelf disagrees with count")
    diag = {
        "lagrangian_defect": max(defects),
        "unitarity_defect": box.max_unitarity_defect(),
        "right_end_distance": end_dist,
        "truncation_probe": ctx.trunc.probe_change,
    }
    return MorseReport(
        mor, "targetplus", shelves=idx, box=box, flags=flags, diagnostics=diag,
        elapsed=time.perf_counter() - t0, **_base_report(ctx, "targetplus", lam),
    )


def corollary_preconditions(system: HalfLineSystem, lam: float, tol: float = CROSSING_TOL) -> None:
    """Raise :class:`TransversalityError` naming the plane pair that intersects."""
    ell1 = system.initial_frame()
    k = intersection_dimension(ell1, dirichlet_frame(system.n), tol)
    if k:
        raise TransversalityError(f"boundary plane meets the Dirichlet plane (dimension {k})", pair="l1(0),l_D", dimension=k)
    k = intersection_dimension(ell1, asymptotic_data(system.model, lam).frame_decay, tol)
    if k:
        raise TransversalityError(
            f"boundary plane meets the asymptotic decaying plane at lambda = {lam} (dimension {k})",
            pair="l1(0),l2+",
            dimension=k,
        )


def morse_via_corollary(system: HalfLineSystem, lambda0: float = 0.0, options: MorseOptions = DEFAULT_MORSE_OPTIONS, *, _ctx=None) -> MorseReport:
    """Dirichlet-target count plus the signature correction:

        Mor = -Mas(l1(.; lambda0), l_D; [0, inf)) + correction - Mas(l1(0), l2+(.); [-lambda_inf, lambda0]).
    """
    t0 = time.perf_counter()
    corollary_preconditions(system, float(lambda0), options.crossing_tol)
    ctx = _ctx or _prepare(system, lambda0, options)
    opts = ctx.options
    lam, flags = _effective_lambda(ctx)
    corollary_preconditions(system, lam, opts.crossing_tol)
    x_inf = ctx.trunc.x_inf
    asym = asymptotic_data(system.model, lam)
    corr = dirichlet_exchange_correction(system.bc, asym)
    path = evolve_boundary_frame(system, lam, (0.0, x_inf), opts.integrator)
    right = _flow(path.frame_at, dirichlet_frame(system.n), (0.0, x_inf), path.grid, opts)
    end_dist = _end_distance(right)
    if end_dist < opts.end_margin:
        raise AmbiguousCountError(
            f"evolving boundary plane ends within {end_dist:.2e} rad of the Dirichlet plane", value=lam, margin=end_dist
        )
    shelf = _lambda_shelf(ctx, -ctx.lambda_inf, lam)
    if not _monotone(right, -1):
        flags.append("Dirichlet-target crossings not monotone")
    mor = -right.maslov_index + corr - shelf.maslov_index
    shelves = {"dirichlet_right": int(right.maslov_index), "lambda_shelf": int(shelf.maslov_index)}
    sgn, _ = signature(dirichlet_exchange_matrix(system.bc, asym))
    diag = {
        "lagrangian_defect": path.max_lagrangian_defect,
        "unitarity_defect": float(max(np.max(right.path.unitarity_defect), np.max(shelf.path.unitarity_defect))),
        "exchange_signature": int(sgn),
        "right_end_distance": end_dist,
    }
    return MorseReport(
        mor, "corollary", shelves=shelves, correction=int(corr), flags=flags, diagnostics=diag,
        elapsed=time.perf_counter() - t0, **_base_report(ctx, "corollary", lam),
    )


_DISPATCH = {"target0": morse_via_target0, "targetplus": morse_via_targetplus, "corollary": morse_via_corollary}


def morse_all(system: HalfLineSystem, lambda0: float = 0.0, methods=METHODS, options: MorseOptions = DEFAULT_MORSE_OPTIONS) -> dict:
    """Run several methods sharing one set-up (``lambda_inf``, ``x_inf``).

    Returns ``{method: MorseReport | Exception}``; a corollary whose
    preconditions fail is recorded as the raised :class:`TransversalityError`
    or :class:`AssumptionViolation`.
    """
    ctx = _prepare(system, lambda0, options)
    out = {}
    for m in methods:
        if m not in _DISPATCH:
            raise ValueError(f"unknown method {m!r}; expected one of {METHODS}")
        try:
            out[m] = _DISPATCH[m](system, lambda0, options, _ctx=ctx)
        except (TransversalityError, AssumptionViolation) as exc:
            if m != "corollary":
                raise
            out[m] = exc
    return out


def methods_agree(results: dict) -> bool:
    counts = {r.morse_index for r in results.values() if isinstance(r, MorseReport)}
    return len(counts) <= 1
