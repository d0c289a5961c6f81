"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Run on its own with ``pytest tests/test_acceptance.py -v`` (about 15 minutes
on one core; the randomized oracle comparison dominates).
"""

import time

import numpy as np
import pytest
from scipy.optimize import linear_sum_assignment

from maslovbox.asymptotics import asymptotic_data
from maslovbox.errors import AmbiguousCountError, MaslovError, TransversalityError, UnconvergedError
from maslovbox.fd_oracle import fd_count
from maslovbox.hormander import hormander_by_paths, hormander_index, q_form
from maslovbox.morse import MorseOptions, MorseReport, check_boundary_inconjugate, choose_lambda_inf, morse_all, morse_via_target0
from maslovbox.problem import BoundaryCondition, CoefficientModel, HalfLineSystem
from maslovbox.star_graph import StarGraphNLS, analytic_right_shelf, build_system, q_plus_point
from maslovbox.symplectic import dirichlet_frame, random_lagrangian_frame

from random_systems import random_system

pytestmark = pytest.mark.slow

GRID = [(n, p) for n in (2, 3, 5) for p in (0.5, 1.0, 2.0)]
N_RANDOM = 200
RANDOM_SEED = 1
DEFECT_LIMIT = 1e-8


def report(capsys, number, title, failures, detail=""):
    """Print the verdict line, then fail the test with the collected reasons."""
    verdict = "PASS" if not failures else "FAIL"
    with capsys.disabled():
        print(f"\n[criterion {number}] {verdict}: {title}" + (f" ({detail})" if detail else ""))
    assert not failures, "; ".join(str(f) for f in failures[:10])


def reports_of(results):
    return {k: r for k, r in results.items() if isinstance(r, MorseReport)}


@pytest.fixture(scope="module")
def flagship():
    """``morse_all`` on every (n, p, operator) star-graph cell, with wall times."""
    runs = []
    for n, p in GRID:
        for op in ("L+", "L-"):
            cfg = StarGraphNLS(n, p, op)
            sys_ = build_system(cfg)
            t0 = time.perf_counter()
            res = morse_all(sys_, 0.0)
            runs.append({"cfg": cfg, "system": sys_, "lambda0": 0.0, "results": res, "seconds": time.perf_counter() - t0})
    return runs


@pytest.fixture(scope="module")
def randomized():
    """Randomized systems with all Maslov methods and the finite-difference oracle."""
    rng = np.random.default_rng(RANDOM_SEED)
    runs = []
    for _ in range(N_RANDOM):
        sys_ = random_system(rng)
        lam0 = float(rng.uniform(-1.0, 0.5 * min(1.0, sys_.kappa)))
        run = {"system": sys_, "lambda0": lam0}
        try:
            run["results"] = morse_all(sys_, lam0)
        except MaslovError as exc:
            run["results"], run["maslov_error"] = {}, exc
        try:
            run["oracle"] = fd_count(sys_, lam0)
        except (AmbiguousCountError, UnconvergedError) as exc:
            run["oracle_error"] = exc
        runs.append(run)
    return runs


def test_criterion_1_flagship_counts(flagship, capsys):
    failures = []
    corollary_used = 0
    for run in flagship:
        cfg, res = run["cfg"], run["results"]
        expected = 1 if cfg.operator == "L+" else 0
        label = f"n={cfg.n} p={cfg.p} {cfg.operator}"
        for m in ("target0", "targetplus"):
            r = res[m]
            if not isinstance(r, MorseReport) or r.morse_index != expected:
                failures.append(f"{label} {m}: {getattr(r, 'morse_index', r)}")
        cor = res["corollary"]
        if isinstance(cor, MorseReport):
            corollary_used += 1
            if cor.morse_index != expected:
                failures.append(f"{label} corollary: {cor.morse_index}")
        elif not isinstance(cor, TransversalityError):
            failures.append(f"{label} corollary failed: {cor!r}")
        if run["seconds"] >= 60.0:
            failures.append(f"{label}: {run['seconds']:.1f} s")
    slowest = max(r["seconds"] for r in flagship)
    detail = f"{len(flagship)} runs, slowest {slowest:.1f} s, corollary applicable in {corollary_used}"
    report(capsys, 1, "star-graph Mor(L+) = 1, Mor(L-) = 0, methods agree, < 60 s", failures, detail)


def test_criterion_2_right_and_top_shelves(flagship, capsys):
    failures = []
    min_dist = np.inf
    for run in flagship:
        cfg = run["cfg"]
        rep = run["results"]["target0"]
        label = f"n={cfg.n} p={cfg.p} {cfg.operator}"
        if rep.shelves["top"] != 0:
            failures.append(f"{label}: top index {rep.shelves['top']}")
        dist = rep.diagnostics["top_min_distance"]
        min_dist = min(min_dist, dist)
        if not dist > 0.1:
            failures.append(f"{label}: top distance {dist:.3g}")
        if cfg.operator != "L+":
            continue
        right = rep.box.right
        if right.maslov_index != 1:
            failures.append(f"{label}: right index {right.maslov_index}")
        theta = right.path.eigen_tracks
        on_level = np.abs(np.cos(theta[0]) + 1.0) < 1e-10
        k = int(np.argmax(np.abs(theta - theta[0]).max(axis=1) > 1e-3))
        departed = on_level & (theta[k] - theta[0] > 0)
        if on_level.sum() != cfg.n - 1 or departed.sum() != cfg.n - 1:
            failures.append(f"{label}: {on_level.sum()} tracks on -1, {departed.sum()} leave counterclockwise")
        interior = [cp for cp in right.conjugate_points if cp.kind == "interior"]
        # the only interior crossing is the simple one at x_bar; departed tracks never return
        if sum(cp.multiplicity for cp in interior) != 1 or any(cp.direction != 1 for cp in interior):
            failures.append(f"{label}: interior crossings {[(cp.t_star, cp.direction) for cp in interior]}")
        elif abs(interior[0].t_star - q_plus_point(cfg)) > 1e-4:
            failures.append(f"{label}: crossing at {interior[0].t_star:.6f}, expected {q_plus_point(cfg):.6f}")
    report(capsys, 2, "right shelf +1 with n-1 counterclockwise departures, top shelf 0 and > 0.1 from -1", failures, f"min top distance {min_dist:.3f}")


def test_criterion_3_analytic_right_shelf(flagship, capsys):
    failures = []
    worst = 0.0
    for run in flagship:
        cfg = run["cfg"]
        path = run["results"]["target0"].box.right.path
        W = np.exp(1j * path.eigen_tracks)
        exact = analytic_right_shelf(cfg, path.ts)
        err = 0.0
        for k in range(path.ts.size):
            cost = np.abs(W[k][:, None] - exact[k][None, :])
            r, c = linear_sum_assignment(cost)
            err = max(err, float(cost[r, c].max()))
        worst = max(worst, err)
        if err >= 1e-6:
            failures.append(f"n={cfg.n} p={cfg.p} {cfg.operator}: {err:.2e}")
        x_inf = run["results"]["target0"].x_inf
        if path.ts[0] != 0.0 or abs(path.ts[-1] - x_inf) > 1e-12:
            failures.append(f"n={cfg.n} p={cfg.p}: path covers [{path.ts[0]}, {path.ts[-1]}]")
    report(capsys, 3, "right-shelf eigenvalues match {-a_j q(x)} to 1e-6 on [0, x_inf]", failures, f"max error {worst:.2e}")


def test_criterion_4_oracle_equivalence(randomized, capsys):
    failures = []
    flagged, agree, loc_worst = 0, 0, 0.0
    for i, run in enumerate(randomized):
        reps = reports_of(run["results"])
        bad_method = "maslov_error" in run or any(not isinstance(run["results"].get(m), MorseReport) for m in ("target0", "targetplus"))
        if bad_method or "oracle_error" in run:
            flagged += 1
            continue
        oracle = run["oracle"]
        counts = {m: r.morse_index for m, r in reps.items()}
        if any(c != oracle.count for c in counts.values()):
            failures.append(f"system {i}: {counts} vs oracle {oracle.count}")
            continue
        agree += 1
        located = sorted(run["results"]["target0"].diagnostics.get("bottom_crossings", []))
        exact = sorted(oracle.extrapolated[: oracle.count])
        if len(located) != len(exact):
            failures.append(f"system {i}: {len(located)} bottom crossings for {len(exact)} eigenvalues")
            continue
        err = max((abs(a - b) for a, b in zip(located, exact)), default=0.0)
        loc_worst = max(loc_worst, err)
        if err > 1e-2:
            failures.append(f"system {i}: location error {err:.2e}")
    if flagged > 0.05 * len(randomized):
        failures.append(f"{flagged} flagged instances exceed 5%")
    n_sizes = sorted({run["system"].n for run in randomized})
    detail = f"{len(randomized)} systems n in {n_sizes}: {agree} agree, {flagged} flagged, {len(failures)} failures, max location error {loc_worst:.1e}"
    report(capsys, 4, "Maslov counts equal finite-difference counts on randomized systems", failures, detail)


def test_criterion_5_structural_invariants(flagship, randomized, capsys):
    failures = []
    checked, worst_lag, worst_uni = 0, 0.0, 0.0
    for i, run in enumerate(flagship + randomized):
        reps = reports_of(run.get("results", {}))
        for m, rep in reps.items():
            lag, uni = rep.diagnostics["lagrangian_defect"], rep.diagnostics["unitarity_defect"]
            worst_lag, worst_uni = max(worst_lag, lag), max(worst_uni, uni)
            if lag > DEFECT_LIMIT or uni > DEFECT_LIMIT:
                failures.append(f"run {i} {m}: defects {lag:.1e}, {uni:.1e}")
            if rep.box is not None and rep.box.loop_sum != 0:
                failures.append(f"run {i} {m}: loop sum {rep.box.loop_sum}")
        if "target0" in reps and "targetplus" in reps:
            checked += 1
            if reps["target0"].shelves["right"] != -reps["targetplus"].shelves["right"]:
                failures.append(f"run {i}: right shelves {reps['target0'].shelves['right']} vs {reps['targetplus'].shelves['right']}")
    detail = f"{checked} systems, max Lagrangian defect {worst_lag:.1e}, max unitarity defect {worst_uni:.1e}"
    report(capsys, 5, "loop sums 0, defects <= 1e-8, right-shelf identity between targets", failures, detail)


def test_criterion_6_hormander(flagship, randomized, capsys):
    failures = []
    rng = np.random.default_rng(5)
    n_quads = 12
    for k in range(n_quads):
        n = int(rng.integers(1, 4))
        l1, l2, ls, le = (random_lagrangian_frame(n, rng) for _ in range(4))
        s = hormander_index(l1, l2, ls, le).value
        w = np.zeros(n, dtype=int)
        w[0] = 1
        by_paths = hormander_by_paths(l1, l2, ls, le, windings=[None, w])
        if by_paths != [s, s]:
            failures.append(f"quadruple {k}: {s} vs paths {by_paths}")
        if hormander_index(l1, l2, ls, ls).value != 0 or hormander_by_paths(l1, l2, ls, ls, windings=[w]) != [0]:
            failures.append(f"quadruple {k}: closed path index nonzero")
    systems = 0
    for i, run in enumerate(flagship + randomized):
        sys_ = run["system"]
        a = asymptotic_data(sys_.model, run["lambda0"])
        q = q_form(dirichlet_frame(sys_.n), a.frame_decay, a.frame_grow)
        systems += 1
        if q.signature != sys_.n:
            failures.append(f"system {i}: sgn Q = {q.signature}, n = {sys_.n}")
    detail = f"{n_quads} quadruples on two paths, sgn Q checked on {systems} systems"
    report(capsys, 6, "Hormander index path-independent, closed path 0, sgn Q = n", failures, detail)


def test_criterion_7_lambda_inf(flagship, randomized, capsys):
    failures = []
    boxes = 0
    for i, run in enumerate(flagship + randomized):
        for m, rep in reports_of(run.get("results", {})).items():
            if rep.box is None:
                continue
            boxes += 1
            if rep.shelves["left"] != 0 or rep.box.left.conjugate_points:
                failures.append(f"run {i} {m}: left shelf {rep.shelves['left']}, {len(rep.box.left.conjugate_points)} crossings")
    # constructed coincidence: the Robin plane (1; -r) meets (1; -sqrt(1 + L)) at lambda = -L
    L = 4.0
    sys_ = HalfLineSystem(CoefficientModel.constant([[1.0]], [[1.0]], [[1.0]]), BoundaryCondition([[np.sqrt(1.0 + L)]], [[1.0]]))
    if check_boundary_inconjugate(sys_, L):
        failures.append("coincidence not detected")
    lam_inf, bumps = choose_lambda_inf(sys_, MorseOptions(lambda_inf=L))
    if not 1 <= bumps <= 3:
        failures.append(f"{bumps} bumps")
    if morse_via_target0(sys_, 0.0, MorseOptions(lambda_inf=L)).shelves["left"] != 0:
        failures.append("left shelf nonzero after bumping")
    detail = f"{boxes} boxes, coincidence resolved with {bumps} bump(s) at lambda_inf = {lam_inf:g}"
    report(capsys, 7, "left shelves empty, boundary inconjugacy within 3 bumps", failures, detail)
