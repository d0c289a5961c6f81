import numpy as np
import pytest
from scipy import linalg as sla

from maslovbox.config import build_problem
from maslovbox.errors import AmbiguousCountError
from maslovbox.fd_oracle import (
    _eigs_upto,
    count_below,
    default_cells,
    default_length,
    discretize,
    eigenvalues_below,
    fd_count,
)
from maslovbox.morse import morse_via_target0
from maslovbox.problem import BoundaryCondition, CoefficientModel, HalfLineSystem
from maslovbox.star_graph import StarGraphNLS, build_system

from random_systems import random_system


def poschl_teller(depth, boundary):
    return build_problem({"model": "sech_potential", "n": 1, "V_plus": 1, "depth": depth, "width": 1, "boundary": boundary})


def test_poschl_teller_neumann_bound_state():
    res = fd_count(poschl_teller(6.0, "neumann"), 0.0, L=30.0, N=4000)
    assert res.count == 1
    assert abs(res.eigenvalues[0] - (-3.0)) < 1e-3
    assert abs(res.extrapolated[0] - (-3.0)) < 1e-5


def test_poschl_teller_dirichlet_has_no_negative_state():
    assert count_below(poschl_teller(2.0, "dirichlet"), 0.0) == 0


def test_odd_states_survive_dirichlet():
    # depth 12: states -8, -3, 0 (+1 offset); Dirichlet keeps the odd one at -3
    assert eigenvalues_below(poschl_teller(12.0, "dirichlet"), -0.5) == pytest.approx([-3.0], abs=1e-4)


def test_positive_constant_operator():
    m = CoefficientModel.constant(np.diag([1.0, 2.0]), np.diag([1.0, 3.0]), np.eye(2))
    for bc in (BoundaryCondition.dirichlet(2), BoundaryCondition.neumann(2), BoundaryCondition(0.1 * np.eye(2), -np.eye(2))):
        assert count_below(HalfLineSystem(m, bc), 0.0) == 0


def test_star_graph_ground_state_matches_bottom_shelf():
    sys_ = build_system(StarGraphNLS(3, 1.0))
    ev = eigenvalues_below(sys_, -0.05)
    assert len(ev) == 1 and ev[0] < 0
    rep = morse_via_target0(sys_, 0.0)
    assert rep.diagnostics["bottom_crossings"] == pytest.approx(ev, abs=1e-2)
    assert ev[0] == pytest.approx(-3.0, abs=1e-4)  # symmetric mode: Neumann Poschl-Teller


def test_nothing_below_lambda_inf():
    sys_ = build_system(StarGraphNLS(2, 1.0))
    lam_inf = morse_via_target0(sys_, 0.0).lambda_inf
    assert eigenvalues_below(sys_, -lam_inf) == []


def test_eigenvalue_at_lambda0_is_ambiguous():
    with pytest.raises(AmbiguousCountError):
        fd_count(build_system(StarGraphNLS(2, 1.0)), 0.0)


def test_banded_solver_matches_dense_pencil():
    rng = np.random.default_rng(0)
    for _ in range(5):
        sys_ = random_system(rng)
        disc = discretize(sys_, 6.0, 60)
        A, M = disc.dense()
        assert np.allclose(A, A.conj().T) and np.all(np.linalg.eigvalsh(M) > 0)
        dense = sla.eigh(A, M, eigvals_only=True)
        upper = float(dense[3])
        banded = _eigs_upto(disc, upper + 1e-9)
        assert np.allclose(banded, dense[dense <= upper + 1e-9], atol=1e-9 * (1 + np.abs(dense).max()))


def test_dirichlet_part_is_removed_at_the_vertex():
    sys_ = build_system(StarGraphNLS(3, 1.0))
    disc = discretize(sys_, 5.0, 50)
    # Kirchhoff: continuity leaves a one-dimensional vertex space
    assert disc.diag[0].shape == (1, 1)
    assert np.allclose(disc.basis0[:, 0], np.ones(3) / np.sqrt(3)) or np.allclose(disc.basis0[:, 0], -np.ones(3) / np.sqrt(3))
    assert disc.size == 1 + 3 * 49


def test_second_order_convergence():
    sys_ = poschl_teller(6.0, "neumann")
    errs = [abs(_eigs_upto(discretize(sys_, 30.0, N), 0.0)[0] + 3.0) for N in (500, 1000, 2000)]
    assert 3.5 < errs[0] / errs[1] < 4.5
    assert 3.5 < errs[1] / errs[2] < 4.5


def test_default_resolution():
    sys_ = poschl_teller(6.0, "neumann")
    L = default_length(sys_, 0.0)
    assert L >= 25.0
    assert default_cells(sys_, L) >= L / 0.02


def test_random_system_counts_are_resolution_stable():
    rng = np.random.default_rng(1)
    sys_ = random_system(rng)
    lam0 = sys_.kappa - 0.4
    a = fd_count(sys_, lam0)
    b = fd_count(sys_, lam0, L=1.5 * a.L, N=3 * a.N)
    assert a.count == b.count
    assert a.margin < a.nearest_gap
