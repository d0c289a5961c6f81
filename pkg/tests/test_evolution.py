import numpy as np
import pytest

from maslovbox.evolution import (
    IntegratorOptions,
    TruncationConfig,
    evolve_boundary_frame,
    evolve_decaying_frame,
    integrate_frame,
    monotonicity_matrices,
    settle_truncation,
)
from maslovbox.asymptotics import asymptotic_data
from maslovbox.problem import BoundaryCondition, CoefficientModel, HalfLineSystem
from maslovbox.star_graph import StarGraphNLS, build_system
from maslovbox.symplectic import dirichlet_frame, grassmannian_distance, pair_matrix

from random_systems import random_system


def _scalar(bc, V=lambda x: np.ones_like(x)):
    """-phi'' + V phi = lambda phi with V -> 1."""
    model = CoefficientModel(
        n=1,
        P=lambda xs: np.ones(np.shape(xs) + (1, 1), dtype=complex),
        V=lambda xs: V(np.asarray(xs, dtype=float))[..., None, None].astype(complex),
        Q=lambda xs: np.ones(np.shape(xs) + (1, 1), dtype=complex),
        P_plus=np.eye(1),
        V_plus=np.eye(1),
        Q_plus=np.eye(1),
        eta=2.0,
        theta_P=1.0,
        theta_Q=1.0,
        C_V=1.0,
        decay_C=8.0,
        constant_P=True,
    )
    return HalfLineSystem(model, bc)


def _direction_error(frame, v):
    """Distance of vector ``v`` to the span of an orthonormal ``frame``."""
    v = np.asarray(v, dtype=complex).reshape(-1)
    v = v / np.linalg.norm(v)
    return float(np.linalg.norm(v - frame @ (frame.conj().T @ v)))


def test_neumann_start_matches_cosh():
    path = evolve_boundary_frame(_scalar(BoundaryCondition.neumann(1)), 0.0, (0.0, 6.0))
    for x, F in zip(path.grid, path.frames):
        assert _direction_error(F, [np.cosh(x), np.sinh(x)]) < 1e-6


def test_dirichlet_start_matches_sinh():
    path = evolve_boundary_frame(_scalar(BoundaryCondition.dirichlet(1)), 0.0, (0.0, 6.0))
    for x, F in zip(path.grid, path.frames):
        assert _direction_error(F, [np.sinh(x), np.cosh(x)]) < 1e-6


def test_zero_span_returns_initial_frame():
    sys_ = build_system(StarGraphNLS(3, 1.0))
    path = evolve_boundary_frame(sys_, 0.0, (0.0, 0.0))
    assert path.frames.shape[0] == 1
    assert grassmannian_distance(path.frames[0], sys_.initial_frame()) < 1e-14


def test_dense_output_matches_nodes_and_closed_form():
    path = evolve_boundary_frame(_scalar(BoundaryCondition.neumann(1)), 0.0, (0.0, 3.0))
    xs = np.linspace(0.0, 3.0, 17)
    for x, F in zip(xs, path.frame_at(xs)):
        assert _direction_error(F, [np.cosh(x), np.sinh(x)]) < 1e-6


@pytest.mark.parametrize("n,p", [(2, 1.0), (3, 0.5), (5, 2.0)])
def test_star_graph_decaying_plane_contains_zero_mode(n, p):
    cfg = StarGraphNLS(n, p)
    sys_ = build_system(cfg)
    trunc = settle_truncation(sys_, [0.0])
    path = evolve_decaying_frame(sys_, 0.0, trunc)
    one = np.ones(n)
    worst = max(
        _direction_error(F, np.concatenate([cfg.ds(x) * one, cfg.d2s(x) * one]))
        for x, F in zip(path.grid, path.frames)
        if x < trunc.x_inf - 1.0  # near the cut s' is below the settle tolerance
    )
    assert worst <= 1e-6


def test_constant_system_decaying_plane_is_stationary():
    m = CoefficientModel.constant(np.diag([1.0, 2.0]), np.diag([3.0, 1.0]), np.eye(2))
    sys_ = HalfLineSystem(m, BoundaryCondition.dirichlet(2))
    path = evolve_decaying_frame(sys_, -0.5, 10.0)
    target = asymptotic_data(m, -0.5).frame_decay
    assert max(grassmannian_distance(F, target) for F in path.frames) <= 1e-8


def test_reflectionless_decaying_solution_is_sech():
    sys_ = _scalar(BoundaryCondition.neumann(1), V=lambda x: 1 - 2 / np.cosh(x) ** 2)
    path = evolve_decaying_frame(sys_, 0.0, 20.0)
    F0 = path.frames[0]
    assert path.grid[0] == 0.0
    assert _direction_error(F0, [1.0, 0.0]) < 1e-6
    for x, F in zip(path.grid[::20], path.frames[::20]):
        assert _direction_error(F, [1 / np.cosh(x), -np.tanh(x) / np.cosh(x)]) < 1e-6


def test_frames_stay_lagrangian_on_random_systems():
    rng = np.random.default_rng(3)
    for _ in range(8):
        sys_ = random_system(rng)
        lam = sys_.kappa - 1.0
        fwd = evolve_boundary_frame(sys_, lam, (0.0, 8.0))
        bwd = evolve_decaying_frame(sys_, lam, 12.0)
        assert fwd.max_lagrangian_defect <= 1e-8
        assert bwd.max_lagrangian_defect <= 1e-8
        assert np.all(np.diff(bwd.grid) > 0) and bwd.direction == "backward"


def test_step_refinement_tightens_with_rtol():
    sys_ = build_system(StarGraphNLS(2, 1.0))
    loose = evolve_boundary_frame(sys_, -2.0, (0.0, 5.0), IntegratorOptions(rtol=1e-6, angle_cap=0.5, h_max=1.0))
    tight = evolve_boundary_frame(sys_, -2.0, (0.0, 5.0))
    assert loose.xs.size < tight.xs.size
    assert grassmannian_distance(loose.frames[-1], tight.frames[-1]) < 1e-4


def test_forward_then_backward_round_trip():
    rng = np.random.default_rng(9)
    sys_ = random_system(rng, n=2)
    fwd = evolve_boundary_frame(sys_, -0.3, (0.0, 2.0))
    back = integrate_frame(sys_, -0.3, fwd.frames[-1], 2.0, 0.0)
    assert grassmannian_distance(back.frames[0], sys_.initial_frame()) < 1e-8


def test_monotonicity_matrix_scalar_closed_form():
    # X2 = exp(-(y - x)) / sqrt(2) normalised at x: -int_x^inf X2^2 dy = -1/4
    m = CoefficientModel.constant([[1.0]], [[1.0]], [[1.0]])
    sys_ = HalfLineSystem(m, BoundaryCondition.dirichlet(1))
    errs = []
    for h in (0.01, 0.005):
        path = evolve_decaying_frame(sys_, 0.0, 6.0, IntegratorOptions(h_max=h))
        errs.append(np.abs(monotonicity_matrices(path)[:, 0, 0] + 0.25).max())
    # trapezoid rule: second order in the node spacing
    assert errs[0] < 1e-5
    assert 3.5 < errs[0] / errs[1] < 4.5


def test_monotonicity_matrices_negative_definite():
    sys_ = build_system(StarGraphNLS(3, 1.0))
    path = evolve_decaying_frame(sys_, -0.5, settle_truncation(sys_, [-0.5]))
    M = monotonicity_matrices(path)
    assert np.all(np.linalg.eigvalsh(M) < 0)


def test_monotonicity_requires_decaying_path():
    sys_ = build_system(StarGraphNLS(2, 1.0))
    with pytest.raises(ValueError):
        monotonicity_matrices(evolve_boundary_frame(sys_, 0.0, (0.0, 1.0)))


def test_dirichlet_target_rotates_clockwise_in_x():
    # eigenvalue angles of W(l1(x), l_D) pass -1 clockwise along x; between
    # crossings the angle may move either way
    sys_ = _scalar(BoundaryCondition.neumann(1), V=lambda x: 1 - 6 / np.cosh(x) ** 2)
    path = evolve_boundary_frame(sys_, -1.0, (0.0, 4.0))
    th = np.unwrap([np.angle(pair_matrix(F, dirichlet_frame(1)).eigenvalues[0]) for F in path.frames])
    near = np.abs(np.angle(np.exp(1j * th[:-1]) * -1)) < 0.3
    assert near.any()
    assert np.all(np.diff(th)[near] < 0)
    assert th[-1] < -np.pi < th[0]


def test_settle_point_from_declared_decay():
    m = CoefficientModel.constant([[1.0]], [[1.0]], [[1.0]])
    m = CoefficientModel(**{**m.__dict__, "decay_C": 1.0, "eta": 1.0})
    sys_ = HalfLineSystem(m, BoundaryCondition.dirichlet(1))
    t = settle_truncation(sys_, [0.0], settle_tol=1e-8, probe=False)
    assert t.x_inf == pytest.approx(-np.log(1e-8))
    assert isinstance(t, TruncationConfig)


def test_constant_coefficients_accept_minimal_cut():
    m = CoefficientModel.constant(np.eye(2), np.eye(2), np.eye(2))
    t = settle_truncation(HalfLineSystem(m, BoundaryCondition.dirichlet(2)), [-1.0, 0.0])
    assert t.x_inf == 1.0 and t.probe_change == 0.0


def test_faster_profile_settles_sooner():
    x_fast = settle_truncation(build_system(StarGraphNLS(2, 1.0)), [-3.0, 0.0]).x_inf
    x_slow = settle_truncation(build_system(StarGraphNLS(2, 0.5)), [-3.0, 0.0]).x_inf
    assert x_fast < x_slow


def test_frame_path_csv(tmp_path):
    path = evolve_boundary_frame(build_system(StarGraphNLS(2, 1.0)), 0.0, (0.0, 1.0))
    out = tmp_path / "frames.csv"
    path.to_csv(out)
    data = np.loadtxt(out, delimiter=",", skiprows=1)
    assert data.shape == (path.grid.size, 2 + 2 * 4 * 2)
    assert np.allclose(data[:, 0], path.grid)
