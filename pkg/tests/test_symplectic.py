import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from maslovbox import symplectic as sp
from maslovbox.errors import DimensionError
from maslovbox.star_graph import neumann_kirchhoff


def _frame_of_bc(bc):
    """J alpha^*, the frame of the boundary plane ker alpha."""
    return sp.symplectic_matrix(bc.n) @ bc.alpha.conj().T


def test_symplectic_matrix_identities():
    for n in (1, 2, 4):
        J = sp.symplectic_matrix(n)
        assert np.allclose(J @ J, -np.eye(2 * n))
        assert np.allclose(J.T, -J)
        assert np.array_equal(sp.SymplecticForm(n).J, J)


def test_dirichlet_frame_is_lagrangian():
    for n in (1, 2, 3):
        assert sp.is_lagrangian(sp.dirichlet_frame(n))
        assert sp.is_lagrangian(sp.neumann_frame(n))


def test_non_lagrangian_line():
    f = np.array([[1.0], [1j]])
    J = sp.symplectic_matrix(1)
    assert np.isclose((f.conj().T @ J @ f)[0, 0], -2j)
    assert not sp.is_lagrangian(f)


def test_rank_deficient_frame_is_not_lagrangian():
    f = np.zeros((4, 2), dtype=complex)
    f[2, 0] = f[2, 1] = 1.0
    assert not sp.is_lagrangian(f)


def test_neumann_kirchhoff_frame_is_lagrangian():
    assert sp.is_lagrangian(_frame_of_bc(neumann_kirchhoff(3)))


def test_odd_row_count_is_rejected():
    with pytest.raises(DimensionError):
        sp.is_lagrangian(np.ones((3, 1)))


def test_lagrangian_frame_blocks_round_trip():
    rng = np.random.default_rng(0)
    F = sp.random_lagrangian_frame(3, rng)
    lf = sp.LagrangianFrame.from_blocks(F[:3], F[3:])
    assert lf.n == 3
    assert np.array_equal(lf.X, F[:3]) and np.array_equal(lf.Y, F[3:])


def test_distance_basics():
    rng = np.random.default_rng(1)
    F = sp.random_lagrangian_frame(3, rng)
    M = rng.standard_normal((3, 3)) + 1j * rng.standard_normal((3, 3))
    assert sp.grassmannian_distance(F, F) < 1e-12
    assert sp.grassmannian_distance(F, F @ M) < 1e-10
    assert sp.grassmannian_distance(sp.dirichlet_frame(1), sp.neumann_frame(1)) == pytest.approx(1.0)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_random_frames_are_lagrangian_and_projectors_idempotent(n, seed):
    rng = np.random.default_rng(seed)
    F = sp.random_lagrangian_frame(n, rng)
    assert sp.lagrangian_defect(F) < 1e-12
    Pr = sp.projector(F)
    assert np.allclose(Pr @ Pr, Pr, atol=1e-12)
    assert np.allclose(Pr, Pr.conj().T, atol=1e-12)
    assert np.isclose(np.trace(Pr).real, n)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_plane_unitary_round_trip(n, seed):
    rng = np.random.default_rng(seed)
    U = sp.random_unitary(n, rng)
    F = sp.frame_from_unitary(U)
    assert sp.is_lagrangian(F)
    assert np.allclose(sp.plane_unitary(F), U, atol=1e-12)


def test_pair_matrix_full_intersection():
    pm = sp.pair_matrix(sp.dirichlet_frame(2), sp.dirichlet_frame(2))
    assert np.allclose(pm.W, -np.eye(2))
    assert pm.unitarity_defect < 1e-14


def test_pair_matrix_transverse_scalar():
    pm = sp.pair_matrix(sp.dirichlet_frame(1), sp.neumann_frame(1))
    assert np.allclose(pm.W, [[1.0]])
    assert sp.distance_to_minus_one(pm.angles).min() > 1.0


@pytest.mark.parametrize("n", [2, 3, 5])
def test_pair_matrix_kirchhoff_against_scaled_identity(n):
    zeta, dzeta = 0.7, -1.3
    f1 = _frame_of_bc(neumann_kirchhoff(n))
    f2 = np.vstack([zeta * np.eye(n), dzeta * np.eye(n)]).astype(complex)
    q = (zeta - 1j * dzeta) / (zeta + 1j * dzeta)
    # boundary factor has +1 once and -1 (n-1) times; W = -(factor) q
    assert np.isclose(np.trace(sp.pair_matrix(f1, f2).W), (n - 2) * q)
    ev = sp.pair_matrix(f1, f2).eigenvalues
    near_q = np.isclose(ev, q, atol=1e-12).sum()
    near_mq = np.isclose(ev, -q, atol=1e-12).sum()
    assert (near_q, near_mq) == (n - 1, 1)


@settings(max_examples=40, deadline=None)
@given(st.integers(1, 4), st.integers(0, 2**32 - 1))
def test_pair_matrix_is_unitary_and_frame_invariant(n, seed):
    rng = np.random.default_rng(seed)
    f1, f2 = sp.random_lagrangian_frame(n, rng), sp.random_lagrangian_frame(n, rng)
    M = rng.standard_normal((n, n)) + 1j * rng.standard_normal((n, n)) + 3 * np.eye(n)
    pm = sp.pair_matrix(f1, f2)
    assert pm.unitarity_defect < 1e-10
    assert np.allclose(np.abs(pm.eigenvalues), 1.0)
    assert np.allclose(sp.pair_matrix(f1 @ M, f2).W, pm.W, atol=1e-8)


def test_pair_matrices_batch_matches_single():
    rng = np.random.default_rng(2)
    f1 = np.stack([sp.random_lagrangian_frame(2, rng) for _ in range(5)])
    f2 = np.stack([sp.random_lagrangian_frame(2, rng) for _ in range(5)])
    W = sp.pair_matrices(f1, f2)
    for k in range(5):
        assert np.allclose(W[k], sp.pair_matrix(f1[k], f2[k]).W, atol=1e-12)


def test_intersection_dimension_extremes():
    rng = np.random.default_rng(3)
    F = sp.random_lagrangian_frame(3, rng)
    assert sp.intersection_dimension(F, F) == 3
    assert sp.intersection_dimension(sp.dirichlet_frame(2), sp.neumann_frame(2)) == 0


@pytest.mark.parametrize("k", [0, 1, 2, 3])
def test_intersection_dimension_shared_columns(k):
    # both planes are spanned by k shared columns plus different completions;
    # the brute-force oracle is the null space of the 2n x 2n concatenation
    n = 3
    rng = np.random.default_rng(10 + k)
    U = sp.random_unitary(n, rng)
    f1 = sp.frame_from_unitary(U)
    # U2 = U1 G with G having eigenvalue 1 exactly k times
    d = np.ones(n, dtype=complex)
    d[k:] = np.exp(1j * rng.uniform(0.5, 2.5, n - k))
    Q = sp.random_unitary(n, rng)
    f2 = sp.frame_from_unitary(U @ Q @ np.diag(d) @ Q.conj().T)
    s = np.linalg.svd(np.hstack([f1, f2]), compute_uv=False)
    brute = int(np.sum(s < 1e-9 * s[0]))
    assert brute == k
    assert sp.intersection_dimension(f1, f2) == k


def test_wrap_angle_range():
    th = np.linspace(-20, 20, 1001)
    w = sp.wrap_angle(th)
    assert np.all(w > -np.pi - 1e-12) and np.all(w <= np.pi + 1e-12)
    assert np.allclose(np.exp(1j * w), np.exp(1j * th))
