import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.linalg import expm

from maslovbox import kernels
from maslovbox._accel import backend


def _rand_complex(rng, *shape):
    return rng.standard_normal(shape) + 1j * rng.standard_normal(shape)


def test_orthonormalize_both_versions_agree():
    rng = np.random.default_rng(0)
    Y = _rand_complex(rng, 6, 3)
    for f in (kernels._orthonormalize_loops, kernels._orthonormalize_numpy):
        Q, R = f(Y)
        assert np.allclose(Q.conj().T @ Q, np.eye(3), atol=1e-13)
        assert np.allclose(Q @ R, Y, atol=1e-12)
        assert np.allclose(np.tril(R, -1), 0)
        assert np.all(np.diag(R).real > 0) and np.allclose(np.diag(R).imag, 0)
    Q1, R1 = kernels._orthonormalize_loops(Y)
    Q2, R2 = kernels._orthonormalize_numpy(Y)
    assert np.allclose(Q1, Q2, atol=1e-12) and np.allclose(R1, R2, atol=1e-12)


def test_dopri_step_matches_matrix_exponential():
    rng = np.random.default_rng(1)
    M = 0.5 * _rand_complex(rng, 4, 4)
    A = np.ascontiguousarray(np.broadcast_to(M, (6, 4, 4)))
    X = _rand_complex(rng, 4, 2)
    h = 0.05
    y, err = kernels.dopri_step(A, h, X)
    assert np.allclose(y, expm(h * M) @ X, atol=1e-10)
    assert err < 1e-8


def test_frame_sweep_tracks_constant_generator():
    M = np.array([[0.0, 1.0], [1.0, 0.0]], dtype=complex)  # phi'' = phi
    hs = np.full(40, 0.05)
    A = np.ascontiguousarray(np.broadcast_to(M, (40, 6, 2, 2)))
    X0 = np.array([[1.0], [0.0]], dtype=complex)
    frames, rfac, errs, moves = kernels.frame_sweep(A, hs, X0)
    x = 2.0
    exact = np.array([np.cosh(x), np.sinh(x)])
    exact /= np.linalg.norm(exact)
    assert abs(abs(np.vdot(frames[-1][:, 0], exact)) - 1) < 1e-10
    # the product of the R factors recovers the norm of the raw solution
    assert np.isclose(np.prod([r[0, 0].real for r in rfac]), np.hypot(np.cosh(x), np.sinh(x)), rtol=1e-9)
    assert errs.max() < 1e-8 and moves.max() < 0.1


def test_wrap_range():
    for d in np.linspace(-20, 20, 401):
        w = kernels._wrap(d)
        assert -np.pi < w <= np.pi
        assert np.isclose(np.mod(w - d, 2 * np.pi) % (2 * np.pi), 0, atol=1e-12) or np.isclose(np.mod(w - d, 2 * np.pi), 2 * np.pi)


@settings(max_examples=60, deadline=None)
@given(
    st.integers(1, 5),
    st.lists(st.floats(-0.1, 0.1), min_size=5, max_size=5),
    st.lists(st.integers(-2, 2), min_size=5, max_size=5),
    st.floats(-0.2, 0.2),
    st.randoms(use_true_random=False),
)
def test_match_step_recovers_small_moves_under_permutation(n, jitter, turns, shift, rnd):
    # tracks at least ~1 rad apart on the circle, at arbitrary unwrapped levels
    prev = 2 * np.pi * np.arange(n) / n + np.array(jitter[:n]) + 2 * np.pi * np.array(turns[:n]) + 0.3
    moved = prev + shift
    perm = list(range(n))
    rnd.shuffle(perm)
    wrapped = np.angle(np.exp(1j * moved))[perm]
    out, worst = kernels.match_step(prev, wrapped)
    assert np.allclose(out, moved, atol=1e-12)
    assert worst <= abs(shift) + 1e-12


def test_unwrap_tracks_follows_a_full_turn():
    t = np.linspace(0, 1, 200)
    theta_true = np.stack([4 * np.pi * t, 4 * np.pi * t + np.pi - 0.2], axis=1)
    phi = np.angle(np.exp(1j * theta_true))
    theta, disp = kernels.unwrap_tracks(np.ascontiguousarray(phi), np.ascontiguousarray(theta_true[0]))
    assert np.allclose(theta, theta_true, atol=1e-12)
    assert disp.max() < 0.1


def test_backend_flag_selects_numpy_in_subprocess():
    code = (
        "import numpy as np\n"
        "from maslovbox._accel import backend\n"
        "from maslovbox import kernels\n"
        "rng=np.random.default_rng(3)\n"
        "M=rng.standard_normal((4,4))+1j*rng.standard_normal((4,4))\n"
        "A=np.ascontiguousarray(np.broadcast_to(0.3*M,(25,6,4,4)))\n"
        "X0=np.linalg.qr(rng.standard_normal((4,2))+0j)[0]\n"
        "f,r,e,m=kernels.frame_sweep(A,np.full(25,0.04),np.ascontiguousarray(X0))\n"
        "print(backend()); print(repr(float(np.abs(f[-1]).sum())))\n"
    )
    outs = {}
    for flag in ("1", "0"):
        env = dict(os.environ, MASLOVBOX_PURE_NUMPY=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        name, val = res.stdout.split()
        outs[name] = float(val)
    assert set(outs) == {"numpy", "numba"}
    assert abs(outs["numpy"] - outs["numba"]) < 1e-10


def test_backend_name():
    assert backend() in ("numba", "numpy")
