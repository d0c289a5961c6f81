"""Compare the numba kernels with the pure-numpy fallback.

Each backend runs in its own interpreter because the choice is made at import
time from ``MASLOVBOX_PURE_NUMPY``.  Numba compilation happens in a warm-up
call and is excluded from the timings.

    python benchmarks/bench_kernels.py --repeat 5
"""

import argparse
import json
import os
import subprocess
import sys
import time

import numpy as np


def _best_of(fn, repeat):
    fn()  # warm-up (compiles under numba)
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        fn()
        times.append(time.perf_counter() - t0)
    return min(times)


def _worker(repeat, steps):
    from maslovbox import kernels
    from maslovbox._accel import backend
    from maslovbox.morse import morse_via_target0
    from maslovbox.star_graph import StarGraphNLS, build_system

    rng = np.random.default_rng(0)
    out = {"backend": backend()}
    for n in (1, 3, 5):
        N = 2 * n
        A = 0.1 * (rng.standard_normal((steps, 6, N, N)) + 1j * rng.standard_normal((steps, 6, N, N)))
        hs = np.full(steps, 0.01)
        X0 = np.linalg.qr(rng.standard_normal((N, n)) + 0j)[0]
        out[f"frame_sweep n={n}"] = _best_of(lambda: kernels.frame_sweep(A, hs, X0), repeat)

        ts = np.linspace(0.0, 1.0, steps)
        rates = rng.uniform(-3.0, 3.0, n)
        theta = 2 * np.pi * rates[None, :] * ts[:, None] + rng.uniform(-np.pi, np.pi, n)
        phi = np.angle(np.exp(1j * theta))
        out[f"unwrap_tracks n={n}"] = _best_of(lambda: kernels.unwrap_tracks(phi, theta[0]), repeat)

    system = build_system(StarGraphNLS(3, 1.0))
    out["morse target0 star graph n=3"] = _best_of(lambda: morse_via_target0(system, 0.0), max(1, repeat // 2))
    return out


def _run_backend(pure_numpy, repeat, steps):
    env = dict(os.environ)
    env["MASLOVBOX_PURE_NUMPY"] = "1" if pure_numpy else "0"
    cmd = [sys.executable, __file__, "--worker", "--repeat", str(repeat), "--steps", str(steps)]
    proc = subprocess.run(cmd, env=env, capture_output=True, text=True, check=True)
    return json.loads(proc.stdout.strip().splitlines()[-1])


def main():
    parser = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    parser.add_argument("--repeat", type=int, default=5)
    parser.add_argument("--steps", type=int, default=2000, help="steps per kernel call")
    parser.add_argument("--worker", action="store_true", help=argparse.SUPPRESS)
    args = parser.parse_args()

    if args.worker:
        print(json.dumps(_worker(args.repeat, args.steps)))
        return

    fast = _run_backend(False, args.repeat, args.steps)
    slow = _run_backend(True, args.repeat, args.steps)
    if fast["backend"] != "numba":
        print("numba is not importable; both columns use numpy", file=sys.stderr)
    width = max(len(k) for k in fast if k != "backend")
    print(f"{'case':<{width}}  {fast['backend']:>10}  {slow['backend']:>10}  speedup")
    for key in fast:
        if key == "backend":
            continue
        print(f"{key:<{width}}  {fast[key]:10.4f}  {slow[key]:10.4f}  {slow[key] / fast[key]:6.1f}x")


if __name__ == "__main__":
    main()
