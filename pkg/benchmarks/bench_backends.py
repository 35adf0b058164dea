"""Time the numba and numpy kernel paths on the same inputs.

Usage: python3 benchmarks/bench_backends.py [--degree 4] [--n 32] [--points 20000] [--repeat 5]

Each kernel is run once per backend before timing so numba compilation is
not counted.  Prints the best time per kernel and the speed-up.
"""

import argparse
import time

import numpy as np

from igadr import _accel, kernels
from igadr.assembly import assemble_mass, assemble_stiffness
from igadr.geometry import Mesh, disk


def best_of(func, repeat):
    func()
    times = []
    for _ in range(repeat):
        t0 = time.perf_counter()
        func()
        times.append(time.perf_counter() - t0)
    return min(times)


def cases(mesh, n_points, rng):
    sp, g = mesh.space, mesh.geometry
    xi, eta = rng.random(n_points), rng.random(n_points)
    coeffs = rng.random((2, mesh.ndof))
    basis_args = (sp.kv_u.knots, sp.kv_v.knots, mesh.p, mesh.q, mesh.mb, sp.w_flat)
    geo_args = g.kernel_args() + (g.P_flat,)
    X, _ = kernels.surface_eval(*geo_args, xi, eta)
    seeds = np.full((n_points, 2), 0.5)
    return {
        "eval_field": lambda: kernels.eval_field(*basis_args, coeffs, xi, eta),
        "surface_eval": lambda: kernels.surface_eval(*geo_args, xi, eta),
        "invert_points": lambda: kernels.invert_points(*geo_args, X, seeds, 1e-12, 50, 10),
        "assemble_mass": lambda: assemble_mass(mesh),
        "assemble_stiffness": lambda: assemble_stiffness(mesh),
    }


def main():
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--degree", type=int, default=4)
    ap.add_argument("--n", type=int, default=32)
    ap.add_argument("--points", type=int, default=20000)
    ap.add_argument("--repeat", type=int, default=5)
    args = ap.parse_args()

    if not _accel.HAVE_NUMBA:
        raise SystemExit("numba is not installed; nothing to compare")
    mesh = Mesh.from_geometry(disk((0.0, 0.0), 1.0), args.degree, args.n)
    rng = np.random.default_rng(0)
    jobs = cases(mesh, args.points, rng)
    timings = {}
    previous = _accel.backend()
    try:
        for name in ("numba", "numpy"):
            _accel.set_backend(name)
            timings[name] = {k: best_of(f, args.repeat) for k, f in jobs.items()}
    finally:
        _accel.set_backend(previous)

    print(f"disk, p={args.degree}, {args.n}x{args.n} elements, ndof {mesh.ndof}, "
          f"{args.points} points, threads {_accel.get_num_threads()}")
    print(f"{'kernel':<20} {'numba [s]':>11} {'numpy [s]':>11} {'speed-up':>9}")
    for k in jobs:
        a, b = timings["numba"][k], timings["numpy"][k]
        print(f"{k:<20} {a:>11.4f} {b:>11.4f} {b / a:>9.1f}")


if __name__ == "__main__":
    main()
