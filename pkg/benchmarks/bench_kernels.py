"""Time the compiled kernels against their numpy twins.

Run from the repository root::

    python benchmarks/bench_kernels.py --res 128 --walks 20000

Each kernel is run on identical inputs with both backends; the script
prints wall times, the speedup and the largest disagreement.
"""

from __future__ import annotations

import argparse
import math
import time

import numpy as np

from crossext import harmonic, kernels
from crossext.geometry import BoundaryArcSet, make_disk


def _best(fn, repeat):
    best, out = math.inf, None
    for _ in range(repeat):
        t0 = time.perf_counter()
        out = fn()
        best = min(best, time.perf_counter() - t0)
    return best, out


def bench_sor(mods, res, repeat):
    D = make_disk(0, 1)
    g = harmonic.harmonic_measure_grid(D, BoundaryArcSet.centered(math.pi / 2, math.pi), res)
    E, W, N, S, diag, rhs, unknown, _ = g.system
    unk = np.ascontiguousarray(unknown, dtype=np.uint8)
    omega = 2.0 / (1.0 + math.sin(math.pi / max(unknown.shape)))
    u0 = np.where(unknown, 0.5, np.where(np.isnan(g.values), 0.0, g.values))
    rows = {}
    for name, mod in mods.items():
        def run(mod=mod):
            u = np.ascontiguousarray(u0.copy())
            sweeps, r = mod.sor_solve(u, E, W, N, S, diag, rhs, unk, omega, 1e-10, 200000)
            return u, sweeps
        rows[name] = _best(run, repeat)
    return rows, lambda a, b: float(np.abs(a[0] - b[0]).max())


def bench_wos(mods, walks, repeat):
    arcs = BoundaryArcSet.centered(math.pi / 2, math.pi)
    a_start, a_len = harmonic._arc_arrays(arcs)
    rows = {}
    for name, mod in mods.items():
        rows[name] = _best(lambda mod=mod: mod.wos_disk(0.3, 0.1, 0.0, 0.0, 1.0, 1e-4, 100000, 7, 0, walks,
                                                        a_start, a_len), repeat)
    return rows, lambda a, b: float(np.count_nonzero(a != b))


def bench_jacobi(mods, n, repeat):
    rng = np.random.default_rng(0)
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    a = np.ascontiguousarray((q * np.logspace(0, 20, n)) @ q.T)
    a = 0.5 * (a + a.T)
    rows = {}
    for name, mod in mods.items():
        rows[name] = _best(lambda mod=mod: mod.jacobi_eigh(a), repeat)
    return rows, lambda x, y: float(np.abs(np.sort(x[0]) / np.sort(y[0]) - 1).max())


def main(argv=None):
    ap = argparse.ArgumentParser(description=__doc__.splitlines()[0])
    ap.add_argument("--res", type=int, default=128, help="grid resolution for SOR")
    ap.add_argument("--walks", type=int, default=20000, help="walk count for walk-on-spheres")
    ap.add_argument("--dim", type=int, default=41, help="matrix size for Jacobi")
    ap.add_argument("--repeat", type=int, default=3)
    args = ap.parse_args(argv)
    mods = kernels.backends()
    if "cython" not in mods:
        print("compiled extension not available; timing the python backend only")
    print(f"{'kernel':<10}{'backend':<9}{'seconds':>10}{'speedup':>10}  agreement")
    for label, (rows, diff) in (("sor", bench_sor(mods, args.res, args.repeat)),
                                ("wos", bench_wos(mods, args.walks, args.repeat)),
                                ("jacobi", bench_jacobi(mods, args.dim, args.repeat))):
        t_py = rows["python"][0]
        for name, (t, out) in rows.items():
            agree = "" if name == "python" else f"{diff(out, rows['python'][1]):.3g}"
            print(f"{label:<10}{name:<9}{t:>10.4f}{t_py / t:>10.1f}  {agree}")


if __name__ == "__main__":
    main()
