import math
import os
import subprocess
import sys

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crossext import harmonic, kernels
from crossext.geometry import BoundaryArcSet, make_disk

BACKENDS = kernels.backends()
needs_cython = pytest.mark.skipif("cython" not in BACKENDS, reason="compiled extension not built")


def test_backend_is_reported():
    assert kernels.BACKEND in ("cython", "python")
    assert "python" in BACKENDS


def test_pure_python_env_forces_fallback():
    code = "from crossext import kernels; print(kernels.BACKEND)"
    env = dict(os.environ, CROSSEXT_PURE_PYTHON="1")
    out = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
    assert out.stdout.strip() == "python"


@needs_cython
@given(seed=st.integers(0, 2**63 - 1), first=st.integers(0, 10**6))
@settings(max_examples=25, deadline=None)
def test_counter_uniform_backends_agree(seed, first):
    walks = np.arange(first, first + 16, dtype=np.int64)
    steps = np.arange(16, dtype=np.int64)
    a = BACKENDS["cython"].counter_uniform(seed, walks, steps)
    b = BACKENDS["python"].counter_uniform(seed, walks, steps)
    np.testing.assert_array_equal(a, b)
    assert np.all((a >= 0) & (a < 1))


@needs_cython
def test_sor_backends_agree(disk, half_arcs):
    g = harmonic.harmonic_measure_grid(disk, half_arcs, 64)
    E, W, N, S, diag, rhs, unknown, _ = g.system
    unk = np.ascontiguousarray(unknown, dtype=np.uint8)
    u0 = np.where(unknown, 0.5, np.nan_to_num(g.values, nan=0.0))
    out = {}
    for name, mod in BACKENDS.items():
        u = np.ascontiguousarray(u0.copy())
        sweeps, res = mod.sor_solve(u, E, W, N, S, diag, rhs, unk, 1.9, 1e-11, 100000)
        assert res <= 1e-11
        out[name] = (u, sweeps)
    assert out["cython"][1] == out["python"][1]
    assert np.abs(out["cython"][0] - out["python"][0]).max() < 1e-12


@needs_cython
@pytest.mark.parametrize("z", [0.0, 0.3 + 0.4j, -0.9])
def test_wos_disk_backends_identical(z):
    a_start, a_len = harmonic._arc_arrays(BoundaryArcSet.from_pairs([(0.0, math.pi)]))
    runs = [mod.wos_disk(z.real if isinstance(z, complex) else z, complex(z).imag, 0.0, 0.0, 1.0, 1e-4,
                         100000, 11, 0, 3000, a_start, a_len) for mod in BACKENDS.values()]
    np.testing.assert_array_equal(runs[0], runs[1])


@needs_cython
def test_wos_polyline_backends_identical():
    from crossext.geometry import make_ellipse

    E = make_ellipse(2.0, 1.0)
    pl = harmonic._polyline(E)
    a_start, a_len = harmonic._arc_arrays(BoundaryArcSet.from_pairs([(0.0, math.pi)]))
    runs = []
    for mod in BACKENDS.values():
        runs.append(mod.wos_polyline(0.3, 0.2, pl["vx"], pl["vy"], pl["vt"], pl["x_lo"], pl["y_lo"], pl["hb"],
                                     pl["nbx"], pl["nby"], pl["start"], pl["segs"], pl["dlow"], pl["dup"],
                                     pl["near"], 1e-4, 100000, 5, 0, 2000, a_start, a_len))
    np.testing.assert_array_equal(runs[0], runs[1])


@pytest.mark.parametrize("name", sorted(BACKENDS))
def test_jacobi_graded_spectrum(name):
    mpmath = pytest.importorskip("mpmath")
    rng = np.random.default_rng(1)
    n = 16
    q, _ = np.linalg.qr(rng.standard_normal((n, n)))
    d = np.sqrt(np.logspace(0, 18, n))
    a = np.ascontiguousarray(d[:, None] * (np.eye(n) + 1e-2 * (q + q.T)) * d[None, :])
    vals, vecs, _ = BACKENDS[name].jacobi_eigh(a)
    with mpmath.workdps(50):
        ref, _ = mpmath.eigsy(mpmath.matrix(a.tolist()))
        ref = np.sort(np.array([float(x) for x in ref]))
    np.testing.assert_allclose(np.sort(vals), ref, rtol=1e-12)
    np.testing.assert_allclose(vecs.T @ vecs, np.eye(n), atol=1e-12)


def test_wos_estimate_independent_of_workers(disk, half_arcs):
    cfg = harmonic.WosConfig(sample_count=20000, seed=3, chunk=4096)
    a = harmonic.harmonic_measure_wos(0.2 + 0.1j, disk, half_arcs, cfg, workers=1)
    b = harmonic.harmonic_measure_wos(0.2 + 0.1j, disk, half_arcs, cfg, workers=4)
    assert a == b
