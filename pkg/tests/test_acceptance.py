"""Acceptance suite: one test per criterion, each printing a PASS/FAIL line.

Lines are also collected and repeated in the pytest terminal summary.
"""

import math
import time

import numpy as np
import pytest

from crossext import bergman
from crossext.cross import (CrossSpec, FactorSpec, envelope_connected, gluing_delta, gluing_equation_residual,
                            gonchar_bound_check)
from crossext.extend import (catalog_function, extend_mixed_cross, max_principle_check,
                             polar_samples, verify_boundary_extension)
from crossext.geometry import (BoundaryArcSet, collar_gradient_gap, make_disk, make_ellipse, perturbed_ball,
                               slice_domain, smoothed_collar, tangent_ball_radius)
from crossext.harmonic import WosConfig, harmonic_measure_disk_arc, harmonic_measure_grid, harmonic_measure_wos
from crossext.pshmeasure import (lipschitz_boundary_bound, relative_extremal_interior, rescale_identity_residual,
                                 tube_measure, tube_set)

D = make_disk(0, 1)
HALF = BoundaryArcSet.from_pairs([(0.0, math.pi)])
THREE_Q = BoundaryArcSet.centered(0, 1.5 * math.pi)
MIXED = CrossSpec((FactorSpec(D, make_disk(0, 0.5)), FactorSpec(D, BoundaryArcSet.centered(0, 1.5 * math.pi))))
BOUNDARY = CrossSpec((FactorSpec(D, THREE_Q),) * 2)
GONCHAR_FUNCTIONS = ("exp-sum", "rational-pole", "polynomial")


@pytest.fixture(scope="module")
def half_512():
    return harmonic_measure_grid(D, HALF, 512)


@pytest.fixture(scope="module")
def mixed_fields():
    return {name: extend_mixed_cross(MIXED, catalog_function(name), K=40) for name in GONCHAR_FUNCTIONS}


def test_criterion_01_three_ways(verdict):
    t0 = time.perf_counter()
    grid_err, wos_err, closed_gap, n = 0.0, 0.0, 0.0, 0
    rng = np.random.default_rng(20)
    pts = np.sqrt(rng.uniform(0, 0.9 ** 2, 20)) * np.exp(1j * rng.uniform(0, 2 * math.pi, 20))
    cfg = WosConfig(sample_count=100_000, seed=1)
    for arcs in (HALF, THREE_Q):
        g = harmonic_measure_grid(D, arcs, 512)
        z = g.centers()[g.inside]
        z = z[D.dist_to_boundary(z) >= 0.05]
        n += z.size
        grid_err = max(grid_err, float(np.abs(g.interpolate(z) - harmonic_measure_disk_arc(z, arcs)).max()))
        quad = harmonic_measure_disk_arc(pts, arcs, method="quadrature")
        closed_gap = max(closed_gap, float(np.abs(quad - harmonic_measure_disk_arc(pts, arcs)).max()))
        wos = np.array([harmonic_measure_wos(p, D, arcs, cfg).value for p in pts])
        wos_err = max(wos_err, float(np.abs(wos - quad).max()))
    elapsed = time.perf_counter() - t0
    ok = grid_err <= 5e-3 and wos_err <= 0.01 and closed_gap <= 1e-10 and elapsed <= 60
    assert verdict(1, ok, f"grid {grid_err:.2e} on {n} pts, wos {wos_err:.2e}, "
                          f"quad/closed {closed_gap:.1e}, {elapsed:.1f}s")


def test_criterion_02_symmetry(verdict, half_512):
    closed = harmonic_measure_disk_arc(0j, HALF, method="quadrature")
    grid = float(half_512.interpolate(0j))
    est = harmonic_measure_wos(0j, D, HALF, WosConfig(sample_count=100_000, seed=2))
    ok = abs(closed - 0.5) <= 1e-10 and abs(grid - 0.5) <= 5e-3 and abs(est.value - 0.5) <= 3 * est.stderr
    assert verdict(2, ok, f"closed {abs(closed - 0.5):.1e}, grid {abs(grid - 0.5):.1e}, "
                          f"wos {abs(est.value - 0.5) / est.stderr:.2f} sigma")


def test_criterion_03_boundary_law(verdict, half_512):
    K = HALF.shrink(1 / 3)
    C = lipschitz_boundary_bound(half_512, HALF, K, D)
    t = np.geomspace(1e-3, 1e-1, 40)
    om = harmonic_measure_disk_arc(1j * (1 - t), HALF)
    ratio = om / t
    ok = math.isfinite(C) and bool(np.all(om <= C * t)) and ratio.max() <= C and om[0] < 0.05
    assert verdict(3, ok, f"C = {C:.3f}, max omega/t = {ratio.max():.3f}, omega(1e-3) = {om[0]:.2e}")


def test_criterion_04_rescale(verdict, half_512):
    t0 = time.perf_counter()
    res = {eps: rescale_identity_residual(D, HALF, eps, 512, parent=half_512) for eps in (0.2, 0.3, 0.5)}
    elapsed = time.perf_counter() - t0
    ok = max(res.values()) <= 2e-2 and elapsed <= 120
    assert verdict(4, ok, ", ".join(f"eps {e}: {r:.2e}" for e, r in res.items()) + f", {elapsed:.1f}s")


def test_criterion_05_concentric(verdict):
    r = 0.5
    g = relative_extremal_interior(D, make_disk(0, r), 512)
    z = g.centers()[g.inside]
    z = z[np.abs(z) >= r]
    err = float(np.abs(g.interpolate(z) - np.log(np.abs(z) / r) / math.log(1 / r)).max())
    assert verdict(5, err <= 5e-3, f"max error {err:.2e} on {z.size} cells")


def test_criterion_06_disk_model(verdict):
    basis = bergman.build_doubly_orthogonal(D, make_disk(0, 0.5), "area", 40)
    k = np.arange(41, dtype=float)
    rel = float(np.abs(basis.nu / (math.sqrt(math.pi) * 2.0 ** k) - 1).max())
    ra, rd = basis.orthogonality_residuals()
    ok = rel <= 1e-6 and max(ra, rd) <= 1e-8
    assert verdict(6, ok, f"nu rel {rel:.1e}, residuals {ra:.1e} / {rd:.1e}")


def test_criterion_07_reconstruction(verdict):
    f = catalog_function("rational-pole")
    t0 = time.perf_counter()
    field = extend_mixed_cross(MIXED, f, K=40)
    elapsed = time.perf_counter() - t0
    sel = field.envelope & (field.omega <= 0.8)
    err = float(np.abs(field.values[sel] - f(*np.meshgrid(field.z, field.w, indexing="ij"))[sel]).max())
    ok = err <= 1e-6 and elapsed <= 60
    assert verdict(7, ok, f"max error {err:.1e} on {np.count_nonzero(sel)} pts, {elapsed:.1f}s")


def test_criterion_08_decay(verdict):
    fw = MIXED.factors[1]
    basis = bergman.build_doubly_orthogonal(D, make_disk(0, 0.5), "area", 40)
    ws = polar_samples(D, 24, 48)
    ws = np.concatenate([ws[np.abs(ws) <= 0.7], 0.7 * np.exp(1j * np.linspace(0, 2 * math.pi, 64))])
    om = fw.omega(ws)
    lognu = np.log(basis.nu[20:41])[:, None]
    thr = om[None, :] - 1 + 0.1
    viol, finite = 0, 0
    for p in (2.0, 1.2):
        c = bergman.coefficients(catalog_function("rational-pole", p=p), basis, ws)
        table, flags = bergman.decay_exponents(c, basis, omega_w=om, eps_report=0.1, k_range=(20, 40))
        viol += int(flags.sum())
        finite += int(np.isfinite(table[20:41]).sum())
        # zeroed coefficients: the rounding bound itself must meet the decay bound
        zeroed = c.values[20:41] == 0
        with np.errstate(divide="ignore"):
            noise_exp = np.log(2 * c.noise[20:41]) / lognu
        viol += int(np.count_nonzero(zeroed & (noise_exp > thr)))
    assert verdict(8, viol == 0, f"{viol} violations, {finite} finite exponents, {ws.size} w-samples")


def test_criterion_09_gonchar(verdict, mixed_fields):
    lines, total = [], 0
    for name in GONCHAR_FUNCTIONS:
        rep = verify_boundary_extension(BOUNDARY, catalog_function(name), samples=2000, slack=1e-9)
        n_b = int(rep.bound.lhs.size)
        fld = mixed_fields[name]
        sel = fld.certified & fld.envelope
        i, j = np.nonzero(sel)
        pts = np.stack([fld.z[i], fld.w[j]], axis=1)
        mrep = gonchar_bound_check(MIXED, pts, np.abs(fld.values[sel]), fld.meta["sup_A"], fld.meta["sup_X"],
                                   slack=1e-9, omega=fld.omega[sel])
        v = rep.bound.violations + rep.cross_outside + mrep.violations
        total += v if min(n_b, pts.shape[0]) >= 1000 else 1
        lines.append(f"{name} {rep.bound.violations}/{n_b} + {mrep.violations}/{pts.shape[0]}")
    assert verdict(9, total == 0, "; ".join(lines))


def test_criterion_10_max_norm(verdict, mixed_fields):
    reps = {name: max_principle_check(fld) for name, fld in mixed_fields.items()}
    ok = all(r.passed for r in reps.values())
    detail = "; ".join(f"{n} {r.sup_envelope:.4g}/{r.sup_X:.4g} exceed {r.exceed}" for n, r in reps.items())
    assert verdict(10, ok, detail)


@pytest.mark.xfail(strict=True, reason="near the sup of the Runge function the z-series decays like 0.81^k while "
                                       "coefficients reach the rounding floor near k = 38, so no point within 1e-2 "
                                       "of the sup can be series-certified in double precision")
def test_criterion_10_runge(verdict):
    rep = max_principle_check(extend_mixed_cross(MIXED, catalog_function("runge"), K=40))
    assert verdict(10, rep.passed, f"runge {rep.sup_envelope:.4g}/{rep.sup_X:.4g} exceed {rep.exceed} "
                                   "(known limitation)")


def test_criterion_11_gluing(verdict):
    s = np.linspace(0, 1, 100, endpoint=False)
    d = np.array([gluing_delta(x) for x in s])
    res = max(abs(gluing_equation_residual(di, si)) for di, si in zip(d, s))
    ok = res <= 1e-12 and bool(np.all(np.diff(d) > 0)) and d[0] == 0
    assert verdict(11, ok, f"residual {res:.1e}, delta({s[-1]:.2f}) = {d[-1]:.6f}")


def test_criterion_12_collar(verdict):
    col = smoothed_collar(perturbed_ball(1.0, 1.0), epsilon=0.01)
    gap, _ = collar_gradient_gap(col, 200)
    sl = slice_domain(col, 0.005)
    r = tangent_ball_radius(sl.domain)
    ok = gap <= 0.25 and r > 0 and sl.hole_count == 0
    assert verdict(12, ok, f"gap {gap:.4f}, slice radius {r:.4f}")


def test_criterion_13_connectivity(verdict):
    configs = [
        BOUNDARY,
        MIXED,
        CrossSpec((FactorSpec(D, BoundaryArcSet.centered(0, math.pi / 4)),) * 2),
        CrossSpec((FactorSpec(make_ellipse(2, 1), BoundaryArcSet.from_pairs([(0, math.pi)]), method="grid",
                              resolution=128),
                   FactorSpec(D, BoundaryArcSet.centered(0, 1.5 * math.pi)))),
        CrossSpec((FactorSpec(D, HALF), FactorSpec(D, make_disk(0, 0.3)))),
    ]
    t0 = time.perf_counter()
    comps = [envelope_connected(spec, 64).components for spec in configs]
    elapsed = time.perf_counter() - t0
    ok = comps == [1] * 5 and elapsed <= 120
    assert verdict(13, ok, f"components {comps}, {elapsed:.1f}s")


def test_criterion_14_tube_sandwich(verdict, half_512):
    m = half_512.inside
    parts, ok = [], True
    for delta in (0.05, 0.1):
        wt = tube_measure(D, HALF, tube_set(D, HALF, delta, half_512))
        diff = half_512.values[m] - wt.values[m]
        ok &= diff.min() >= 0 and diff.max() <= delta + 1e-2
        parts.append(f"delta {delta}: [{diff.min():.1e}, {diff.max():.3f}]")
    assert verdict(14, bool(ok), ", ".join(parts))
