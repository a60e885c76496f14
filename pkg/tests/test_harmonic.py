import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crossext.geometry import BoundaryArcSet, GeometryError, make_disk, make_ellipse
from crossext.harmonic import (GridSpec, WosConfig, arc_measure_bound, certified_arc_constant, disk_poisson_kernel,
                               harmonic_measure_disk_arc, harmonic_measure_grid, harmonic_measure_wos,
                               poisson_bound_constant, poisson_kernel_nystrom)

# Poisson integrals evaluated with mpmath at 30 digits
OMEGA_UPPER_03_02 = 0.3628246768695663  # z = 0.3+0.2i, A = upper half circle
OMEGA_RIGHT_05 = 0.20483276469913345  # z = 0.5, A = right half circle
OMEGA_34_M05_01 = 0.5653987157221692  # z = -0.5+0.1i, A centred at 0 of length 3pi/2

RIGHT = BoundaryArcSet.centered(0.0, math.pi)
THREE_QUARTER = BoundaryArcSet.centered(0.0, 1.5 * math.pi)


# ---------------------------------------------------------------------------
# closed form


def test_closed_form_center_values(half_arcs):
    assert harmonic_measure_disk_arc(0j, half_arcs) == pytest.approx(0.5, abs=1e-14)
    assert harmonic_measure_disk_arc(0j, THREE_QUARTER) == pytest.approx(0.25, abs=1e-14)


@pytest.mark.parametrize("z, arcs, expected", [(0.3 + 0.2j, BoundaryArcSet.from_pairs([(0.0, math.pi)]),
                                                OMEGA_UPPER_03_02),
                                               (0.5, RIGHT, OMEGA_RIGHT_05),
                                               (-0.5 + 0.1j, THREE_QUARTER, OMEGA_34_M05_01)])
@pytest.mark.parametrize("method", ["closed", "quadrature"])
def test_closed_form_matches_oracle(z, arcs, expected, method):
    assert harmonic_measure_disk_arc(z, arcs, method=method) == pytest.approx(expected, abs=1e-10)


def test_right_half_value_in_open_interval():
    v = harmonic_measure_disk_arc(0.5, RIGHT)
    assert 0 < v < 0.5


def test_closed_form_rejects_outside_points(half_arcs):
    for z in (1.0, 1j, 2 + 0j):
        with pytest.raises(GeometryError):
            harmonic_measure_disk_arc(z, half_arcs)


def test_full_arc_set_gives_zero():
    z = np.array([0, 0.5, -0.3j])
    np.testing.assert_array_equal(harmonic_measure_disk_arc(z, BoundaryArcSet.whole()), 0.0)


def test_shifted_disk():
    v = harmonic_measure_disk_arc(2 + 1j + 0.5 * (0.3 + 0.2j), BoundaryArcSet.from_pairs([(0, math.pi)]),
                                  center=2 + 1j, radius=0.5)
    assert v == pytest.approx(OMEGA_UPPER_03_02, abs=1e-12)


def test_vanishes_on_arc_radially():
    r = 1 - np.logspace(-1, -6, 6)
    v = harmonic_measure_disk_arc(r + 0j, RIGHT)
    assert np.all(np.diff(v) < 0) and v[-1] < 1e-5


@st.composite
def nested_arcs(draw):
    c = draw(st.floats(0, 2 * math.pi))
    small = draw(st.floats(0.1, 3.0))
    big = draw(st.floats(small, 6.0))
    return BoundaryArcSet.centered(c, small), BoundaryArcSet.centered(c, big)


@given(nested_arcs(), st.floats(0, 0.99), st.floats(0, 2 * math.pi))
@settings(max_examples=100, deadline=None)
def test_monotone_in_arc_set(pair, r, t):
    small, big = pair
    z = r * complex(math.cos(t), math.sin(t))
    assert harmonic_measure_disk_arc(z, big) <= harmonic_measure_disk_arc(z, small) + 1e-9


@given(st.floats(0, 2 * math.pi), st.floats(0.1, 6.0), st.floats(0, 0.95), st.floats(0, 2 * math.pi))
@settings(max_examples=100, deadline=None)
def test_complementary_arcs_sum_to_one(c, length, r, t):
    a = BoundaryArcSet.centered(c, length)
    z = r * complex(math.cos(t), math.sin(t))
    total = harmonic_measure_disk_arc(z, a) + harmonic_measure_disk_arc(z, a.complement())
    assert total == pytest.approx(1.0, abs=1e-12)


# ---------------------------------------------------------------------------
# grid


def test_grid_half_disk_center(half_grid_256):
    assert 0.495 <= half_grid_256.interpolate(0j) <= 0.505


def test_grid_three_quarter_center_res512(disk):
    g = harmonic_measure_grid(disk, THREE_QUARTER, 512)
    assert g.interpolate(0j) == pytest.approx(0.25, abs=5e-3)


def test_grid_full_boundary_is_zero(disk):
    g = harmonic_measure_grid(disk, BoundaryArcSet.whole(), 64)
    vals = g.values[g.inside]
    assert vals.size > 0 and np.all(vals == 0)


def test_grid_resolution_floor(disk, half_arcs):
    with pytest.raises(ValueError):
        harmonic_measure_grid(disk, half_arcs, 16)


def test_grid_values_in_unit_interval_and_mask(half_grid_256, disk):
    g = half_grid_256
    vals = g.values[g.inside]
    assert vals.min() >= 0 and vals.max() <= 1
    np.testing.assert_array_equal(g.inside, disk.contains(g.centers()))


def test_grid_harmonic_to_residual(half_grid_256):
    assert half_grid_256.stencil_residual() <= 1e-9


def test_grid_matches_closed_form_away_from_endpoints(half_grid_256, half_arcs):
    g = half_grid_256
    z = g.centers()[g.inside]
    z = z[np.abs(z) < 0.9]
    err = np.abs(g.interpolate(z) - harmonic_measure_disk_arc(z, half_arcs))
    assert err.max() < 5e-3


def test_grid_generic_endpoints_first_order_until_subtracted(disk):
    # endpoints off the grid axes: the data jump costs O(h / dist) with plain attribution
    arcs = BoundaryArcSet.centered(1.0, 0.7)
    errs = []
    for res in (128, 256):
        g = harmonic_measure_grid(disk, arcs, res)
        z = g.centers()[g.inside]
        z = z[disk.dist_to_boundary(z) >= 0.05]
        errs.append(np.abs(g.interpolate(z) - harmonic_measure_disk_arc(z, arcs)).max())
    assert errs[1] > 5e-3 and 1.5 < errs[0] / errs[1] < 4
    g = harmonic_measure_grid(disk, arcs, 128, subtract_endpoints=True)
    z = g.centers()[g.inside]
    assert np.abs(g.values[g.inside] - harmonic_measure_disk_arc(z, arcs)).max() < 1e-8


def test_grid_complementary_arcs(disk, half_arcs, half_grid_256):
    other = harmonic_measure_grid(disk, half_arcs.complement(), 256)
    z = half_grid_256.centers()[half_grid_256.inside]
    z = z[np.abs(z) < 0.9]
    total = half_grid_256.interpolate(z) + other.interpolate(z)
    assert np.abs(total - 1).max() < 1e-2


def test_grid_csv_header(disk, half_arcs):
    g = harmonic_measure_grid(disk, half_arcs, 32)
    lines = g.to_csv().splitlines()
    assert lines[0] == "x,y,value"
    assert len(lines) - 1 == int(g.inside.sum())


def test_gridspec_rejects_tiny():
    with pytest.raises(ValueError):
        GridSpec.around(make_disk(0, 1), 4)


def test_grid_on_ellipse_between_zero_and_one():
    e = make_ellipse(2.0, 1.0)
    g = harmonic_measure_grid(e, BoundaryArcSet.from_pairs([(0.0, math.pi)]), 64)
    v = g.values[g.inside]
    assert 0 <= v.min() and v.max() <= 1
    # symmetric data under z -> -conj(z): the centre sees half the boundary
    assert g.interpolate(0j) == pytest.approx(0.5, abs=1e-2)


# ---------------------------------------------------------------------------
# walk on spheres


def test_wos_config_validation():
    for kw in ({"sample_count": 0}, {"shell_epsilon": 0.0}, {"max_steps": 0}, {"seed": -1}):
        with pytest.raises(ValueError):
            WosConfig(**kw)


def test_wos_disk_center(disk, half_arcs):
    est = harmonic_measure_wos(0j, disk, half_arcs, WosConfig(sample_count=100_000, seed=1))
    assert est.value == pytest.approx(0.5, abs=0.005)
    assert est.sample_count == 100_000


def test_wos_disk_matches_closed_form(disk):
    est = harmonic_measure_wos(0.5, disk, RIGHT, WosConfig(sample_count=100_000, seed=3))
    assert est.value == pytest.approx(OMEGA_RIGHT_05, abs=0.01)
    assert abs(est.value - OMEGA_RIGHT_05) <= 6 * est.stderr + 1e-4


def test_wos_full_boundary_on_ellipse():
    est = harmonic_measure_wos(0j, make_ellipse(2.0, 1.0), BoundaryArcSet.whole(),
                               WosConfig(sample_count=2000, seed=0))
    assert est.value == 0.0 and est.stderr == 0.0


def test_wos_deterministic(disk, half_arcs):
    cfg = WosConfig(sample_count=20_000, seed=99, chunk=3000)
    a = harmonic_measure_wos(0.2 + 0.1j, disk, half_arcs, cfg)
    b = harmonic_measure_wos(0.2 + 0.1j, disk, half_arcs, cfg, workers=3)
    assert a == b


def test_wos_rejects_bad_inputs(disk, half_arcs):
    with pytest.raises(ValueError):
        harmonic_measure_wos(0j, disk, half_arcs, WosConfig(shell_epsilon=0.2))
    with pytest.raises(GeometryError):
        harmonic_measure_wos(2.0, disk, half_arcs, WosConfig(sample_count=10))


def test_wos_estimate_json():
    import json

    est = harmonic_measure_wos(0j, make_disk(0, 1), RIGHT, WosConfig(sample_count=100, seed=5))
    d = json.loads(est.to_json())
    assert set(d) == {"value", "stderr", "n", "seed"} and d["n"] == 100 and d["seed"] == 5


# ---------------------------------------------------------------------------
# Poisson kernel bounds


def test_nystrom_kernel_matches_disk_kernel():
    from crossext.geometry import make_smooth_domain

    circ = make_smooth_domain([[0, 0, 0, 0], [1, 0, 0, 1]])
    x = np.array([0.0, 0.3 + 0.2j, -0.5j])
    y, P = poisson_kernel_nystrom(circ, x, m=256)
    np.testing.assert_allclose(P, disk_poisson_kernel(x[:, None], y[None, :]), atol=1e-10)


def test_nystrom_kernel_integrates_to_one():
    e = make_ellipse(2.0, 1.0)
    m = 512
    y, P = poisson_kernel_nystrom(e, np.array([0.1 + 0.2j, 1.2]), m)
    wts = np.abs(e.deriv(np.linspace(0, 2 * math.pi, m, endpoint=False))) * 2 * math.pi / m
    np.testing.assert_allclose(P @ wts, 1.0, atol=1e-8)


def test_poisson_constant_disk():
    assert poisson_bound_constant(make_disk(0, 1)) == pytest.approx(1 / math.pi, rel=1e-6)


def test_poisson_constant_scale_invariant():
    # P scales like 1/R, |x-y|^2 like R^2 and dist like R, so the ratio does not change
    assert poisson_bound_constant(make_disk(3j, 2.0)) == pytest.approx(poisson_bound_constant(make_disk(0, 1)))


def test_poisson_constant_ellipse_regression():
    assert poisson_bound_constant(make_ellipse(2.0, 1.0)) == pytest.approx(0.5961907466588413, rel=1e-6)


def test_arc_measure_bound_behaviour(disk, half_arcs):
    C = certified_arc_constant(disk, half_arcs)
    assert C == pytest.approx(1.0, rel=1e-6)  # (1/pi) * pi
    assert arc_measure_bound(0j, disk, half_arcs, C) == pytest.approx(C)
    assert harmonic_measure_disk_arc(0j, half_arcs) <= arc_measure_bound(0j, disk, half_arcs, C)
    # on dD minus A the denominator vanishes
    assert arc_measure_bound(-1j, disk, half_arcs, C) == math.inf
    # radial approach to the arc midpoint: linear decay
    r = 1 - np.array([1e-2, 1e-3, 1e-4])
    b = arc_measure_bound(1j * r, disk, half_arcs, C)
    np.testing.assert_allclose(b / (1 - r), b[0] / 1e-2, rtol=0.05)


@given(st.floats(0, 2 * math.pi), st.floats(0.2, 6.0), st.floats(0, 0.999), st.floats(0, 2 * math.pi))
@settings(max_examples=100, deadline=None)
def test_arc_measure_bound_is_a_certificate(c, length, r, t):
    disk = make_disk(0, 1)
    arcs = BoundaryArcSet.centered(c, length)
    C = certified_arc_constant(disk, arcs)
    z = r * complex(math.cos(t), math.sin(t))
    assert harmonic_measure_disk_arc(z, arcs) <= arc_measure_bound(z, disk, arcs, C) * (1 + 1e-9)
