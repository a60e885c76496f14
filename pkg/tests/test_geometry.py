import math

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from crossext.geometry import (TWO_PI, BoundaryArcSet, CollarError, GeometryError, PlanarDomain, arcs_from_mask,
                               ball_defining_function, collar_gradient_gap, distance_equivalence_constant,
                               domain_from_samples, make_disk, make_ellipse, make_smooth_domain, perturbed_ball,
                               slice_domain, smoothed_collar, tangent_ball_radius)

# ---------------------------------------------------------------------------
# arc sets


def test_arc_set_basic():
    a = BoundaryArcSet.from_pairs([(0.0, 1.0), (2.0, 3.0)])
    assert a.total_length == pytest.approx(2.0)
    assert a.contains(0.5) and not a.contains(1.5)
    assert not a.contains(0.0) and not a.contains(1.0)  # open arcs


def test_arc_set_wraps_mod_two_pi():
    a = BoundaryArcSet.centered(0.0, 1.0)
    assert a.contains(0.0) and a.contains(TWO_PI - 0.1) and a.contains(0.4)
    assert not a.contains(0.6)


@pytest.mark.parametrize("pairs", [[(0.0, 0.0)], [(1.0, 0.5)], [(0.0, TWO_PI)], [(0.0, 2.0), (1.0, 3.0)]])
def test_arc_set_rejects_invalid(pairs):
    with pytest.raises(GeometryError):
        BoundaryArcSet.from_pairs(pairs)


@st.composite
def arc_sets(draw):
    """Disjoint arcs built from sorted cut points with a minimum spacing."""
    k = draw(st.integers(1, 4))
    gaps = draw(st.lists(st.floats(0.05, 1.0), min_size=2 * k + 1, max_size=2 * k + 1))
    cuts = np.cumsum(gaps)
    cuts = cuts / cuts[-1] * (TWO_PI - 0.05)
    offset = draw(st.floats(0, TWO_PI))
    return BoundaryArcSet.from_pairs([(cuts[2 * i] + offset, cuts[2 * i + 1] + offset) for i in range(k)])


@given(arc_sets())
@settings(max_examples=60, deadline=None)
def test_complement_partitions_the_circle(a):
    c = a.complement()
    assert a.total_length + c.total_length == pytest.approx(TWO_PI)
    t = np.linspace(0, TWO_PI, 997, endpoint=False) + 1e-3
    both = a.contains(t) & c.contains(t)
    assert not both.any()
    assert c.complement().total_length == pytest.approx(a.total_length)


@given(arc_sets(), st.floats(0.01, 0.45))
@settings(max_examples=40, deadline=None)
def test_shrunk_arcs_are_compactly_inside(a, frac):
    k = a.shrink(frac)
    assert k.is_compactly_inside(a)
    assert not a.is_compactly_inside(k)
    assert k.total_length == pytest.approx((1 - 2 * frac) * a.total_length)


def test_arc_json_roundtrip_and_full():
    a = BoundaryArcSet.from_pairs([(0.5, 2.0)])
    assert BoundaryArcSet.from_json(a.to_json()).intervals == a.intervals
    w = BoundaryArcSet.whole()
    assert w.full and BoundaryArcSet.from_json(w.to_json()).full
    assert w.complement().empty
    assert BoundaryArcSet().complement().full


def test_arcs_from_mask():
    t = np.linspace(0, TWO_PI, 360, endpoint=False)
    mask = (t > 1.0) & (t < 2.0)
    arcs = arcs_from_mask(t, mask)
    assert len(arcs.intervals) == 1
    assert arcs.total_length == pytest.approx(1.0, abs=2 * TWO_PI / 360)


# ---------------------------------------------------------------------------
# domains


def test_make_disk_examples():
    d = make_disk(0, 1)
    assert d.curvature_bound == 1.0
    d2 = make_disk(1 + 2j, 0.5)
    assert d2.diameter == pytest.approx(1.0)
    with pytest.raises(GeometryError):
        make_disk(0, -1)


def test_circle_as_smooth_domain_matches_disk():
    c = make_smooth_domain([[0, 0, 0, 0], [1, 0, 0, 1]])
    t = np.linspace(0, TWO_PI, 50)
    np.testing.assert_allclose(c.point(t), np.exp(1j * t), atol=1e-14)
    assert c.curvature_bound == pytest.approx(1.0, rel=1e-9)
    z = np.array([0.2 + 0.3j, 0.99, 1.01j])
    np.testing.assert_array_equal(c.contains(z), make_disk(0, 1).contains(z))


def test_ellipse_curvature_bound():
    # kappa_max = a / b^2 for a = 2, b = 1
    e = make_ellipse(2.0, 1.0)
    assert e.curvature_bound == pytest.approx(2.0, rel=1e-6)


def test_figure_eight_rejected():
    with pytest.raises(GeometryError):
        make_smooth_domain([[0, 0, 0, 0], [0, 1, 0, 0], [0, 0, 0, 1]])


def test_degenerate_coefficients_rejected():
    with pytest.raises(GeometryError):
        make_smooth_domain([[0, 0, 0, 0], [1, 0, 1, 0]])  # a segment


def test_curve_closed_and_regular():
    e = make_ellipse(2.0, 1.0)
    assert abs(e.point(0.0) - e.point(TWO_PI)) <= 1e-12
    t = np.linspace(0, TWO_PI, 4096)
    assert np.abs(e.deriv(t)).min() > 0
    assert e.curvature_bound >= np.abs(e.curvature(t)).max() - 1e-12


@pytest.mark.parametrize("dom, expected", [(make_disk(0, 1), 1.0), (make_disk(0.3, 0.25), 0.25),
                                           (make_ellipse(2.0, 1.0), 0.5)])
def test_tangent_ball_radius(dom, expected):
    # ellipse: minimum radius of curvature b^2 / a
    assert tangent_ball_radius(dom) == pytest.approx(expected, rel=1e-3)


def test_domain_json_roundtrip():
    for d in (make_disk(1 + 1j, 2.0), make_ellipse(1.5, 0.7, 0.2j)):
        d2 = PlanarDomain.from_json(d.to_json())
        t = np.linspace(0, TWO_PI, 17)
        np.testing.assert_allclose(d2.point(t), d.point(t), atol=1e-14)
    with pytest.raises(GeometryError):
        PlanarDomain.from_json({"kind": "square"})


def test_distance_queries_on_disk():
    d = make_disk(0, 1)
    z = np.array([0.0, 0.5, 0.9j])
    np.testing.assert_allclose(d.dist_to_boundary(z), [1.0, 0.5, 0.1], atol=1e-9)
    t, dist = d.nearest_param(np.array([0.5j]))
    assert t[0] == pytest.approx(math.pi / 2)
    arcs = BoundaryArcSet.from_pairs([(0.0, math.pi)])
    # from -0.5i the nearest point of the closed upper arc is an endpoint
    assert d.dist_to_arcs(np.array([-0.5j]), arcs)[0] == pytest.approx(abs(-0.5j - 1), rel=1e-6)


def test_domain_from_samples_recovers_ellipse():
    t = np.linspace(0, TWO_PI, 256, endpoint=False)
    d = domain_from_samples(2 * np.cos(t) + 1j * np.sin(t))
    assert d.curvature_bound == pytest.approx(2.0, rel=1e-6)


def test_arclength():
    assert make_disk(0, 2).arclength() == pytest.approx(4 * math.pi)
    arcs = BoundaryArcSet.from_pairs([(0.0, 1.0)])
    assert make_disk(0, 2).arclength(arcs) == pytest.approx(2.0, rel=1e-6)


# ---------------------------------------------------------------------------
# smoothing collar and slices


def test_ball_collar_is_exact():
    col = smoothed_collar(ball_defining_function(1.0), epsilon=0.01)
    assert col.gradient_gap == pytest.approx(0.0, abs=1e-12)
    rng = np.random.default_rng(0)
    x = rng.normal(size=(200, 4)) * 0.02
    np.testing.assert_allclose(col.rho_eps(x), col.phi(x), atol=1e-15)


def test_perturbed_collar_gate():
    col = smoothed_collar(perturbed_ball(1.0, 1.0), epsilon=0.01)
    gap, _ = collar_gradient_gap(col, 200)
    assert 0 < gap <= 0.25
    assert col.gradient_gap == pytest.approx(gap)


def test_collar_rejects_large_epsilon():
    with pytest.raises(CollarError):
        smoothed_collar(perturbed_ball(1.0, 1.0), epsilon=0.3)


def test_collar_gate_violation_carries_point():
    # a strongly curved perturbation at a moderate epsilon breaks the 1/4 gate
    with pytest.raises(CollarError) as info:
        smoothed_collar(perturbed_ball(1.0, 60.0), epsilon=0.2)
    assert info.value.point is not None and info.value.gap > 0.25


def test_collar_normalization_checked():
    from crossext.geometry import LocalDefiningFunction

    bad = LocalDefiningFunction(np.eye(4), 1.0, remainder=lambda x: 0.1 + 0 * x[..., 0])
    with pytest.raises(CollarError):
        smoothed_collar(bad, epsilon=0.01)


def test_ball_slice_is_disk_through_base_point():
    col = smoothed_collar(ball_defining_function(1.0), epsilon=0.01)
    sl = slice_domain(col, 0j)
    assert sl.domain.kind == "disk"
    assert sl.domain.center == pytest.approx(-1.0)
    assert sl.domain.radius == pytest.approx(1.0)
    assert sl.hole_count == 0
    q = 0.006
    sl2 = slice_domain(col, q)
    assert sl2.domain.radius == pytest.approx(math.sqrt(1 - q * q))


def test_perturbed_slice_simply_connected():
    col = smoothed_collar(perturbed_ball(1.0, 1.0), epsilon=0.01)
    sl = slice_domain(col, 0.005)
    assert sl.hole_count == 0
    assert tangent_ball_radius(sl.domain) > 0
    assert not sl.arc_trace.empty


def test_slice_rejects_far_q():
    col = smoothed_collar(ball_defining_function(1.0), epsilon=0.01)
    with pytest.raises(GeometryError):
        slice_domain(col, 0.5)


def test_distance_equivalence_ball_normal():
    col = smoothed_collar(ball_defining_function(1.0), epsilon=0.01)
    sl = slice_domain(col, 0j)
    samples = -np.linspace(1e-4, 5e-3, 10) + 0j
    assert distance_equivalence_constant(col, sl, samples) == pytest.approx(1.0, abs=1e-6)
    with pytest.raises(GeometryError):
        distance_equivalence_constant(col, sl, np.array([], dtype=complex))


def test_distance_equivalence_perturbed_in_range():
    col = smoothed_collar(perturbed_ball(1.0, 1.0), epsilon=0.01)
    sl = slice_domain(col, 0.003)
    rng = np.random.default_rng(2)
    s = -rng.uniform(1e-4, 4e-3, 12) + 1j * rng.uniform(-3e-3, 3e-3, 12)
    c = distance_equivalence_constant(col, sl, s)
    assert 1.0 <= c <= 2.0


@given(st.floats(0.3, 3.0), st.floats(0.3, 3.0))
@settings(max_examples=20, deadline=None)
def test_tangent_radius_times_curvature_at_most_one(a, b):
    e = make_ellipse(a, b)
    assert tangent_ball_radius(e) * e.curvature_bound <= 1 + 1e-9
