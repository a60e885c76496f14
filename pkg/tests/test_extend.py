import dataclasses
import json
import math

import numpy as np
import pytest

from crossext.cross import CrossSpec, FactorSpec, gluing_delta
from crossext.extend import (BOUND_ONLY, CATALOG, SERIES_CERTIFIED, UNCERTIFIED, catalog_function, envelope_samples,
                             extend_mixed_cross, gluing_schedule, max_principle_check, schedule_delta,
                             verify_boundary_extension)
from crossext.geometry import BoundaryArcSet, GeometryError, make_disk

D = make_disk(0, 1)
GRID = (12, 24)


def mixed(arc_len=1.5 * math.pi):
    return CrossSpec((FactorSpec(D, make_disk(0, 0.5)), FactorSpec(D, BoundaryArcSet.centered(0, arc_len))))


def boundary(arc_len):
    a = BoundaryArcSet.centered(0, arc_len)
    return CrossSpec((FactorSpec(D, a), FactorSpec(D, a)))


@pytest.fixture(scope="module")
def pole_field():
    return extend_mixed_cross(mixed(), catalog_function("rational-pole"), K=40, grid=GRID)


# ---------------------------------------------------------------------------
# catalog


def test_catalog_functions():
    assert set(CATALOG) >= {"exp-sum", "rational-pole", "polynomial", "runge"}
    assert catalog_function("rational-pole")(0.6, 0.5) == pytest.approx(1 / 1.7)
    assert catalog_function("rational-pole", p=1.2)(1.0, 1.0) == pytest.approx(5.0)
    assert catalog_function("exp-sum")(0.0, 0.0) == 1.0
    with pytest.raises(ValueError):
        catalog_function("sinc")


# ---------------------------------------------------------------------------
# mixed-cross extension


def test_pole_extension_accuracy(pole_field):
    f = catalog_function("rational-pole")
    assert pole_field.max_error(f, level=0.8) <= 1e-6
    assert pole_field.certified_fraction(0.8) == 1.0
    assert np.all(pole_field.tails[pole_field.certified] <= pole_field.tol)


def test_extension_agrees_with_data_on_cross(pole_field):
    f = catalog_function("rational-pole")
    fld = pole_field
    on_x = fld.envelope & ((fld.omega_z[:, None] == 0) | (fld.omega_w[None, :] == 0)) & fld.certified
    assert on_x.sum() > 100
    ref = f(fld.z[:, None], fld.w[None, :])
    assert np.abs(fld.values - ref)[on_x].max() <= 1e-6


def test_polynomial_reproduced_exactly():
    f = lambda z, w: z * w  # noqa: E731
    fld = extend_mixed_cross(mixed(), f, K=20, grid=GRID)
    assert fld.max_error(f, certified_only=False) <= 1e-12
    assert fld.tag_counts()["uncertified"] == 0 and fld.tag_counts()["bound-only"] == 0


def test_pole_near_envelope_loses_certification():
    f = catalog_function("rational-pole", p=1.2)
    fld = extend_mixed_cross(mixed(), f, K=40, grid=GRID)
    counts = fld.tag_counts()
    assert counts["series-certified"] > 0 and counts["bound-only"] + counts["uncertified"] > 0
    zw = np.abs(fld.z[:, None] * fld.w[None, :])
    lost = fld.envelope & ~fld.certified
    # certification is lost only on the side of the pole locus |zw| = 1.2
    assert zw[lost].min() > zw[fld.certified].max() - 0.2
    assert fld.max_error(f) <= 1e-6


def test_monotone_certification_and_uniqueness():
    f = catalog_function("runge")
    a = extend_mixed_cross(mixed(), f, K=30, grid=GRID, n_rho=48, n_t=96)
    b = extend_mixed_cross(mixed(), f, K=40, grid=GRID)
    assert not (a.certified & ~b.certified).any()
    both = a.certified & b.certified
    assert np.abs(a.values - b.values)[both].max() <= 2 * (a.tol + b.tol)


def test_factor_order_is_irrelevant(pole_field):
    spec = mixed()
    swapped = CrossSpec(spec.factors[::-1])
    f = catalog_function("rational-pole")
    fld = extend_mixed_cross(swapped, lambda w, z: f(z, w), K=40, grid=GRID)
    np.testing.assert_allclose(fld.values.T, pole_field.values, atol=1e-14)


def test_extension_rejects_non_mixed():
    with pytest.raises(ValueError):
        extend_mixed_cross(boundary(math.pi), catalog_function("exp-sum"), K=10, grid=GRID)


def test_empty_envelope_rejected():
    # with explicit samples all beyond the envelope
    spec = mixed(0.5)
    z = np.array([0.95, -0.95])
    w = np.array([-0.9, -0.95])
    with pytest.raises(GeometryError):
        extend_mixed_cross(spec, catalog_function("exp-sum"), K=10, grid=(z, w))


def test_field_csv_and_summary(pole_field):
    text = pole_field.to_csv()
    lines = text.splitlines()
    assert lines[0] == "z_re,z_im,w_re,w_im,omega,value_re,value_im,tail,tag"
    assert len(lines) - 1 == int(pole_field.envelope.sum())
    assert lines[1].split(",")[-1] in ("series-certified", "bound-only", "uncertified")
    s = pole_field.summary()
    assert s["K"] == 40 and s["tags"]["series-certified"] == len(lines) - 1
    json.dumps(s)


# ---------------------------------------------------------------------------
# maximum-norm identity


@pytest.mark.parametrize("name", ["rational-pole", "exp-sum", "polynomial"])
def test_max_principle_holds(name):
    fld = extend_mixed_cross(mixed(), catalog_function(name), K=40, grid=GRID)
    rep = max_principle_check(fld)
    assert rep.passed, rep
    assert rep.exceed == 0


def test_max_principle_constant():
    fld = extend_mixed_cross(mixed(), lambda z, w: 2.5 + 0 * (z * w), K=10, grid=GRID)
    rep = max_principle_check(fld)
    assert rep.sup_envelope == pytest.approx(2.5, rel=1e-12)
    assert rep.sup_X == pytest.approx(2.5, rel=1e-12)
    assert rep.passed


def test_max_principle_negative_control(pole_field):
    vals = pole_field.values.copy()
    i, j = np.argwhere(pole_field.certified & (pole_field.omega > 0.3))[0]
    vals[i, j] = 10 * pole_field.meta["sup_X"]
    bad = dataclasses.replace(pole_field, values=vals)
    rep = max_principle_check(bad)
    assert not rep.passed and rep.exceed == 1
    assert json.loads(json.dumps(rep.to_json()))["passed"] is False


# ---------------------------------------------------------------------------
# boundary crosses


@pytest.mark.parametrize("name", ["exp-sum", "product-pole", "rational-pole", "polynomial", "runge"])
@pytest.mark.parametrize("arc_len", [1.5 * math.pi, math.pi / 4])
def test_verify_boundary_extension(name, arc_len):
    rep = verify_boundary_extension(boundary(arc_len), catalog_function(name), samples=1000)
    assert rep.passed
    assert rep.cross_outside == 0 and rep.cross_points > 0
    assert rep.bound.min_residual >= -1e-9
    assert rep.continuity < 1e-4


def test_envelope_shrinks_with_arcs():
    big, _ = envelope_samples(boundary(1.5 * math.pi), n=10 ** 6)
    small, _ = envelope_samples(boundary(math.pi / 4), n=10 ** 6)
    assert len(small) < len(big)


# ---------------------------------------------------------------------------
# gluing schedule


def test_schedule_centre_point():
    sched = gluing_schedule(boundary(1.5 * math.pi), [(0, 0)])
    e = sched.entries[0]
    assert e.omega_sum == pytest.approx(0.5, abs=1e-14)
    assert e.delta == pytest.approx((3.5 - math.sqrt(10.25)) / 2, rel=1e-12)
    assert e.threshold == pytest.approx(1 - 2 * e.delta)
    assert e.threshold == pytest.approx(0.7016, abs=1e-4)
    assert e.residual <= 1e-12
    assert e.check_ok and sched.consistent


def test_schedule_boundary_anchored():
    sched = gluing_schedule(boundary(1.5 * math.pi), [(1.0, 1.0)], check=False)
    e = sched.entries[0]
    assert e.boundary_anchored and e.s == 1.0 and e.omega_sum == 0.0
    assert 0 < e.delta < sched.cap
    assert e.residual <= 1e-12


def test_schedule_tiny_s():
    s = 1e-9
    d = schedule_delta(s)
    assert d > 0 and d == pytest.approx(s / 3, rel=1e-6)
    assert d == gluing_delta(s)


def test_schedule_rejects_outside():
    with pytest.raises(GeometryError):
        gluing_schedule(boundary(math.pi), [(0, 0)], check=False)


def test_schedule_n_fold_and_json():
    sched = gluing_schedule(boundary(1.5 * math.pi), [(0, 0), (0.2, -0.3j)], n_fold=3)
    for e in sched.entries:
        assert e.delta < 1 / 3 and e.residual <= 1e-12 and e.check_ok is None
    doc = json.loads(json.dumps(sched.to_json()))
    assert doc["n_fold"] == 3 and len(doc["entries"]) == 2


def test_schedule_consistency_on_several_points():
    pts = [(0.3, 0.2j), (-0.4, 0.1), (0.5j, -0.2)]
    sched = gluing_schedule(boundary(1.5 * math.pi), pts)
    assert sched.consistent
    for e in sched.entries:
        assert e.check_lhs < 1 - e.delta + 1e-2
        assert all(c >= 1 for c in e.tube_constants)
