"""End-to-end extension experiments on two-factor crosses.

Mixed crosses (an interior plural set in one factor, boundary arcs in the
other) are extended constructively through the doubly orthogonal series.
Boundary crosses are verified with ambient-holomorphic test functions whose
extensions are known. The gluing schedule attaches the ``delta`` of the
sub-cross construction to sampled envelope points.
"""

from __future__ import annotations

import io
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np

from . import bergman
from .cross import (CrossSpec, FactorSpec, BoundReport, _delta_root, delta_cap, gluing_equation_residual,
                    gonchar_bound_check, omega_sum)
from .geometry import TWO_PI, BoundaryArcSet, GeometryError, PlanarDomain
from .harmonic import MeasureGrid, harmonic_measure_grid
from .pshmeasure import _solve_on_sublevel, sublevel_domain, tube_measure, tube_set

UNCERTIFIED, BOUND_ONLY, SERIES_CERTIFIED = 0, 1, 2
TAG_NAMES = ("uncertified", "bound-only", "series-certified")


# ---------------------------------------------------------------------------
# test-function catalog
# ---------------------------------------------------------------------------


def _exp_sum(**_):
    return lambda z, w: np.exp(z + w)


def _rational_pole(p: float = 2.0, **_):
    return lambda z, w: 1.0 / (p - z * w)


def _polynomial(c: float = 1.0, **_):
    return lambda z, w: z * w + c


def _runge(a: float = 5.0, **_):
    return lambda z, w: 1.0 / (1.0 + (z + w) ** 2 / a)


def _product_pole(p: float = 3.0, **_):
    return lambda z, w: 1.0 / ((z - p) * (w - p))


CATALOG: dict[str, Callable] = {
    "exp-sum": _exp_sum,
    "rational-pole": _rational_pole,
    "polynomial": _polynomial,
    "runge": _runge,
    "product-pole": _product_pole,
}


def catalog_function(name: str, **params) -> Callable:
    """Two-variable test function ``f(z, w)`` from the built-in catalog."""
    try:
        return CATALOG[name](**params)
    except KeyError:
        raise ValueError(f"unknown catalog function {name!r}; choose from {sorted(CATALOG)}") from None


# ---------------------------------------------------------------------------
# sampling
# ---------------------------------------------------------------------------

EDGE_RADII = (0.99, 0.998, 0.9995)


def _center(domain: PlanarDomain) -> complex:
    if domain.kind == "disk":
        return domain.center
    return complex(domain.coeffs[0, 0], domain.coeffs[0, 2])


def polar_samples(domain: PlanarDomain, n_r: int = 24, n_theta: int = 48, edge: bool = True) -> np.ndarray:
    """Points ``c + rho (gamma(t) - c)`` on a polar grid, denser towards the boundary.

    With ``edge`` the radii include ``0.99, 0.998, 0.9995``; otherwise the
    grid stops at ``rho = 1`` (closure).
    """
    c = _center(domain)
    if edge:
        rho = np.concatenate([np.linspace(0.0, 0.98, max(n_r - len(EDGE_RADII), 2)), EDGE_RADII])
    else:
        rho = np.linspace(0.0, 1.0, n_r)
    t = np.linspace(0.0, TWO_PI, n_theta, endpoint=False)
    g = domain.point(t) - c
    pts = c + np.multiply.outer(rho[1:], g).ravel()
    return np.concatenate([[c], pts])


def plural_samples(factor: FactorSpec, n: int = 256) -> np.ndarray:
    """Points of the closed plural set: arc points, or a polar grid of the sub-domain."""
    a = factor.plural
    if isinstance(a, BoundaryArcSet):
        return factor.domain.point(a.sample(n, closed=True))
    return polar_samples(a, max(8, int(math.sqrt(n))), max(16, int(math.sqrt(n)) * 2), edge=False)


def _factor_omega(factor: FactorSpec, z: np.ndarray, on_plural: np.ndarray | None = None) -> np.ndarray:
    om = np.asarray(factor.omega(z), dtype=float)
    if on_plural is not None:
        om = np.where(on_plural, 0.0, om)
    return om


# ---------------------------------------------------------------------------
# mixed-cross extension
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class ExtensionField:
    """Series values of the extension on a product sample grid ``z x w``.

    ``values``, ``tails`` and ``tags`` have shape ``(len(z), len(w))``;
    values outside the envelope are NaN.
    """

    spec: CrossSpec
    z: np.ndarray
    w: np.ndarray
    omega_z: np.ndarray
    omega_w: np.ndarray
    values: np.ndarray
    tails: np.ndarray
    tags: np.ndarray
    tol: float
    K: int
    meta: dict = field(default_factory=dict)

    @property
    def omega(self) -> np.ndarray:
        return self.omega_z[:, None] + self.omega_w[None, :]

    @property
    def envelope(self) -> np.ndarray:
        return self.omega < 1.0

    @property
    def certified(self) -> np.ndarray:
        return self.tags == SERIES_CERTIFIED

    def tag_counts(self) -> dict:
        env = self.envelope
        return {name: int(np.count_nonzero(env & (self.tags == i))) for i, name in enumerate(TAG_NAMES)}

    def max_error(self, f: Callable, level: float = 1.0, certified_only: bool = True) -> float:
        """``max |fhat - f|`` over envelope samples with omega-sum ``<= level``."""
        sel = self.envelope & (self.omega <= level)
        if certified_only:
            sel &= self.certified
        if not sel.any():
            return 0.0
        ref = f(self.z[:, None], self.w[None, :])
        return float(np.abs(self.values - ref)[sel].max())

    def certified_fraction(self, level: float = 1.0) -> float:
        sel = self.envelope & (self.omega <= level)
        return float(np.count_nonzero(self.certified & sel) / max(np.count_nonzero(sel), 1))

    def to_csv(self) -> str:
        """Envelope samples as ``z_re, z_im, w_re, w_im, omega, value_re, value_im, tail, tag``."""
        i, j = np.nonzero(self.envelope)
        v = self.values[i, j]
        cols = np.column_stack([self.z[i].real, self.z[i].imag, self.w[j].real, self.w[j].imag,
                                self.omega[i, j], v.real, v.imag, self.tails[i, j]])
        buf = io.StringIO()
        np.savetxt(buf, cols, fmt="%.17g", delimiter=",")
        names = np.asarray(TAG_NAMES)[self.tags[i, j]]
        lines = buf.getvalue().splitlines()
        head = "z_re,z_im,w_re,w_im,omega,value_re,value_im,tail,tag\n"
        return head + "".join(f"{ln},{t}\n" for ln, t in zip(lines, names))

    def summary(self) -> dict:
        return {"K": self.K, "tol": self.tol, "n_z": int(self.z.size), "n_w": int(self.w.size),
                "tags": self.tag_counts(), **self.meta}


def _mixed_roles(spec: CrossSpec) -> tuple[int, int]:
    if spec.n != 2:
        raise ValueError("mixed-cross extension needs exactly two factors")
    cases = [f.case for f in spec.factors]
    if sorted(cases) != ["boundary", "interior"]:
        raise ValueError("mixed cross needs one interior and one boundary plural set")
    zi = cases.index("interior")
    return zi, 1 - zi


def cross_samples(spec: CrossSpec, f: Callable, n_plural: int = 256, n_r: int = 24, n_theta: int = 48):
    """``|f|`` on sampled points of ``X`` (closure) and of ``A_1 x A_2``.

    ``f`` takes the factor coordinates in spec order. Returns
    ``(sup_A, sup_X, n_samples)``.
    """
    f1, f2 = spec.factors
    a1, a2 = plural_samples(f1, n_plural), plural_samples(f2, n_plural)
    d1 = np.concatenate([polar_samples(f1.domain, n_r, n_theta), polar_samples(f1.domain, n_r, n_theta, edge=False)])
    d2 = np.concatenate([polar_samples(f2.domain, n_r, n_theta), polar_samples(f2.domain, n_r, n_theta, edge=False)])
    sup_A = float(np.abs(f(a1[:, None], a2[None, :])).max())
    x1 = np.abs(f(a1[:, None], d2[None, :])).max()
    x2 = np.abs(f(d1[:, None], a2[None, :])).max()
    n = a1.size * a2.size + a1.size * d2.size + d1.size * a2.size
    return sup_A, float(max(x1, x2, sup_A)), n


def extend_mixed_cross(spec: CrossSpec, f: Callable, K: int = 40, grid: tuple | None = None, *,
                       tol: float = 1e-6, n_rho: int = 64, n_t: int = 128, n_boundary: int = 64,
                       slack: float = 1e-9) -> ExtensionField:
    """Extend cross data ``f`` from a mixed cross to sampled envelope points.

    ``f(z, w)`` takes coordinates in spec order and must be evaluable on
    ``A x (G u B)``; only those values enter the construction. ``grid`` is
    ``(n_r, n_theta)`` for the polar sample grids of both factors, or a pair
    of explicit sample arrays. Points whose series tail is at most ``tol``
    are series-certified; other envelope points with a finite tail whose
    value obeys the two-constant bound are bound-only.
    """
    zi, wi = _mixed_roles(spec)
    fz, fw = spec.factors[zi], spec.factors[wi]
    g = f if zi == 0 else (lambda z, w: f(w, z))
    basis = bergman.build_doubly_orthogonal(fz.domain, fz.plural, "area", K, n_rho=n_rho, n_t=n_t)

    if grid is not None and len(grid) == 2 and np.ndim(grid[0]) == 1 and np.size(grid[0]) > 1:
        zs = np.asarray(grid[0], dtype=complex)
        ws = np.asarray(grid[1], dtype=complex)
        w_on_b = fw.locate(ws) == "plural-set"
    else:
        n_r, n_theta = grid or (24, 48)
        zs = polar_samples(fz.domain, n_r, n_theta)
        wg = polar_samples(fw.domain, n_r, n_theta)
        wb = fw.domain.point(fw.plural.sample(n_boundary, closed=False))
        ws = np.concatenate([wg, wb])
        w_on_b = np.concatenate([np.zeros(wg.size, bool), np.ones(wb.size, bool)])

    om_z = _factor_omega(fz, zs)
    om_w = np.zeros(ws.size)
    om_w[~w_on_b] = _factor_omega(fw, ws[~w_on_b])
    env = om_z[:, None] + om_w[None, :] < 1.0
    if not env.any():
        raise GeometryError("envelope is empty on the sample grid")

    coeffs = bergman.coefficients(g, basis, ws)
    values, tails = bergman.assemble_extension(basis, coeffs, zs)
    values = np.where(env, values, np.nan + 0j)

    sup_A, sup_X, n_x = cross_samples(CrossSpec((fz, fw)), g)
    om = om_z[:, None] + om_w[None, :]
    with np.errstate(divide="ignore", invalid="ignore"):
        rhs = sup_A ** (1 - om) * sup_X ** om
    tags = np.full(values.shape, UNCERTIFIED, dtype=np.int8)
    finite = env & np.isfinite(tails)
    tags[finite & (np.abs(values) <= rhs + slack)] = BOUND_ONLY
    tags[finite & (tails <= tol)] = SERIES_CERTIFIED

    ra, rd = basis.orthogonality_residuals()
    meta = {"measure": basis.mu, "nu_first": float(basis.nu[0]), "nu_last": float(basis.nu[-1]),
            "orthogonality_A": ra, "orthogonality_D": rd, "sup_A": sup_A, "sup_X": sup_X, "x_samples": n_x,
            "z_factor": zi,
            "measure_note": "mu is normalized area on A; agreement with other choices of mu is not verified"}
    if zi == 1:
        zs, ws, om_z, om_w = ws, zs, om_w, om_z
        values, tails, tags = values.T, tails.T, tags.T
    return ExtensionField(spec, zs, ws, om_z, om_w, values, tails, tags, tol, K, meta)


# ---------------------------------------------------------------------------
# maximum-norm identity
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class MaxPrincipleReport:
    sup_envelope: float
    sup_X: float
    exceed: int
    n_envelope: int
    passed: bool
    agree_tol: float = 1e-2
    rel_tol: float = 1e-6

    def to_json(self) -> dict:
        return {"sup_envelope": self.sup_envelope, "sup_X": self.sup_X, "exceed": self.exceed,
                "n_envelope": self.n_envelope, "passed": self.passed}


def max_principle_check(field: ExtensionField, x_abs=None, *, agree_tol: float = 1e-2,
                        rel_tol: float = 1e-6) -> MaxPrincipleReport:
    """Compare the sampled sup of ``|fhat|`` on certified envelope points with ``sup_X |f|``.

    ``x_abs`` holds ``|f|`` on X samples; by default the sup recorded by
    the extension run is used. Passes when no envelope value exceeds
    ``sup_X (1 + rel_tol)`` and the two sups agree to ``agree_tol``
    relative to ``sup_X``.
    """
    sup_X = float(np.max(x_abs)) if x_abs is not None else float(field.meta["sup_X"])
    sel = field.certified & field.envelope
    vals = np.abs(field.values[sel])
    sup_env = float(vals.max()) if vals.size else 0.0
    exceed = int(np.count_nonzero(vals > sup_X * (1 + rel_tol)))
    passed = exceed == 0 and abs(sup_env - sup_X) <= agree_tol * max(sup_X, 1e-300)
    return MaxPrincipleReport(sup_env, sup_X, exceed, int(vals.size), passed, agree_tol, rel_tol)


# ---------------------------------------------------------------------------
# boundary crosses
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class VerifyReport:
    bound: BoundReport
    cross_points: int
    cross_outside: int
    continuity: float

    @property
    def passed(self) -> bool:
        return self.cross_outside == 0 and self.bound.violations == 0

    def to_json(self) -> dict:
        return {"samples": int(self.bound.lhs.size), "violations": self.bound.violations,
                "min_residual": self.bound.min_residual, "cross_points": self.cross_points,
                "cross_outside": self.cross_outside, "continuity": self.continuity, "passed": self.passed}


def envelope_samples(spec: CrossSpec, n: int = 2000, seed: int = 0, n_r: int = 24, n_theta: int = 48):
    """Deterministic subsample of product grid points with omega-sum ``< 1``.

    Returns ``(points (m, 2), omega (m,))``.
    """
    f1, f2 = spec.factors
    z = polar_samples(f1.domain, n_r, n_theta)
    w = polar_samples(f2.domain, n_r, n_theta)
    om = _factor_omega(f1, z)[:, None] + _factor_omega(f2, w)[None, :]
    i, j = np.nonzero(om < 1.0)
    if i.size == 0:
        raise GeometryError("envelope is empty on the sample grid")
    rng = np.random.default_rng(seed)
    pick = rng.choice(i.size, size=min(n, i.size), replace=False)
    pick.sort()
    pts = np.stack([z[i[pick]], w[j[pick]]], axis=1)
    return pts, om[i[pick], j[pick]]


def verify_boundary_extension(spec: CrossSpec, f_ambient: Callable, samples: int = 2000, *, seed: int = 0,
                              slack: float = 1e-9, n_plural: int = 512) -> VerifyReport:
    """Check ``X`` inside the envelope and the two-constant bound for an ambient function.

    Cross points ``A_1 x G`` and ``D x A_2`` are sampled (open arcs, interior
    grids) and must have omega-sum ``< 1``. The bound is checked on
    ``samples`` envelope points. ``continuity`` is the largest jump of
    ``|f|`` between arc samples of ``A_1 x A_2`` and interior points at
    depth ``1e-6`` along the normal.
    """
    f1, f2 = spec.factors
    pts, om = envelope_samples(spec, samples, seed)
    sup_A, sup_X, _ = cross_samples(spec, f_ambient, n_plural)
    vals = np.abs(f_ambient(pts[:, 0], pts[:, 1]))
    bound = gonchar_bound_check(spec, pts, vals, sup_A, sup_X, slack=slack, omega=om)

    n_out, n_cross = 0, 0
    for k, (fa, fb) in enumerate(((f1, f2), (f2, f1))):
        if isinstance(fa.plural, BoundaryArcSet):
            a = fa.domain.point(fa.plural.sample(64, closed=False))
        else:
            a = plural_samples(fa, 64)
        d = polar_samples(fb.domain, 12, 24)
        om_d = _factor_omega(fb, d)
        n_out += int(np.count_nonzero(~(om_d < 1.0))) * a.size
        n_cross += a.size * d.size

    cont = 0.0
    if f1.case == "boundary" and f2.case == "boundary":
        t1 = f1.plural.sample(32, closed=False)
        t2 = f2.plural.sample(32, closed=False)
        p1, p2 = f1.domain.point(t1), f2.domain.point(t2)
        q1 = p1 + 1e-6 * f1.domain.inward_normal(t1)
        q2 = p2 + 1e-6 * f2.domain.inward_normal(t2)
        cont = float(np.abs(f_ambient(p1[:, None], p2[None, :]) - f_ambient(q1[:, None], q2[None, :])).max())
    return VerifyReport(bound, n_cross, n_out, cont)


# ---------------------------------------------------------------------------
# gluing schedule
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class ScheduleEntry:
    point: tuple
    omega_sum: float
    s: float
    delta: float
    residual: float
    threshold: float
    boundary_anchored: bool
    tube_constants: tuple = ()
    check_lhs: float = math.nan
    check_ok: bool | None = None

    def to_json(self) -> dict:
        return {"point": [[complex(c).real, complex(c).imag] for c in self.point], "omega_sum": self.omega_sum,
                "s": self.s, "delta": self.delta, "residual": self.residual, "threshold": self.threshold,
                "boundary_anchored": self.boundary_anchored, "tube_constants": list(self.tube_constants),
                "check_lhs": None if math.isnan(self.check_lhs) else self.check_lhs, "check_ok": self.check_ok}


@dataclass(frozen=True)
class GluingSchedule:
    entries: tuple
    c: float
    n_fold: int | None
    cap: float

    @property
    def consistent(self) -> bool:
        return all(e.check_ok is not False for e in self.entries)

    def to_json(self) -> dict:
        return {"c": self.c, "n_fold": self.n_fold, "cap": self.cap, "consistent": self.consistent,
                "entries": [e.to_json() for e in self.entries]}


def schedule_delta(s: float, c: float = 1.0, n_fold: int | None = None) -> float:
    """Gluing ``delta`` for ``s`` in ``[0, 1]``, capped below the admissibility bound."""
    if not 0 <= s <= 1:
        raise ValueError("s must lie in [0, 1]")
    d = _delta_root(s, c, n_fold)
    cap = delta_cap(c, n_fold)
    return min(d, math.nextafter(cap, 0.0))


def _boundary_grid(factor: FactorSpec, resolution: int) -> MeasureGrid:
    if factor.measure is not None:
        return factor.measure
    return harmonic_measure_grid(factor.domain, factor.plural, resolution)


def gluing_schedule(spec: CrossSpec, points, c: float = 1.0, n_fold: int | None = None, *,
                    check: bool = True, resolution: int = 128) -> GluingSchedule:
    """Per-point ``delta`` with ``s = 1 - omega-sum`` and the sub-cross parameters.

    For two boundary factors and ``check=True`` each point is tested with
    grid measures: ``omega(z, T_delta, D) + omega(w, B, G_delta) < 1 - delta``
    where ``G_delta = {omega(., B, G) < 1 - 2 c delta}``, up to twice the
    grid tolerance. Points in ``A x B`` get ``s = 1`` and are marked
    boundary-anchored.
    """
    k = 2.0 * (n_fold if n_fold is not None else c)
    entries = []
    do_check = check and n_fold is None and spec.n == 2 and all(f.case == "boundary" for f in spec.factors)
    g1 = g2 = None
    if do_check:
        g1 = _boundary_grid(spec.factors[0], resolution)
        g2 = _boundary_grid(spec.factors[1], resolution)
    for p in points:
        p = tuple(complex(x) for x in p)
        tags = [f.locate(np.asarray(x)) for f, x in zip(spec.factors, p)]
        anchored = all(t == "plural-set" for t in tags)
        if anchored:
            om = 0.0
        else:
            om = float(omega_sum(spec, p))
            if not om < 1.0:
                raise GeometryError(f"point {p} has omega-sum {om:.6g} >= 1")
        s = 1.0 - om
        d = schedule_delta(s, c, n_fold)
        res = abs(gluing_equation_residual(d, s, c, n_fold))
        thr = 1.0 - k * d
        consts: tuple = ()
        lhs, ok = math.nan, None
        if do_check and not anchored:
            f1, f2 = spec.factors
            tube = tube_set(f1.domain, f1.plural, d, g1)
            consts = tuple(float(x) for x in tube.constants)
            om_t = om_h = 0.0
            if tags[0] != "plural-set":
                om_t = float(tube_measure(f1.domain, f1.plural, tube).interpolate(p[0]))
            if tags[1] != "plural-set":
                sub = sublevel_domain(g2, k * d, p[1])
                om_h = float(_solve_on_sublevel(f2.domain, f2.plural, g2, sub).interpolate(p[1]))
            lhs = om_t + om_h
            tol = 2.0 * (g1.tolerance + g2.tolerance)
            ok = lhs < 1.0 - d + tol
        entries.append(ScheduleEntry(p, om, s, d, res, thr, anchored, consts, lhs, ok))
    return GluingSchedule(tuple(entries), c, n_fold, delta_cap(c, n_fold))
