"""Crosses, their envelopes, and the bound checkers attached to them.

A cross is built from planar factors ``(D_j, A_j)``. ``A_j`` is either an
open arc set on ``dD_j`` or a closed subset of ``D_j`` given as a domain.
The envelope is the set where the sum of the factor measures is below 1.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass, field
from typing import Sequence

import numpy as np
from scipy import ndimage
from scipy.cluster.hierarchy import DisjointSet

from .geometry import BoundaryArcSet, GeometryError, PlanarDomain
from .harmonic import GridSpec, MeasureGrid, harmonic_measure_disk_arc, harmonic_measure_grid
from .pshmeasure import relative_extremal_interior

INTERIOR, PLURAL, OUTSIDE = "interior", "plural-set", "outside"
IN_X_CORE, IN_X_REST = "in X°", "in X∖X°"
ENV_INTERIOR, ENV_BOUNDARY = "interior-envelope", "envelope-boundary-part"


# ---------------------------------------------------------------------------
# factors and crosses
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class FactorSpec:
    """One planar factor: domain, plural set, and how its measure is evaluated.

    ``method`` is ``"auto"`` (closed form when one exists, else grid),
    ``"closed"`` or ``"grid"``; ``resolution`` applies to the grid route.
    """

    domain: PlanarDomain
    plural: BoundaryArcSet | PlanarDomain
    method: str = "auto"
    resolution: int = 256
    measure: MeasureGrid | None = field(default=None, repr=False)

    @property
    def case(self) -> str:
        return "boundary" if isinstance(self.plural, BoundaryArcSet) else "interior"

    def _closed_available(self) -> bool:
        d, a = self.domain, self.plural
        if d.kind != "disk":
            return False
        if isinstance(a, BoundaryArcSet):
            return True
        return a.kind == "disk" and abs(a.center - d.center) < 1e-15 and a.radius < d.radius

    def with_measure(self) -> "FactorSpec":
        """Copy carrying a grid measure when the grid route is needed."""
        if self.measure is not None or (self.method != "grid" and self._closed_available()):
            return self
        if self.method == "closed":
            raise GeometryError("no closed form for this factor")
        if self.case == "boundary":
            g = harmonic_measure_grid(self.domain, self.plural, self.resolution)
        else:
            g = relative_extremal_interior(self.domain, self.plural, self.resolution)
        return FactorSpec(self.domain, self.plural, self.method, self.resolution, g)

    def omega(self, z) -> np.ndarray:
        """omega(z, A, D) at interior points (no location checks)."""
        z = np.asarray(z, dtype=complex)
        d, a = self.domain, self.plural
        if self.measure is None and self.method != "grid" and self._closed_available():
            if isinstance(a, BoundaryArcSet):
                return np.asarray(harmonic_measure_disk_arc(z, a, center=d.center, radius=d.radius))
            r = np.abs(z - d.center)
            out = np.log(np.maximum(r, a.radius) / a.radius) / math.log(d.radius / a.radius)
            return np.clip(out, 0.0, 1.0)
        fac = self.with_measure()
        out = fac.measure.interpolate(z)
        if not isinstance(a, BoundaryArcSet):
            out = np.where(a.contains(z), 0.0, out)
        return np.clip(out, 0.0, 1.0)

    def locate(self, z, tol: float = 1e-9) -> np.ndarray:
        """Location tags: plural set first, then the open domain, else outside."""
        z = np.asarray(z, dtype=complex)
        d, a = self.domain, self.plural
        scale = max(d.diameter, 1.0)
        if isinstance(a, BoundaryArcSet):
            t, dist = d.nearest_param(z)
            plural = (dist <= tol * scale) & a.contains(t)
            inside = d.contains(z) & ~plural
        else:
            plural = a.contains(z) | (a.dist_to_boundary(z) <= tol * scale)
            inside = d.contains(z) & ~plural
        return np.where(plural, PLURAL, np.where(inside, INTERIOR, OUTSIDE))

    def to_json(self) -> dict:
        plural = self.plural.to_json() if isinstance(self.plural, BoundaryArcSet) else {
            "interior": self.plural.to_json()}
        return {"domain": self.domain.to_json(), "plural": plural, "method": self.method,
                "resolution": self.resolution}

    @classmethod
    def from_json(cls, data: dict) -> "FactorSpec":
        dom = PlanarDomain.from_json(data["domain"])
        pl = data["plural"]
        if isinstance(pl, dict):
            plural = PlanarDomain.from_json(pl.get("interior", pl))
        else:
            plural = BoundaryArcSet.from_json(pl)
        return cls(dom, plural, data.get("method", "auto"), int(data.get("resolution", 256)))


@dataclass(frozen=True, eq=False)
class CrossSpec:
    factors: tuple

    def __post_init__(self):
        if len(self.factors) < 2:
            raise GeometryError("a cross needs at least two factors")
        object.__setattr__(self, "factors", tuple(self.factors))

    @property
    def n(self) -> int:
        return len(self.factors)

    def to_json(self) -> dict:
        return {"factors": [f.to_json() for f in self.factors]}

    @classmethod
    def from_json(cls, data: dict) -> "CrossSpec":
        return cls(tuple(FactorSpec.from_json(f) for f in data["factors"]))

    def prepared(self) -> "CrossSpec":
        return CrossSpec(tuple(f.with_measure() for f in self.factors))


@dataclass(frozen=True)
class CrossPoint:
    coords: tuple
    tags: tuple


def make_point(spec: CrossSpec, coords: Sequence[complex]) -> CrossPoint:
    if len(coords) != spec.n:
        raise GeometryError(f"point has {len(coords)} coordinates, cross has {spec.n} factors")
    tags = tuple(str(f.locate(complex(c))) for f, c in zip(spec.factors, coords))
    return CrossPoint(tuple(complex(c) for c in coords), tags)


def _as_point(spec, point):
    return point if isinstance(point, CrossPoint) else make_point(spec, point)


def omega_sum(spec: CrossSpec, point) -> float:
    """Sum of factor measures; plural-set coordinates contribute 0."""
    p = _as_point(spec, point)
    total = 0.0
    for f, c, tag in zip(spec.factors, p.coords, p.tags):
        if tag == OUTSIDE:
            raise GeometryError(f"coordinate {c} lies outside D ∪ A")
        if tag == INTERIOR:
            total += float(f.omega(c))
    return total


def omega_sum_many(spec: CrossSpec, coords: np.ndarray) -> np.ndarray:
    """Vectorized omega sum for an ``(m, N)`` array of points; NaN where a coordinate is outside."""
    coords = np.asarray(coords, dtype=complex)
    total = np.zeros(coords.shape[0])
    for j, f in enumerate(spec.factors):
        tags = f.locate(coords[:, j])
        w = np.zeros(coords.shape[0])
        sel = tags == INTERIOR
        if sel.any():
            w[sel] = f.omega(coords[sel, j])
        w[tags == OUTSIDE] = np.nan
        total += w
    return total


def envelope_membership(spec: CrossSpec, point) -> str:
    p = _as_point(spec, point)
    w = omega_sum(spec, p)
    if w >= 1:
        return OUTSIDE
    return ENV_INTERIOR if all(t == INTERIOR for t in p.tags) else ENV_BOUNDARY


def cross_membership(spec: CrossSpec, point) -> str:
    """Position relative to the cross ``X`` and its core ``X°``."""
    p = _as_point(spec, point)
    tags = p.tags
    plural = [t == PLURAL for t in tags]
    # for interior plural sets a plural coordinate is also a point of D_j
    in_dom = [t == INTERIOR or (t == PLURAL and f.case == "interior")
              for t, f in zip(tags, spec.factors)]
    for j in range(spec.n):
        if in_dom[j] and all(plural[k] for k in range(spec.n) if k != j):
            return IN_X_CORE
    if all(plural):
        return IN_X_REST
    return OUTSIDE


# ---------------------------------------------------------------------------
# envelope connectivity
# ---------------------------------------------------------------------------


def _factor_field(f: FactorSpec, resolution: int) -> np.ndarray:
    spec = GridSpec.around(f.domain, resolution)
    z = spec.centers()
    vals = np.full(spec.shape, np.nan)
    tags = f.locate(z)
    inside = tags == INTERIOR
    if isinstance(f.plural, PlanarDomain):
        inside |= tags == PLURAL
    vals[inside] = f.omega(z[inside])
    return vals


def envelope_components(a: np.ndarray, b: np.ndarray, method: str = "auto") -> int:
    """Components of ``{(p, q) : a_p + b_q < 1}`` in the product of two 4-connected grids.

    ``method="label"`` labels the 4-D mask directly; ``"slices"`` labels one
    2-D slice per ``q`` and joins the slices of neighbouring ``q`` with a
    disjoint-set forest. Slices are nested in the level, so each component
    of the smaller slice sits inside exactly one component of the larger.
    """
    a = np.where(np.isnan(a), np.inf, a)
    b = np.where(np.isnan(b), np.inf, b)
    if method == "auto":
        method = "label" if a.size * b.size <= 2 ** 25 else "slices"
    if method == "label":
        mask = (a[:, :, None, None] + b[None, None, :, :]) < 1
        if not mask.any():
            return 0
        _, n = ndimage.label(mask, structure=ndimage.generate_binary_structure(4, 1))
        return int(n)
    if method != "slices":
        raise ValueError(f"unknown method {method!r}")
    ny, nx = b.shape
    labels = {}
    offsets = {}
    reps = {}
    forest = DisjointSet()
    total = 0

    def slice_of(i, j):
        nonlocal total
        key = (i, j)
        if key not in labels:
            lab, n = ndimage.label(a < 1 - b[i, j])
            labels[key] = lab
            offsets[key] = total
            if n:
                flat = lab.ravel()
                _, first = np.unique(flat, return_index=True)
                reps[key] = first[1:] if flat[first[0]] == 0 else first
                for k in range(n):
                    forest.add(total + k)
            else:
                reps[key] = np.empty(0, dtype=int)
            total += n
        return labels[key]

    for i in range(ny):
        for j in range(nx):
            if not np.isfinite(b[i, j]):
                continue
            slice_of(i, j)
            for ni, nj in ((i - 1, j), (i, j - 1)):
                if ni < 0 or nj < 0 or not np.isfinite(b[ni, nj]):
                    continue
                small, big = ((i, j), (ni, nj)) if b[i, j] >= b[ni, nj] else ((ni, nj), (i, j))
                lab_small, lab_big = slice_of(*small), slice_of(*big)
                if not reps[small].size:
                    continue
                targets = lab_big.ravel()[reps[small]]
                for k, t in enumerate(targets):
                    forest.merge(offsets[small] + k, offsets[big] + int(t) - 1)
        # rows above i - 1 are no longer needed
        for key in [k for k in labels if k[0] < i - 1]:
            del labels[key]
    return len(forest.subsets()) if total else 0


@dataclass(frozen=True)
class ConnectivityReport:
    connected: bool
    components: int
    resolution: int
    cells: int


def envelope_connected(spec: CrossSpec, resolution: int = 64, method: str = "auto") -> ConnectivityReport:
    """Flood fill of the two-factor envelope ``{omega_1 + omega_2 < 1}`` on the product grid."""
    if spec.n != 2:
        raise GeometryError("envelope connectivity is implemented for two factors")
    if resolution > 128:
        raise ValueError("per-axis resolution is capped at 128")
    a = _factor_field(spec.factors[0], resolution)
    b = _factor_field(spec.factors[1], resolution)
    fa = np.sort(a[np.isfinite(a)])
    fb = np.sort(b[np.isfinite(b)])
    cells = int(np.searchsorted(fa, 1 - fb, side="left").sum())
    if cells == 0:
        raise GeometryError("the envelope contains no grid cell")
    n = envelope_components(a, b, method)
    return ConnectivityReport(n == 1, n, resolution, cells)


# ---------------------------------------------------------------------------
# bounds
# ---------------------------------------------------------------------------


def two_constant_bound(m, M, omega_value):
    """``m (1 - omega) + M omega``."""
    m = np.asarray(m, dtype=float)
    M = np.asarray(M, dtype=float)
    w = np.asarray(omega_value, dtype=float)
    if np.any(m > M):
        raise ValueError("need m <= M")
    if np.any((w < 0) | (w > 1)):
        raise ValueError("omega must lie in [0, 1]")
    out = np.where(w == 1, M, np.where(w == 0, m, m * (1 - w) + M * w))
    return out if out.ndim else float(out)


@dataclass(frozen=True, eq=False)
class BoundReport:
    points: np.ndarray
    lhs: np.ndarray
    rhs: np.ndarray
    slack: float = 1e-9
    omega: np.ndarray | None = None

    @property
    def residual(self) -> np.ndarray:
        return self.rhs - self.lhs

    @property
    def min_residual(self) -> float:
        return float(self.residual.min()) if self.residual.size else math.inf

    @property
    def violations(self) -> int:
        return int(np.count_nonzero(self.residual < -self.slack))

    def merge(self, other: "BoundReport") -> "BoundReport":
        om = None
        if self.omega is not None and other.omega is not None:
            om = np.concatenate([self.omega, other.omega])
        return BoundReport(np.concatenate([self.points, other.points]), np.concatenate([self.lhs, other.lhs]),
                           np.concatenate([self.rhs, other.rhs]), max(self.slack, other.slack), om)

    def to_csv(self) -> str:
        """Rows sorted by residual (most violated first)."""
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        n = self.points.shape[1] if self.points.ndim == 2 else 1
        head = []
        for j in range(n):
            head += [f"z{j + 1}_re", f"z{j + 1}_im"]
        w.writerow(head + ["lhs", "rhs", "residual"])
        pts = self.points.reshape(len(self.lhs), n)
        for k in np.argsort(self.residual, kind="stable"):
            row = []
            for c in pts[k]:
                row += [repr(float(c.real)), repr(float(c.imag))]
            w.writerow(row + [repr(float(self.lhs[k])), repr(float(self.rhs[k])), repr(float(self.residual[k]))])
        return buf.getvalue()


def gonchar_bound_check(spec: CrossSpec, points, f_abs, sup_A: float, sup_X: float,
                        slack: float = 1e-9, omega=None) -> BoundReport:
    """Residuals ``sup_A^(1 - omega) sup_X^omega - |f|`` at envelope samples."""
    points = np.asarray(points, dtype=complex)
    if not sup_A <= sup_X:
        raise ValueError("need sup_A <= sup_X")
    if not math.isfinite(sup_X):
        raise ValueError("sup_X must be finite")
    w = omega_sum_many(spec, points) if omega is None else np.asarray(omega, dtype=float)
    if np.any(~np.isfinite(w)) or np.any(w >= 1):
        raise GeometryError("every sample must lie in the envelope (omega < 1)")
    with np.errstate(divide="ignore"):
        rhs = np.where(w == 0, sup_A, sup_A ** (1 - w) * sup_X ** w)
    return BoundReport(points, np.abs(np.asarray(f_abs, dtype=float)), rhs, slack, w)


def _delta_root(s: float, c: float, n_fold: int | None) -> float:
    if n_fold is None:
        b = 1.0 + 2.0 * c + s
        return 2.0 * s / (b + math.sqrt(b * b - 4.0 * s))
    N = float(n_fold)
    b = 1.0 + 2.0 * N + s * N
    return 2.0 * s / (b + math.sqrt(b * b - 4.0 * N * s))


def gluing_equation_residual(delta: float, s: float, c: float = 1.0, n_fold: int | None = None) -> float:
    if n_fold is None:
        return delta + 2.0 * c * delta / (1.0 - delta) - s
    return delta + 2.0 * n_fold * delta / (1.0 - n_fold * delta) - s


def delta_cap(c: float = 1.0, n_fold: int | None = None) -> float:
    cap = min(1.0, 1.0 / (2.0 * c))
    if n_fold is not None:
        cap = min(cap, 1.0 / n_fold)
    return cap


def gluing_delta(s: float, c: float = 1.0, n_fold: int | None = None) -> float:
    """Smaller root of the gluing equation ``delta + 2 c delta/(1 - delta) = s``.

    With ``n_fold=N`` the equation is ``delta + 2 N delta/(1 - N delta) = s``.
    """
    if not 0 <= s < 1:
        raise ValueError("s must lie in [0, 1)")
    if n_fold is None and not c > 0:
        raise ValueError("c must be positive")
    if n_fold is not None and n_fold < 2:
        raise ValueError("n_fold must be at least 2")
    return _delta_root(float(s), float(c), n_fold)
