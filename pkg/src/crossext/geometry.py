"""Planar C^2 domains, boundary arc sets, and the local smoothing collar.

Domains are either disks or Jordan domains whose boundary is a finite
trigonometric polynomial. Every domain is parametrized by ``t`` in
``[0, 2*pi)``; boundary arcs are open parameter intervals.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from functools import cached_property
from typing import Callable, Iterable, Sequence

import numpy as np
from scipy import ndimage
from scipy.spatial import cKDTree

TWO_PI = 2.0 * math.pi
N_CHECK = 4096


class GeometryError(ValueError):
    """Invalid domain, arc set, collar or slice input."""


class CollarError(GeometryError):
    """The smoothing collar fails its gradient gate; carries the violating point."""

    def __init__(self, message, point=None, gap=None):
        super().__init__(message)
        self.point = point
        self.gap = gap


# ---------------------------------------------------------------------------
# arc sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class BoundaryArcSet:
    """Finite union of open parameter intervals ``(a, b)`` taken mod 2*pi.

    ``full=True`` stands for the whole boundary (used for degenerate
    boundary data); it is not a finite union of open arcs.
    """

    intervals: tuple = ()
    full: bool = False

    def __post_init__(self):
        if self.full:
            object.__setattr__(self, "intervals", ((0.0, TWO_PI),))
            return
        cleaned = []
        for a, b in self.intervals:
            a, b = float(a), float(b)
            length = b - a
            if not length > 0:
                raise GeometryError(f"arc ({a}, {b}) has non-positive length")
            if length >= TWO_PI:
                raise GeometryError(f"arc ({a}, {b}) covers the whole boundary")
            a0 = a % TWO_PI
            cleaned.append((a0, a0 + length))
        cleaned.sort()
        total = sum(b - a for a, b in cleaned)
        if total >= TWO_PI:
            raise GeometryError("arcs cover the whole boundary")
        for (a1, b1), (a2, b2) in zip(cleaned, cleaned[1:] + cleaned[:1]):
            if len(cleaned) == 1:
                break
            gap = (a2 - b1) % TWO_PI if (a2, b2) != cleaned[0] else (a2 + TWO_PI - b1)
            if (a2, b2) != cleaned[0] and a2 < b1:
                raise GeometryError("arcs overlap")
            if gap < 0 or (len(cleaned) > 1 and (a2, b2) == cleaned[0] and a2 + TWO_PI < b1):
                raise GeometryError("arcs overlap")
        object.__setattr__(self, "intervals", tuple(cleaned))

    @classmethod
    def from_pairs(cls, pairs: Iterable[Sequence[float]]) -> "BoundaryArcSet":
        return cls(tuple((float(a), float(b)) for a, b in pairs))

    @classmethod
    def whole(cls) -> "BoundaryArcSet":
        return cls(full=True)

    @classmethod
    def centered(cls, mid: float, length: float) -> "BoundaryArcSet":
        """Single arc of the given length centred at parameter ``mid``."""
        if length >= TWO_PI:
            return cls(full=True)
        return cls(((mid - length / 2, mid + length / 2),))

    @property
    def starts(self) -> np.ndarray:
        return np.array([a for a, _ in self.intervals], dtype=float)

    @property
    def lengths(self) -> np.ndarray:
        return np.array([b - a for a, b in self.intervals], dtype=float)

    @property
    def total_length(self) -> float:
        return float(self.lengths.sum()) if self.intervals else 0.0

    @property
    def empty(self) -> bool:
        return not self.intervals

    def contains(self, t) -> np.ndarray:
        """Membership of parameters in the open arcs (endpoints excluded)."""
        t = np.asarray(t, dtype=float)
        if self.full:
            return np.ones(t.shape, dtype=bool)
        hit = np.zeros(t.shape, dtype=bool)
        for a, b in self.intervals:
            d = np.mod(t - a, TWO_PI)
            hit |= (d > 0) & (d < b - a)
        return hit

    def complement(self) -> "BoundaryArcSet":
        """The open arcs between consecutive arcs of this set."""
        if self.full:
            return BoundaryArcSet()
        if self.empty:
            return BoundaryArcSet(full=True)
        iv = list(self.intervals)
        gaps = []
        for (a1, b1), (a2, _) in zip(iv, iv[1:] + [(iv[0][0] + TWO_PI, None)]):
            if a2 - b1 > 0:
                gaps.append((b1, a2))
        return BoundaryArcSet(tuple(gaps))

    def shrink(self, fraction: float) -> "BoundaryArcSet":
        """Remove ``fraction`` of each arc's length from both of its ends."""
        if not 0 <= fraction < 0.5:
            raise GeometryError("shrink fraction must lie in [0, 0.5)")
        if self.full:
            raise GeometryError("cannot shrink the whole boundary")
        return BoundaryArcSet(tuple((a + fraction * (b - a), b - fraction * (b - a))
                                    for a, b in self.intervals))

    def is_compactly_inside(self, other: "BoundaryArcSet") -> bool:
        """True when the closure of every arc lies in an open arc of ``other``."""
        if other.full:
            return True
        for a, b in self.intervals:
            ok = False
            for c, d in other.intervals:
                s = (a - c) % TWO_PI
                if s > 0 and s + (b - a) < d - c:
                    ok = True
                    break
            if not ok:
                return False
        return True

    def sample(self, n_per_turn: int = 4096, closed: bool = True) -> np.ndarray:
        """Parameters densely covering the arcs (with endpoints when ``closed``)."""
        out = []
        for a, b in self.intervals:
            m = max(int(math.ceil((b - a) / TWO_PI * n_per_turn)), 8)
            ts = np.linspace(a, b, m + 1)
            if not closed:
                ts = ts[1:-1]
            out.append(np.mod(ts, TWO_PI))
        return np.concatenate(out) if out else np.empty(0)

    def to_json(self):
        if self.full:
            return "full"
        return [[a, b] for a, b in self.intervals]

    @classmethod
    def from_json(cls, data) -> "BoundaryArcSet":
        if data == "full":
            return cls(full=True)
        return cls.from_pairs(data)

    def __repr__(self):
        if self.full:
            return "BoundaryArcSet(full)"
        return "BoundaryArcSet(" + ", ".join(f"({a:.6g}, {b:.6g})" for a, b in self.intervals) + ")"


def arcs_from_mask(t: np.ndarray, mask: np.ndarray) -> BoundaryArcSet:
    """Arc set from a boolean mask over uniformly spaced boundary parameters."""
    mask = np.asarray(mask, dtype=bool)
    n = len(mask)
    if mask.all():
        return BoundaryArcSet(full=True)
    if not mask.any():
        return BoundaryArcSet()
    dt = TWO_PI / n
    # rotate so the sequence starts outside the set
    shift = int(np.flatnonzero(~mask)[0])
    m = np.roll(mask, -shift)
    edges = np.diff(np.concatenate([[0], m.astype(int), [0]]))
    starts = np.flatnonzero(edges == 1)
    stops = np.flatnonzero(edges == -1)
    t0 = t[shift]
    pairs = [(t0 + (s - 0.5) * dt, t0 + (e - 0.5) * dt) for s, e in zip(starts, stops)]
    return BoundaryArcSet(tuple(pairs))


# ---------------------------------------------------------------------------
# planar domains
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class PlanarDomain:
    """A disk or a trigonometric-polynomial Jordan domain.

    ``coeffs`` has one row per harmonic ``k`` with columns
    ``(ax_k, bx_k, ay_k, by_k)`` so that
    ``x(t) = sum ax_k cos(kt) + bx_k sin(kt)`` and likewise for ``y``.
    """

    kind: str
    center: complex = 0j
    radius: float = 1.0
    coeffs: np.ndarray | None = None
    orientation: int = 1
    curvature_bound: float = 1.0

    # -- boundary curve ----------------------------------------------------

    def point(self, t) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "disk":
            return self.center + self.radius * np.exp(1j * t)
        return self._trig(t, 0)

    def deriv(self, t, order: int = 1) -> np.ndarray:
        t = np.asarray(t, dtype=float)
        if self.kind == "disk":
            return self.radius * (1j ** order) * np.exp(1j * t)
        return self._trig(t, order)

    def _trig(self, t, order):
        c = self.coeffs
        k = np.arange(c.shape[0])
        kt = np.multiply.outer(t, k)
        cos, sin = np.cos(kt), np.sin(kt)
        # d^n/dt^n of cos(kt), sin(kt) cycle with period 4
        kn = k.astype(float) ** order
        phase = order % 4
        if phase == 0:
            cc, ss = cos, sin
        elif phase == 1:
            cc, ss = -sin, cos
        elif phase == 2:
            cc, ss = -cos, -sin
        else:
            cc, ss = sin, -cos
        x = cc @ (kn * c[:, 0]) + ss @ (kn * c[:, 1])
        y = cc @ (kn * c[:, 2]) + ss @ (kn * c[:, 3])
        return x + 1j * y

    def curvature(self, t) -> np.ndarray:
        """Signed curvature, positive where the boundary bends toward the interior."""
        d1 = self.deriv(t, 1)
        d2 = self.deriv(t, 2)
        num = d1.real * d2.imag - d1.imag * d2.real
        return self.orientation * num / np.abs(d1) ** 3

    def inward_normal(self, t) -> np.ndarray:
        d1 = self.deriv(t, 1)
        return self.orientation * 1j * d1 / np.abs(d1)

    @cached_property
    def _dense(self):
        t = np.linspace(0.0, TWO_PI, 8 * N_CHECK, endpoint=False)
        return t, self.point(t)

    @cached_property
    def _tree(self):
        _, pts = self._dense
        return cKDTree(np.column_stack([pts.real, pts.imag]))

    @cached_property
    def _polygon(self):
        from shapely.geometry import Polygon

        _, pts = self._dense
        return Polygon(np.column_stack([pts.real, pts.imag]))

    @property
    def bbox(self) -> tuple[complex, complex]:
        if self.kind == "disk":
            r = self.radius * (1 + 0j) + 1j * self.radius
            return self.center - r, self.center + r
        _, pts = self._dense
        return complex(pts.real.min(), pts.imag.min()), complex(pts.real.max(), pts.imag.max())

    @cached_property
    def diameter(self) -> float:
        if self.kind == "disk":
            return 2.0 * self.radius
        from scipy.spatial import ConvexHull
        from scipy.spatial.distance import pdist

        _, pts = self._dense
        xy = np.column_stack([pts.real, pts.imag])
        hull = xy[ConvexHull(xy).vertices]
        return float(pdist(hull).max())

    def arclength(self, arcs: BoundaryArcSet | None = None) -> float:
        """Length of the boundary, or of the given arcs."""
        if self.kind == "disk":
            total = TWO_PI if arcs is None else arcs.total_length
            return self.radius * total
        intervals = ((0.0, TWO_PI),) if arcs is None else arcs.intervals
        out = 0.0
        for a, b in intervals:
            m = max(int((b - a) / TWO_PI * 2048), 64)
            x, w = np.polynomial.legendre.leggauss(64)
            edges = np.linspace(a, b, m // 64 + 2)
            for lo, hi in zip(edges[:-1], edges[1:]):
                tt = 0.5 * (hi - lo) * x + 0.5 * (hi + lo)
                out += 0.5 * (hi - lo) * float(np.sum(w * np.abs(self.deriv(tt))))
        return out

    # -- point queries -----------------------------------------------------

    def contains(self, z) -> np.ndarray:
        """Open-domain membership."""
        z = np.asarray(z, dtype=complex)
        if self.kind == "disk":
            return np.abs(z - self.center) < self.radius
        import shapely

        return shapely.contains_xy(self._polygon, z.real, z.imag)

    def nearest_param(self, z) -> tuple[np.ndarray, np.ndarray]:
        """Boundary parameter of the nearest boundary point and the distance to it."""
        z = np.asarray(z, dtype=complex)
        if self.kind == "disk":
            w = z - self.center
            t = np.mod(np.angle(w), TWO_PI)
            return t, np.abs(np.abs(w) - self.radius)
        shape = z.shape
        zf = z.ravel()
        tdense, _ = self._dense
        _, idx = self._tree.query(np.column_stack([zf.real, zf.imag]))
        t = tdense[idx]
        for _ in range(8):
            g = self.point(t) - zf
            d1 = self.deriv(t, 1)
            d2 = self.deriv(t, 2)
            f1 = (np.conj(g) * d1).real
            f2 = (np.conj(d1) * d1).real + (np.conj(g) * d2).real
            step = np.where(np.abs(f2) > 1e-300, f1 / np.where(f2 == 0, 1, f2), 0.0)
            step = np.clip(step, -TWO_PI / N_CHECK, TWO_PI / N_CHECK)
            t = t - step
        t = np.mod(t, TWO_PI)
        d = np.abs(self.point(t) - zf)
        return t.reshape(shape), d.reshape(shape)

    def dist_to_boundary(self, z) -> np.ndarray:
        return self.nearest_param(z)[1]

    def dist_to_arcs(self, z, arcs: BoundaryArcSet) -> np.ndarray:
        """Euclidean distance from points to the closure of the given arcs."""
        z = np.asarray(z, dtype=complex)
        if arcs.full:
            return self.dist_to_boundary(z)
        if arcs.empty:
            return np.full(z.shape, np.inf)
        if self.kind == "disk":
            w = z - self.center
            t = np.mod(np.angle(w), TWO_PI)
            inside = arcs.contains(t)
            for a, b in arcs.intervals:
                inside |= np.isclose(np.mod(t - a, TWO_PI), 0) | np.isclose(np.mod(t - b, TWO_PI), 0)
            best = np.where(inside, np.abs(np.abs(w) - self.radius), np.inf)
            for a, b in arcs.intervals:
                for e in (a, b):
                    best = np.minimum(best, np.abs(z - self.point(e)))
            return best
        best = np.full(z.shape, np.inf)
        zf = z.ravel()
        for a, b in arcs.intervals:
            m = max(int((b - a) / TWO_PI * 8 * N_CHECK), 16)
            ts = np.linspace(a, b, m + 1)
            pts = self.point(ts)
            tree = cKDTree(np.column_stack([pts.real, pts.imag]))
            _, idx = tree.query(np.column_stack([zf.real, zf.imag]))
            t = ts[idx]
            for _ in range(6):
                g = self.point(t) - zf
                d1 = self.deriv(t, 1)
                d2 = self.deriv(t, 2)
                f1 = (np.conj(g) * d1).real
                f2 = (np.conj(d1) * d1).real + (np.conj(g) * d2).real
                f2 = np.where(f2 == 0, 1.0, f2)
                t = np.clip(t - f1 / f2, a, b)
            best = np.minimum(best, np.abs(self.point(t) - zf).reshape(z.shape))
        return best

    # -- serialization -----------------------------------------------------

    def to_json(self) -> dict:
        if self.kind == "disk":
            return {"kind": "disk", "center": [self.center.real, self.center.imag], "radius": self.radius}
        return {"kind": "trig", "coeffs": self.coeffs.tolist()}

    @classmethod
    def from_json(cls, data: dict) -> "PlanarDomain":
        kind = data.get("kind")
        if kind == "disk":
            c = data.get("center", [0.0, 0.0])
            return make_disk(complex(c[0], c[1]), float(data["radius"]))
        if kind == "trig":
            return make_smooth_domain(np.asarray(data["coeffs"], dtype=float))
        if kind == "ellipse":
            c = data.get("center", [0.0, 0.0])
            return make_ellipse(float(data["a"]), float(data["b"]), complex(c[0], c[1]))
        raise GeometryError(f"unknown domain kind {kind!r}")

    def __repr__(self):
        if self.kind == "disk":
            return f"PlanarDomain(disk, center={self.center}, radius={self.radius})"
        return f"PlanarDomain(trig, harmonics={self.coeffs.shape[0] - 1})"


def make_disk(center: complex, radius: float) -> PlanarDomain:
    if not radius > 0:
        raise GeometryError(f"disk radius must be positive, got {radius}")
    return PlanarDomain("disk", complex(center), float(radius), None, 1, 1.0 / float(radius))


def make_smooth_domain(trig_coeffs) -> PlanarDomain:
    """Jordan domain bounded by a trigonometric polynomial curve.

    Raises ``GeometryError`` when the curve self-intersects or its tangent
    vanishes.
    """
    from shapely.geometry import LinearRing

    c = np.array(trig_coeffs, dtype=float)
    if c.ndim != 2 or c.shape[1] != 4 or c.shape[0] < 2:
        raise GeometryError("trig coefficients must have shape (K+1, 4) with K >= 1")
    c[0, 1] = c[0, 3] = 0.0
    probe = PlanarDomain("trig", 0j, 1.0, c, 1, 1.0)
    t = np.linspace(0.0, TWO_PI, N_CHECK, endpoint=False)
    pts = probe.point(t)
    scale = float(np.abs(pts - pts.mean()).max())
    if not scale > 0:
        raise GeometryError("degenerate curve")
    tfine = np.linspace(0.0, TWO_PI, 4 * N_CHECK, endpoint=False)
    speed = np.abs(probe.deriv(tfine))
    if speed.min() <= 1e-9 * scale:
        raise GeometryError("boundary tangent vanishes")
    ring = LinearRing(np.column_stack([pts.real, pts.imag]))
    if not ring.is_simple:
        raise GeometryError("boundary curve self-intersects")
    area = 0.5 * float(np.sum(pts.real * np.roll(pts.imag, -1) - np.roll(pts.real, -1) * pts.imag))
    orientation = 1 if area > 0 else -1
    probe = PlanarDomain("trig", 0j, 1.0, c, orientation, 1.0)
    kappa = np.abs(probe.curvature(tfine))
    return PlanarDomain("trig", 0j, 1.0, c, orientation, float(kappa.max()))


def make_ellipse(a: float, b: float, center: complex = 0j) -> PlanarDomain:
    """Axis-aligned ellipse with semi-axes ``a`` (x) and ``b`` (y)."""
    c = np.zeros((2, 4))
    c[0, 0], c[0, 2] = center.real, center.imag
    c[1, 0], c[1, 3] = a, b
    return make_smooth_domain(c)


def domain_from_samples(points: np.ndarray) -> PlanarDomain:
    """Trigonometric interpolant through uniformly parametrized boundary samples."""
    points = np.asarray(points, dtype=complex)
    n = len(points)
    kmax = (n - 1) // 2
    fx = np.fft.rfft(points.real) / n
    fy = np.fft.rfft(points.imag) / n
    c = np.zeros((kmax + 1, 4))
    c[0, 0], c[0, 2] = fx[0].real, fy[0].real
    k = np.arange(1, kmax + 1)
    c[k, 0], c[k, 1] = 2 * fx[k].real, -2 * fx[k].imag
    c[k, 2], c[k, 3] = 2 * fy[k].real, -2 * fy[k].imag
    return make_smooth_domain(c)


def tangent_ball_radius(domain: PlanarDomain, n_check: int = N_CHECK, tol: float = 1e-9) -> float:
    """Radius of internal and external tangent disks that fit at every boundary sample.

    Starts from the reciprocal curvature bound and shrinks until the sampled
    check passes: each disk of radius ``r`` placed along the inward or outward
    normal must stay at distance ``>= r - tol`` from every boundary sample.
    """
    if domain.kind == "disk":
        return domain.radius
    t = np.linspace(0.0, TWO_PI, n_check, endpoint=False)
    p = domain.point(t)
    n_in = domain.inward_normal(t)
    tree = domain._tree
    r = 1.0 / domain.curvature_bound
    for _ in range(200):
        ok = True
        for sign in (1.0, -1.0):
            c = p + sign * r * n_in
            d, _ = tree.query(np.column_stack([c.real, c.imag]))
            if d.min() < r - tol * max(1.0, r):
                ok = False
                break
        if ok:
            return float(r)
        r *= 0.95
    raise GeometryError("no tangent-ball radius found")


# ---------------------------------------------------------------------------
# smoothing collar in C^2
# ---------------------------------------------------------------------------


def _as_real4(z1, z2) -> np.ndarray:
    z1 = np.asarray(z1, dtype=complex)
    z2 = np.asarray(z2, dtype=complex)
    z1, z2 = np.broadcast_arrays(z1, z2)
    return np.stack([z1.real, z1.imag, z2.real, z2.imag], axis=-1)


@dataclass(frozen=True, eq=False)
class LocalDefiningFunction:
    """``rho(x) = x1 + x.H.x / 2 + remainder(x)`` near a boundary point at the origin.

    Coordinates are real ``(x1, y1, x2, y2)`` for ``(z1, z2)`` in C^2; the
    outward normal at the origin is ``+x1``. ``tangent_radius`` is the radius
    of the internally tangent ball ``B((-r, 0), r)``. The remainder must be
    o(|x|^2); ``c2_bound`` is its declared second-derivative bound.
    """

    hessian: np.ndarray
    tangent_radius: float = 1.0
    remainder: Callable | None = None
    remainder_grad: Callable | None = None
    c2_bound: float = 0.0

    def value(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        out = x[..., 0] + 0.5 * np.einsum("...i,ij,...j->...", x, self.hessian, x)
        if self.remainder is not None:
            out = out + self.remainder(x)
        return out

    def grad(self, x: np.ndarray) -> np.ndarray:
        x = np.asarray(x, dtype=float)
        g = x @ self.hessian.T
        g = g + np.array([1.0, 0.0, 0.0, 0.0])
        if self.remainder is not None:
            if self.remainder_grad is not None:
                g = g + self.remainder_grad(x)
            else:
                h = 1e-7
                for i in range(4):
                    e = np.zeros(4)
                    e[i] = h
                    g[..., i] += (self.remainder(x + e) - self.remainder(x - e)) / (2 * h)
        return g

    @property
    def is_ball(self) -> bool:
        r = self.tangent_radius
        return self.remainder is None and np.allclose(self.hessian, np.eye(4) / r, atol=1e-15, rtol=0)


def ball_defining_function(r: float) -> LocalDefiningFunction:
    """The ball's own defining function ``phi`` written in local form."""
    return LocalDefiningFunction(np.eye(4) / r, r)


def perturbed_ball(r: float, x1_coeff: float = 1.0) -> LocalDefiningFunction:
    """``phi + c * x1^2``: the ball defining function with an added curvature term."""
    h = np.eye(4) / r
    h[0, 0] += 2 * x1_coeff
    return LocalDefiningFunction(h, r)


def bump(s) -> np.ndarray:
    """Radial C^2 profile: 1 on s <= 1, 0 on s >= 2, quintic smoothstep between."""
    s = np.asarray(s, dtype=float)
    u = np.clip(s - 1.0, 0.0, 1.0)
    return 1.0 - u ** 3 * (10 - 15 * u + 6 * u ** 2)


def bump_slope(s) -> np.ndarray:
    s = np.asarray(s, dtype=float)
    u = np.clip(s - 1.0, 0.0, 1.0)
    return -30.0 * u ** 2 * (1 - u) ** 2


@dataclass(frozen=True, eq=False)
class SmoothedCollar:
    """``rho_eps = phi + psi(|x|/eps) (rho - phi)`` around a boundary point.

    Coordinates are local: the base point sits at the origin and ambient
    points passed to the methods are first shifted by ``-base_point``.
    """

    rho: LocalDefiningFunction
    epsilon: float
    base_point: tuple = (0j, 0j)
    gradient_gap: float = 0.0

    @property
    def tangent_radius(self) -> float:
        return self.rho.tangent_radius

    def _local(self, x):
        p = _as_real4(*self.base_point)
        return np.asarray(x, dtype=float) - p

    def phi(self, x):
        x = self._local(x)
        r = self.tangent_radius
        return ((x[..., 0] + r) ** 2 + x[..., 1] ** 2 + x[..., 2] ** 2 + x[..., 3] ** 2 - r * r) / (2 * r)

    def phi_grad(self, x):
        x = self._local(x)
        g = x / self.tangent_radius
        g[..., 0] += 1.0
        return g

    def rho_eps(self, x):
        xl = self._local(x)
        s = np.linalg.norm(xl, axis=-1) / self.epsilon
        phi = self.phi(x)
        return phi + bump(s) * (self.rho.value(xl) - phi)

    def rho_eps_grad(self, x):
        xl = self._local(x)
        norm = np.linalg.norm(xl, axis=-1)
        s = norm / self.epsilon
        phi = self.phi(x)
        diff = self.rho.value(xl) - phi
        dphi = self.phi_grad(x)
        ddiff = self.rho.grad(xl) - dphi
        safe = np.where(norm > 0, norm, 1.0)
        dpsi = (bump_slope(s) / (self.epsilon * safe))[..., None] * xl
        return dphi + bump(s)[..., None] * ddiff + diff[..., None] * dpsi

    def ambient_rho(self, x):
        return self.rho.value(self._local(x))

    def ambient_rho_grad(self, x):
        return self.rho.grad(self._local(x))

    @property
    def is_ball(self) -> bool:
        return self.rho.is_ball


def collar_gradient_gap(collar: SmoothedCollar, n: int = 200) -> tuple[float, np.ndarray]:
    """Largest ``|d rho_eps - d phi|`` on ``|x| <= 2 eps`` over three coordinate planes.

    Each plane pairs ``x1`` with one of ``y1, x2, y2`` on an ``n x n`` grid.
    Returns the gap and the point where it is attained.
    """
    e2 = 2.0 * collar.epsilon
    u = np.linspace(-e2, e2, n)
    U, V = np.meshgrid(u, u, indexing="ij")
    disk = U ** 2 + V ** 2 <= e2 ** 2
    best, where = -1.0, None
    base = _as_real4(*collar.base_point)
    for axis in (1, 2, 3):
        x = np.zeros((int(disk.sum()), 4))
        x[:, 0] = U[disk]
        x[:, axis] = V[disk]
        x = x + base
        gap = np.linalg.norm(collar.rho_eps_grad(x) - collar.phi_grad(x), axis=-1)
        k = int(np.argmax(gap))
        if gap[k] > best:
            best, where = float(gap[k]), x[k]
    return best, where


def smoothed_collar(rho_model: LocalDefiningFunction, P=(0j, 0j), epsilon: float = 0.01,
                    n_check: int = 200) -> SmoothedCollar:
    """Build the smoothing collar and certify the gradient gate ``<= 1/4``.

    Raises ``CollarError`` when ``epsilon >= r/4``, when ``rho`` is not
    normalized at the base point, or when the gate fails at a sample point.
    """
    r = rho_model.tangent_radius
    if not 0 < epsilon < r / 4:
        raise CollarError(f"epsilon={epsilon} must lie in (0, r/4) with r={r}")
    zero = np.zeros(4)
    v0 = float(rho_model.value(zero))
    g0 = rho_model.grad(zero)
    if abs(v0) > 1e-9 or np.abs(g0 - np.array([1.0, 0, 0, 0])).max() > 1e-6:
        raise CollarError("rho is not normalized: need rho(0) = 0 and d rho(0) = (1, 0, 0, 0)")
    collar = SmoothedCollar(rho_model, float(epsilon), (complex(P[0]), complex(P[1])))
    gap, where = collar_gradient_gap(collar, n_check)
    if gap > 0.25:
        raise CollarError(f"gradient gate fails: |d rho_eps - d phi| = {gap:.4g} > 1/4", where, gap)
    return SmoothedCollar(rho_model, float(epsilon), collar.base_point, gap)


@dataclass(frozen=True, eq=False)
class Slice:
    """Planar slice of the collar domain along the normal line through ``(., Q)``."""

    Q: complex
    domain: PlanarDomain
    arc_trace: BoundaryArcSet
    hole_count: int = 0


def _count_holes(inside: np.ndarray) -> int:
    outside = ~inside
    labels, n = ndimage.label(outside)
    border = set(np.unique(np.concatenate([labels[0], labels[-1], labels[:, 0], labels[:, -1]])))
    border.discard(0)
    return int(n - len(border))


def slice_domain(collar: SmoothedCollar, Q: complex, arc_radius: float | None = None,
                 n_boundary: int = N_CHECK) -> Slice:
    """The hole-filled planar slice ``{t : rho_eps(t, Q) < 0}`` through the collar.

    The slice boundary is found along rays from the centre of the tangent
    ball's slice; holes are counted by flood fill on an ``eps/64`` grid around
    the base point. ``arc_radius`` (default ``eps``) selects the boundary arcs
    that lie on the original boundary within that distance of the base point.
    """
    eps = collar.epsilon
    q = complex(Q)
    if abs(q - collar.base_point[1]) >= eps:
        raise GeometryError(f"Q={Q} lies outside the admissible neighbourhood |Q| < {eps}")
    r = collar.tangent_radius
    p1 = collar.base_point[0]
    ql = q - collar.base_point[1]
    c0 = p1 - r
    rad_ball = math.sqrt(r * r - abs(ql) ** 2)
    theta = np.linspace(0.0, TWO_PI, n_boundary, endpoint=False)
    if collar.is_ball:
        dom = make_disk(c0, rad_ball)
        pts = dom.point(theta)
    else:
        ray = np.exp(1j * theta)

        def g(R):
            return collar.rho_eps(_as_real4(c0 + R * ray, np.full(ray.shape, q)))

        probe = np.linspace(0.02, 2.0, 100)[:, None] * r
        neg = np.array([g(np.full(theta.shape, pr[0])) < 0 for pr in probe])
        flips = np.count_nonzero(np.diff(neg, axis=0), axis=0)
        if np.any(flips != 1):
            raise GeometryError("slice is not star-shaped about the tangent-ball centre")
        lo = np.zeros_like(theta)
        hi = np.full_like(theta, 2.0 * r)
        for _ in range(70):
            mid = 0.5 * (lo + hi)
            neg = g(mid) < 0
            lo = np.where(neg, mid, lo)
            hi = np.where(neg, hi, mid)
        pts = c0 + 0.5 * (lo + hi) * ray
        dom = domain_from_samples(pts)
    # flood-fill hole count around the base point
    h = eps / 64
    u = (np.arange(512) - 255.5) * h
    X, Y = np.meshgrid(u, u, indexing="ij")
    tt = p1 + X + 1j * Y
    inside = collar.rho_eps(_as_real4(tt, np.full(tt.shape, q))) < 0
    holes = _count_holes(inside)
    # arcs of the slice boundary lying on the original boundary near the base point
    a_r = eps if arc_radius is None else float(arc_radius)
    bpts = dom.point(theta)
    x4 = _as_real4(bpts, np.full(bpts.shape, q))
    on_boundary = np.abs(collar.ambient_rho(x4)) <= 1e-9 * max(1.0, r)
    near = np.linalg.norm(collar._local(x4), axis=-1) < a_r
    trace = arcs_from_mask(theta, on_boundary & near)
    return Slice(q, dom, trace, holes)


def ambient_boundary_distance(collar: SmoothedCollar, x: np.ndarray) -> np.ndarray:
    """Distance from ambient points to the zero set of the (unsmoothed) ``rho``."""
    x = np.atleast_2d(np.asarray(x, dtype=float))
    if collar.is_ball:
        r = collar.tangent_radius
        c = _as_real4(*collar.base_point) + np.array([-r, 0, 0, 0])
        return np.abs(r - np.linalg.norm(x - c, axis=-1))
    from scipy.optimize import minimize

    out = np.empty(len(x))
    for i, xi in enumerate(x):
        y = xi.copy()
        for _ in range(20):
            gr = collar.ambient_rho_grad(y)
            y = y - collar.ambient_rho(y) * gr / np.dot(gr, gr)
        res = minimize(lambda v: np.sum((v - xi) ** 2), y, jac=lambda v: 2 * (v - xi),
                       constraints=[{"type": "eq", "fun": lambda v: collar.ambient_rho(v),
                                     "jac": lambda v: collar.ambient_rho_grad(v)}],
                       method="SLSQP", options={"ftol": 1e-16, "maxiter": 200})
        out[i] = min(np.linalg.norm(res.x - xi), np.linalg.norm(y - xi))
    return out


def _projection_foot_distance(collar: SmoothedCollar, x: np.ndarray) -> np.ndarray:
    """|x - zeta| for the boundary point zeta sharing x's real-tangent coordinates."""
    from scipy.optimize import brentq

    out = np.empty(len(x))
    r = collar.tangent_radius
    for i, xi in enumerate(x):
        def f(s):
            y = xi.copy()
            y[0] = s
            return float(collar.ambient_rho(y))

        lo, hi = xi[0], xi[0] + 0.1 * r
        while f(hi) <= 0:
            hi += 0.1 * r
            if hi - xi[0] > 4 * r:
                raise GeometryError("no boundary point above the sample along the normal")
        if f(lo) >= 0:
            out[i] = 0.0
            continue
        s = brentq(f, lo, hi, xtol=1e-15, rtol=1e-15)
        out[i] = abs(s - xi[0])
    return out


def distance_equivalence_constant(collar: SmoothedCollar, sl: Slice, samples) -> float:
    """Empirical constant comparing slice-boundary, projection and boundary distances.

    Returns the maximum over samples ``t`` (points ``(t, Q)`` of the slice) of
    ``dist(z, dV_Q)/dist(z, dD)`` and ``dist(z, zeta)/dist(z, dD)``.
    """
    t = np.atleast_1d(np.asarray(samples, dtype=complex))
    if t.size == 0:
        raise GeometryError("empty sample set")
    x = _as_real4(t, np.full(t.shape, sl.Q))
    d_slice = sl.domain.dist_to_boundary(t)
    d_amb = ambient_boundary_distance(collar, x)
    d_foot = _projection_foot_distance(collar, x)
    if np.any(d_amb <= 0):
        raise GeometryError("sample lies on the boundary")
    return float(max(np.max(d_slice / d_amb), np.max(d_foot / d_amb)))
