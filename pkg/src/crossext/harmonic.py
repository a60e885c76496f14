"""Harmonic measure of planar domains relative to boundary arc sets.

Three routes are provided: the closed form on disks, walk-on-spheres Monte
Carlo, and a finite-difference Dirichlet solver on a uniform grid. The grid
solver uses the Shortley-Weller stencil, so boundary data sit at the exact
crossings of grid lines with the boundary.

Throughout, ``omega(z, A, D)`` denotes the harmonic measure of ``dD \\ A``
evaluated at ``z``: boundary data 0 on ``A`` and 1 on the rest.
"""

from __future__ import annotations

import csv
import io
import json
import math
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Sequence

import numpy as np
from scipy import integrate, sparse
from scipy.sparse import linalg as splinalg

from . import kernels
from .geometry import TWO_PI, BoundaryArcSet, GeometryError, PlanarDomain, tangent_ball_radius


class GridConvergenceError(RuntimeError):
    """Relaxation stopped at its sweep cap above the residual target."""

    def __init__(self, message, residual):
        super().__init__(message)
        self.residual = residual


class WosError(RuntimeError):
    """Too many walk-on-spheres paths hit the step cap."""


# ---------------------------------------------------------------------------
# grids
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class GridSpec:
    """Uniform grid of square cells; row ``i`` is the y index, column ``j`` the x index."""

    x0: float
    y0: float
    h: float
    nx: int
    ny: int

    @classmethod
    def around(cls, domain: PlanarDomain, resolution: int, pad: int = 2) -> "GridSpec":
        """Square cells with ``resolution`` cells along the longer bounding-box side."""
        if resolution < 8:
            raise ValueError("resolution must be at least 8")
        lo, hi = domain.bbox
        wx, wy = hi.real - lo.real, hi.imag - lo.imag
        h = max(wx, wy) / (resolution - 2 * pad)
        nx = int(math.ceil(wx / h - 1e-9)) + 2 * pad
        ny = int(math.ceil(wy / h - 1e-9)) + 2 * pad
        cx, cy = 0.5 * (lo.real + hi.real), 0.5 * (lo.imag + hi.imag)
        return cls(cx - 0.5 * nx * h, cy - 0.5 * ny * h, h, nx, ny)

    @property
    def shape(self) -> tuple[int, int]:
        return (self.ny, self.nx)

    def centers(self) -> np.ndarray:
        x = self.x0 + (np.arange(self.nx) + 0.5) * self.h
        y = self.y0 + (np.arange(self.ny) + 0.5) * self.h
        return x[None, :] + 1j * y[:, None]

    def cell_of(self, z) -> tuple[np.ndarray, np.ndarray]:
        z = np.asarray(z, dtype=complex)
        j = np.floor((z.real - self.x0) / self.h).astype(int)
        i = np.floor((z.imag - self.y0) / self.h).astype(int)
        return i, j


@dataclass(frozen=True, eq=False)
class MeasureGrid:
    """Cell-centred samples of a measure; NaN marks cells outside the domain.

    ``tolerance`` is the grid-error scale used by comparisons (one cell size).
    """

    spec: GridSpec
    values: np.ndarray
    tolerance: float = 0.0
    residual: float = 0.0
    sweeps: int = 0
    system: tuple | None = field(default=None, repr=False)
    meta: dict = field(default_factory=dict, repr=False)

    @property
    def bbox(self) -> tuple[complex, complex]:
        s = self.spec
        return complex(s.x0, s.y0), complex(s.x0 + s.nx * s.h, s.y0 + s.ny * s.h)

    @property
    def resolution(self) -> int:
        return max(self.spec.nx, self.spec.ny)

    @property
    def inside(self) -> np.ndarray:
        return ~np.isnan(self.values)

    def centers(self) -> np.ndarray:
        return self.spec.centers()

    def interpolate(self, z) -> np.ndarray:
        """Bilinear interpolation between cell centres, skipping OUTSIDE neighbours."""
        z = np.asarray(z, dtype=complex)
        s = self.spec
        fx = (z.real - s.x0) / s.h - 0.5
        fy = (z.imag - s.y0) / s.h - 0.5
        j0 = np.floor(fx).astype(int)
        i0 = np.floor(fy).astype(int)
        tx, ty = fx - j0, fy - i0
        num = np.zeros(z.shape)
        den = np.zeros(z.shape)
        for di, dj, w in ((0, 0, (1 - tx) * (1 - ty)), (0, 1, tx * (1 - ty)),
                          (1, 0, (1 - tx) * ty), (1, 1, tx * ty)):
            ii, jj = i0 + di, j0 + dj
            ok = (ii >= 0) & (ii < s.ny) & (jj >= 0) & (jj < s.nx)
            v = np.full(z.shape, np.nan)
            v[ok] = self.values[ii[ok], jj[ok]]
            good = ~np.isnan(v)
            num += np.where(good, w * np.where(good, v, 0.0), 0.0)
            den += np.where(good, w, 0.0)
        with np.errstate(invalid="ignore", divide="ignore"):
            return np.where(den > 0, num / den, np.nan)

    def stencil_residual(self) -> float:
        """Largest |(A u - b)/diag| over unknown cells of the discrete system."""
        if self.system is None:
            raise ValueError("grid carries no stencil")
        aE, aW, aN, aS, diag, rhs, unknown, u = self.system
        c = (slice(1, -1), slice(1, -1))
        lap = (rhs[c] + aE[c] * u[1:-1, 2:] + aW[c] * u[1:-1, :-2] + aN[c] * u[2:, 1:-1]
               + aS[c] * u[:-2, 1:-1]) / diag[c] - u[c]
        m = unknown[c].astype(bool)
        return float(np.abs(lap[m]).max()) if m.any() else 0.0

    def to_csv(self, path=None) -> str:
        """CSV with header ``x,y,value``; OUTSIDE cells omitted."""
        z = self.centers()
        m = self.inside
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["x", "y", "value"])
        for x, y, v in zip(z.real[m], z.imag[m], self.values[m]):
            w.writerow([repr(float(x)), repr(float(y)), repr(float(v))])
        text = buf.getvalue()
        if path is not None:
            with open(path, "w", newline="") as fh:
                fh.write(text)
        return text

    def with_values(self, values: np.ndarray, **kw) -> "MeasureGrid":
        return MeasureGrid(self.spec, values, kw.get("tolerance", self.tolerance),
                           kw.get("residual", self.residual), kw.get("sweeps", self.sweeps), None,
                           dict(kw.get("meta", self.meta)))


# ---------------------------------------------------------------------------
# boundary crossings
# ---------------------------------------------------------------------------

_DIRS = {"E": (0, 1), "W": (0, -1), "N": (1, 0), "S": (-1, 0)}
THETA_MIN = 1e-8


def segment_crossing(domain: PlanarDomain, p: np.ndarray, step: complex) -> tuple[np.ndarray, np.ndarray]:
    """First boundary crossing on segments ``p -> p + step`` leaving the domain.

    Returns the fraction ``s`` in (0, 1] of the step and the boundary parameter.
    """
    p = np.asarray(p, dtype=complex)
    if p.size == 0:
        return np.empty(0), np.empty(0)
    if domain.kind == "disk":
        w = p - domain.center
        a = abs(step) ** 2
        b = 2.0 * (np.conj(w) * step).real
        c = np.abs(w) ** 2 - domain.radius ** 2
        disc = np.sqrt(np.maximum(b * b - 4 * a * c, 0.0))
        s = (-b + disc) / (2 * a)
        s = np.clip(s, 0.0, 1.0)
        q = w + s * step
        return s, np.mod(np.angle(q), TWO_PI)
    lo = np.zeros(p.shape)
    hi = np.ones(p.shape)
    for _ in range(24):
        mid = 0.5 * (lo + hi)
        inside = domain.contains(p + mid * step)
        lo = np.where(inside, mid, lo)
        hi = np.where(inside, hi, mid)
    s = 0.5 * (lo + hi)
    t, _ = domain.nearest_param(p + s * step)
    # Newton on the transverse coordinate of gamma(t) - p relative to the step
    u = np.conj(step) / abs(step)
    for _ in range(6):
        g = (domain.point(t) - p) * u
        d = domain.deriv(t) * u
        dt = np.where(np.abs(d.imag) > 1e-14, g.imag / np.where(d.imag == 0, 1, d.imag), 0.0)
        t = t - np.clip(dt, -0.05, 0.05)
    s_new = ((domain.point(t) - p) * u).real / abs(step)
    ok = np.abs(s_new - s) < 4.0 / 2 ** 24 + 1e-12
    s = np.where(ok, s_new, s)
    return np.clip(s, 0.0, 1.0), np.mod(t, TWO_PI)


@dataclass
class Obstacle:
    """Cells carrying Dirichlet data, with a rule for the crossing on each stencil arm.

    ``crossing(p, step, i, j)`` receives unknown-cell centres ``p`` whose
    neighbour ``p + step`` lies in the obstacle and returns ``(theta, value)``.
    Without a rule the arm ends at the neighbour's centre with value
    ``values[neighbour]``.
    """

    mask: np.ndarray
    values: np.ndarray | float = 0.0
    crossing: Callable | None = None

    def arm(self, p, step, i, j, ni, nj):
        if self.crossing is not None:
            return self.crossing(p, step, i, j)
        v = self.values
        if np.ndim(v) == 0:
            return np.ones(p.shape), np.full(p.shape, float(v))
        return np.ones(p.shape), np.asarray(v)[ni, nj]


def domain_obstacle(domain: PlanarDomain, spec: GridSpec, boundary_value: Callable) -> Obstacle:
    """Exterior of ``domain`` with data ``boundary_value(t)`` at the crossing parameter."""
    outside = ~domain.contains(spec.centers())

    def crossing(p, step, i, j):
        s, t = segment_crossing(domain, p, step)
        return s, np.asarray(boundary_value(t), dtype=float)

    return Obstacle(outside, crossing=crossing)


def arc_data(arcs: BoundaryArcSet) -> Callable:
    """Indicator of the complement of ``arcs`` as a function of boundary parameter."""
    return lambda t: np.where(arcs.contains(t), 0.0, 1.0)


def solve_dirichlet(spec: GridSpec, obstacles: Sequence[Obstacle], *, solver: str = "sor",
                    omega: float | None = None, tol: float = 1e-10, max_sweeps: int = 200000,
                    initial: float | np.ndarray = 0.5, outside: np.ndarray | None = None,
                    singular: Callable | None = None) -> MeasureGrid:
    """Solve the discrete Dirichlet problem on cells not covered by any obstacle.

    Obstacle cells are reported as their Dirichlet value when they carry
    one, except cells in ``outside`` (default: the first obstacle), which
    are NaN. ``singular`` is a harmonic function subtracted from the data
    before the solve and added back afterwards.
    """
    ny, nx = spec.shape
    blocked = np.zeros((ny, nx), dtype=bool)
    owner = np.full((ny, nx), -1, dtype=int)
    for k, ob in enumerate(obstacles):
        fresh = ob.mask & ~blocked
        owner[fresh] = k
        blocked |= ob.mask
    unknown = ~blocked
    if unknown[0].any() or unknown[-1].any() or unknown[:, 0].any() or unknown[:, -1].any():
        raise GeometryError("unknown cells touch the grid border; pad the grid")
    z = spec.centers()
    theta = {}
    value = {}
    for name, (di, dj) in _DIRS.items():
        th = np.ones((ny, nx))
        val = np.zeros((ny, nx))
        nb_owner = np.full((ny, nx), -1, dtype=int)
        nb_owner[1:-1, 1:-1] = owner[1 + di:ny - 1 + di, 1 + dj:nx - 1 + dj]
        step = complex(dj * spec.h, di * spec.h)
        for k, ob in enumerate(obstacles):
            sel = unknown & (nb_owner == k)
            if not sel.any():
                continue
            i, j = np.nonzero(sel)
            t_k, v_k = ob.arm(z[i, j], step, i, j, i + di, j + dj)
            th[i, j] = np.maximum(t_k, THETA_MIN)
            if singular is not None:
                v_k = v_k - singular(z[i, j] + t_k * step)
            val[i, j] = v_k
        theta[name] = th
        value[name] = val
        theta[name + "_dir"] = nb_owner >= 0
    tE, tW, tN, tS = theta["E"], theta["W"], theta["N"], theta["S"]
    cE = 2.0 / (tE * (tE + tW))
    cW = 2.0 / (tW * (tE + tW))
    cN = 2.0 / (tN * (tN + tS))
    cS = 2.0 / (tS * (tN + tS))
    diag = 2.0 / (tE * tW) + 2.0 / (tN * tS)
    rhs = np.zeros((ny, nx))
    coeff = {}
    for name, c in (("E", cE), ("W", cW), ("N", cN), ("S", cS)):
        d = theta[name + "_dir"]
        rhs += np.where(d & unknown, c * value[name], 0.0)
        coeff[name] = np.where(d | ~unknown, 0.0, c)
    diag = np.where(unknown, diag, 1.0)
    rhs = np.where(unknown, rhs, 0.0)
    u = np.zeros((ny, nx))
    for k, ob in enumerate(obstacles):
        sel = owner == k
        if np.ndim(ob.values) == 0:
            u[sel] = float(ob.values)
        else:
            u[sel] = np.asarray(ob.values)[sel]
    u[unknown] = np.asarray(initial)[unknown] if np.ndim(initial) else float(initial)
    sweeps, res = 0, 0.0
    arrays = [np.ascontiguousarray(a, dtype=np.float64)
              for a in (coeff["E"], coeff["W"], coeff["N"], coeff["S"], diag, rhs)]
    if solver == "sor":
        n = max(nx, ny)
        w = omega if omega is not None else 2.0 / (1.0 + math.sin(math.pi / n))
        sweeps, res = kernels.sor_solve(u, *arrays, np.ascontiguousarray(unknown, dtype=np.uint8),
                                        float(w), float(tol), int(max_sweeps))
        if res > tol:
            raise GridConvergenceError(f"SOR stopped after {sweeps} sweeps with residual {res:.3e}", res)
    elif solver == "direct":
        u = _direct_solve(u, arrays, unknown)
        res = 0.0
    else:
        raise ValueError(f"unknown solver {solver!r}")
    out_mask = obstacles[0].mask if outside is None else outside
    system = (*arrays, unknown, u.copy())
    if singular is not None:
        u[unknown] += singular(z[unknown])
    values = np.where(out_mask, np.nan, u)
    return MeasureGrid(spec, values, spec.h, float(res), int(sweeps), system)


def _direct_solve(u, arrays, unknown):
    aE, aW, aN, aS, diag, rhs = arrays
    ny, nx = u.shape
    idx = np.full((ny, nx), -1, dtype=np.int64)
    n = int(unknown.sum())
    idx[unknown] = np.arange(n)
    rows, cols, data = [np.arange(n)], [np.arange(n)], [diag[unknown]]
    for a, (di, dj) in ((aE, (0, 1)), (aW, (0, -1)), (aN, (1, 0)), (aS, (-1, 0))):
        i, j = np.nonzero(unknown & (a != 0))
        rows.append(idx[i, j])
        cols.append(idx[i + di, j + dj])
        data.append(-a[i, j])
    A = sparse.csr_matrix((np.concatenate(data), (np.concatenate(rows), np.concatenate(cols))), shape=(n, n))
    sol = splinalg.spsolve(A.tocsc(), rhs[unknown])
    u = u.copy()
    u[unknown] = sol
    return u


def harmonic_measure_grid(domain: PlanarDomain, arcs: BoundaryArcSet, resolution: int, *,
                          solver: str = "sor", omega: float | None = None, tol: float = 1e-10,
                          max_sweeps: int = 200000, subtract_endpoints: bool = False) -> MeasureGrid:
    """Grid solution of omega(., A, D) with ``resolution`` cells across the domain.

    With ``subtract_endpoints`` the angle functions of the endpoint jumps are
    removed before the solve, which cures the O(1) error in cells next to
    arc endpoints.
    """
    if resolution < 32:
        raise ValueError("resolution must be at least 32")
    spec = GridSpec.around(domain, resolution)
    if arcs.full or arcs.empty:
        # constant boundary data: the discrete solution is that constant
        const = 0.0 if arcs.full else 1.0
        inside = domain.contains(spec.centers())
        return MeasureGrid(spec, np.where(inside, const, np.nan), spec.h)
    return solve_dirichlet(spec, [domain_obstacle(domain, spec, arc_data(arcs))], solver=solver,
                           omega=omega, tol=tol, max_sweeps=max_sweeps,
                           singular=endpoint_singularity(domain, arcs) if subtract_endpoints else None)


def endpoint_singularity(domain: PlanarDomain, arcs: BoundaryArcSet, scale: float = 1.0):
    """Sum of the angle functions that carry the data jumps at the arc endpoints.

    At an endpoint ``e`` with unit tangent ``u`` the term is
    ``jump * arg((z - e)/u) / pi`` with the branch cut along the outward
    normal, i.e. the half-plane solution with the same jump. Endpoints whose
    outward normal ray re-enters the domain are left out. Returns ``None``
    when no endpoint qualifies.
    """
    if arcs.full or arcs.empty:
        return None
    terms = []
    diam = domain.diameter
    s = np.geomspace(1e-9 * diam, 2.0 * diam, 400)
    for a, b in arcs.intervals:
        for t, jump in ((a, 1.0), (b, -1.0)):
            e = complex(domain.point(t))
            u = complex(domain.deriv(t))
            u /= abs(u)
            n_in = domain.orientation * 1j * u
            if domain.contains(e - s * n_in).any():
                continue
            terms.append((e, u, jump, domain.orientation))
    if not terms:
        return None

    def S(z):
        z = np.asarray(z, dtype=complex)
        out = np.zeros(z.shape)
        for e, u, jump, orient in terms:
            w = (z - e) / u
            if orient < 0:
                w = np.conj(w)
            th = np.mod(np.angle(w) + 0.5 * math.pi, TWO_PI) - 0.5 * math.pi
            out += jump * th / math.pi
        return scale * out

    return S


# ---------------------------------------------------------------------------
# closed form on disks
# ---------------------------------------------------------------------------


def harmonic_measure_disk_arc(z, arcs: BoundaryArcSet, *, center: complex = 0j, radius: float = 1.0,
                              method: str = "closed"):
    """omega(z, A, disk) from the angle subtended by each arc of ``A``.

    ``method="quadrature"`` integrates the Poisson kernel adaptively over the
    complementary arcs instead (absolute tolerance 1e-10).
    """
    z = np.asarray(z, dtype=complex)
    w = (z - center) / radius
    if np.any(np.abs(w) >= 1):
        raise GeometryError("point must lie strictly inside the disk")
    if arcs.full:
        return np.zeros(w.shape) if w.ndim else 0.0
    if method == "quadrature":
        out = np.vectorize(lambda x: _poisson_quad(x, arcs.complement()), otypes=[float])(w)
        return out if w.ndim else float(out)
    if method != "closed":
        raise ValueError(f"unknown method {method!r}")
    hit = np.zeros(w.shape)
    for a, b in arcs.intervals:
        ang = np.mod(np.angle((np.exp(1j * b) - w) / (np.exp(1j * a) - w)), TWO_PI)
        hit += (2.0 * ang - (b - a)) / TWO_PI
    out = np.clip(1.0 - hit, 0.0, 1.0)
    return out if w.ndim else float(out)


def _poisson_quad(w: complex, comp: BoundaryArcSet) -> float:
    if comp.full:
        return 1.0
    r2 = abs(w) ** 2

    def kern(t):
        return (1 - r2) / (TWO_PI * abs(np.exp(1j * t) - w) ** 2)

    tot = 0.0
    phi = math.atan2(w.imag, w.real)
    for a, b in comp.intervals:
        # break at the kernel peak so the adaptive rule sees it
        pts = [a + ((phi - a) % TWO_PI)] if 0 < (phi - a) % TWO_PI < b - a else None
        val, _ = integrate.quad(kern, a, b, points=pts, epsabs=1e-12, epsrel=1e-12, limit=400)
        tot += val
    return float(min(max(tot, 0.0), 1.0))


# ---------------------------------------------------------------------------
# walk on spheres
# ---------------------------------------------------------------------------


@dataclass(frozen=True)
class WosConfig:
    sample_count: int = 100_000
    shell_epsilon: float = 1e-4
    max_steps: int = 100_000
    seed: int = 0
    chunk: int = 8192

    def __post_init__(self):
        if self.sample_count < 1:
            raise ValueError("sample_count must be >= 1")
        if not self.shell_epsilon > 0:
            raise ValueError("shell_epsilon must be positive")
        if self.max_steps < 1:
            raise ValueError("max_steps must be >= 1")
        if not 0 <= self.seed < 2 ** 64:
            raise ValueError("seed must be a 64-bit unsigned integer")


@dataclass(frozen=True)
class MeasureEstimate:
    value: float
    stderr: float
    sample_count: int
    seed: int = 0
    failures: int = 0

    def to_json(self) -> str:
        return json.dumps({"value": self.value, "stderr": self.stderr, "n": self.sample_count,
                           "seed": self.seed}, sort_keys=True)


def _arc_arrays(arcs: BoundaryArcSet):
    if arcs.full:
        # every parameter except one irrational point lies in this arc
        return np.array([TWO_PI - 0.5]), np.array([TWO_PI + 1.0])
    return np.ascontiguousarray(arcs.starts), np.ascontiguousarray(arcs.lengths)


@lru_cache(maxsize=16)
def _polyline(domain: PlanarDomain, n_vertices: int = 16384, n_buckets: int = 256):
    from ._pykernels import _PolylineIndex

    vt = np.linspace(0.0, TWO_PI, n_vertices, endpoint=False)
    v = domain.point(vt)
    vx, vy = np.ascontiguousarray(v.real), np.ascontiguousarray(v.imag)
    lo, hi = domain.bbox
    hb = max(hi.real - lo.real, hi.imag - lo.imag) / (n_buckets - 4)
    x_lo, y_lo = lo.real - 2 * hb, lo.imag - 2 * hb
    nbx = int(math.ceil((hi.real - x_lo) / hb)) + 2
    nby = int(math.ceil((hi.imag - y_lo) / hb)) + 2
    ax, ay = vx, vy
    bx, by = np.roll(vx, -1), np.roll(vy, -1)
    i_lo = np.floor((np.minimum(ax, bx) - x_lo) / hb).astype(np.int64)
    i_hi = np.floor((np.maximum(ax, bx) - x_lo) / hb).astype(np.int64)
    j_lo = np.floor((np.minimum(ay, by) - y_lo) / hb).astype(np.int64)
    j_hi = np.floor((np.maximum(ay, by) - y_lo) / hb).astype(np.int64)
    seg_ids, bucket_ids = [], []
    span = int(max((i_hi - i_lo).max(), (j_hi - j_lo).max()))
    for di in range(span + 1):
        for dj in range(span + 1):
            ok = (i_lo + di <= i_hi) & (j_lo + dj <= j_hi)
            s = np.flatnonzero(ok)
            seg_ids.append(s)
            bucket_ids.append((i_lo[s] + di) * nby + (j_lo[s] + dj))
    seg_ids = np.concatenate(seg_ids)
    bucket_ids = np.concatenate(bucket_ids)
    order = np.lexsort((seg_ids, bucket_ids))
    segs = np.ascontiguousarray(seg_ids[order], dtype=np.int64)
    counts = np.bincount(bucket_ids, minlength=nbx * nby)
    start = np.ascontiguousarray(np.concatenate([[0], np.cumsum(counts)]), dtype=np.int64)
    cx = x_lo + (np.arange(nbx) + 0.5) * hb
    cy = y_lo + (np.arange(nby) + 0.5) * hb
    CX, CY = np.meshgrid(cx, cy, indexing="ij")
    dc, _, _ = _PolylineIndex(vx, vy).nearest(CX.ravel(), CY.ravel())
    dc = dc.reshape(nbx, nby)
    half = hb * math.sqrt(2) / 2
    dlow = np.ascontiguousarray(np.maximum(dc - half, 0.0))
    dup = np.ascontiguousarray(dc + half)
    return dict(vx=vx, vy=vy, vt=np.ascontiguousarray(vt), x_lo=x_lo, y_lo=y_lo, hb=hb,
                nbx=nbx, nby=nby, start=start, segs=segs, dlow=dlow, dup=dup, near=2 * hb)


def harmonic_measure_wos(z: complex, domain: PlanarDomain, arcs: BoundaryArcSet,
                         cfg: WosConfig = WosConfig(), workers: int = 1) -> MeasureEstimate:
    """Walk-on-spheres estimate of omega(z, A, D).

    Walk ``k`` draws its directions from a stream keyed by ``(seed, k)``, so
    the estimate does not depend on ``workers`` or chunking. Absorption at
    an arc endpoint counts toward the complement.
    """
    z = complex(z)
    r = tangent_ball_radius(domain)
    if not cfg.shell_epsilon < r / 10:
        raise ValueError(f"shell_epsilon must be below r/10 = {r / 10:g}")
    if not bool(domain.contains(z)):
        raise GeometryError("start point must lie inside the domain")
    a_start, a_len = _arc_arrays(arcs)
    n = cfg.sample_count
    chunks = [(k, min(cfg.chunk, n - k)) for k in range(0, n, cfg.chunk)]
    if domain.kind == "disk":
        c = domain.center

        def run(ch):
            return kernels.wos_disk(z.real, z.imag, c.real, c.imag, domain.radius, cfg.shell_epsilon,
                                    cfg.max_steps, cfg.seed, ch[0], ch[1], a_start, a_len)
    else:
        pl = _polyline(domain)

        def run(ch):
            return kernels.wos_polyline(z.real, z.imag, pl["vx"], pl["vy"], pl["vt"], pl["x_lo"],
                                        pl["y_lo"], pl["hb"], pl["nbx"], pl["nby"], pl["start"],
                                        pl["segs"], pl["dlow"], pl["dup"], pl["near"],
                                        cfg.shell_epsilon, cfg.max_steps, cfg.seed, ch[0], ch[1],
                                        a_start, a_len)
    if workers > 1:
        with ThreadPoolExecutor(workers) as pool:
            parts = list(pool.map(run, chunks))
    else:
        parts = [run(ch) for ch in chunks]
    exits = np.concatenate(parts)
    failures = int(np.count_nonzero(exits == 2))
    if failures > 1e-3 * n:
        raise WosError(f"{failures} of {n} walks exceeded max_steps={cfg.max_steps}")
    good = exits[exits != 2]
    m = good.size
    p = float(np.count_nonzero(good == 1)) / m
    se = math.sqrt(p * (1 - p) / m)
    return MeasureEstimate(p, se, n, cfg.seed, failures)


# ---------------------------------------------------------------------------
# Poisson kernel bounds
# ---------------------------------------------------------------------------


def disk_poisson_kernel(x, y, center: complex = 0j, radius: float = 1.0):
    """Poisson kernel of the disk w.r.t. arclength: (R^2 - |x-c|^2) / (2 pi R |x - y|^2)."""
    x = np.asarray(x, dtype=complex) - center
    y = np.asarray(y, dtype=complex) - center
    return (radius ** 2 - np.abs(x) ** 2) / (TWO_PI * radius * np.abs(x - y) ** 2)


@lru_cache(maxsize=8)
def _nystrom(domain: PlanarDomain, m: int):
    t = np.linspace(0.0, TWO_PI, m, endpoint=False)
    y = domain.point(t)
    dy = domain.deriv(t)
    speed = np.abs(dy)
    n_out = -domain.inward_normal(t)
    wts = speed * TWO_PI / m
    diff = y[None, :] - y[:, None]
    with np.errstate(divide="ignore", invalid="ignore"):
        K = (np.conj(n_out)[None, :] * diff).real / (TWO_PI * np.abs(diff) ** 2)
    K[np.diag_indices(m)] = domain.curvature(t) / (2 * TWO_PI)
    A = 0.5 * np.eye(m) + K * wts[None, :]
    lu = __import__("scipy.linalg", fromlist=["lu_factor"]).lu_factor(A.T)
    return t, y, n_out, wts, lu


def poisson_kernel_nystrom(domain: PlanarDomain, x, m: int = 1024):
    """Poisson kernel ``P(x, y_j)`` at quadrature nodes ``y_j`` by a double-layer Nystrom solve.

    Returns ``(y, P)`` with ``P`` of shape ``(len(x), m)`` (density w.r.t. arclength).
    """
    from scipy.linalg import lu_solve

    t, y, n_out, wts, lu = _nystrom(domain, m)
    x = np.atleast_1d(np.asarray(x, dtype=complex))
    diff = y[None, :] - x[:, None]
    kx = (np.conj(n_out)[None, :] * diff).real / (TWO_PI * np.abs(diff) ** 2)
    Z = lu_solve(lu, (kx * wts[None, :]).T)
    return y, Z.T / wts[None, :]


def poisson_bound_constant(domain: PlanarDomain, n_depth: int = 40) -> float:
    """Sampled sup of ``P(x, y) |x - y|^2 / dist(x, dD)``.

    Disks use the closed-form kernel; other domains use the Nystrom kernel at
    poles placed along inward normals at several depths.
    """
    if domain.kind == "disk":
        R = domain.radius
        rho = 1.0 - np.logspace(-8, 0, n_depth)
        ang = np.linspace(0.0, TWO_PI, 16, endpoint=False)
        x = domain.center + R * np.multiply.outer(rho, np.exp(1j * ang)).ravel()
        y = domain.point(np.linspace(0.0, TWO_PI, 64, endpoint=False))
        P = disk_poisson_kernel(x[:, None], y[None, :], domain.center, R)
        d = R - np.abs(x - domain.center)
        return float(np.max(P * np.abs(x[:, None] - y[None, :]) ** 2 / d[:, None]))
    r = tangent_ball_radius(domain)
    m = 1024
    h_node = domain.arclength() / m
    depths = np.array([0.1, 0.2, 0.35, 0.5, 0.75, 1.0]) * r
    depths = depths[depths >= 8 * h_node]
    tb = np.linspace(0.0, TWO_PI, 64, endpoint=False)
    x = (domain.point(tb)[None, :] + np.multiply.outer(depths, domain.inward_normal(tb))).ravel()
    x = x[domain.contains(x)]
    y, P = poisson_kernel_nystrom(domain, x, m)
    d = domain.dist_to_boundary(x)
    return float(np.max(P * np.abs(x[:, None] - y[None, :]) ** 2 / d[:, None]))


def certified_arc_constant(domain: PlanarDomain, arcs: BoundaryArcSet) -> float:
    """Constant for the arc-measure bound: Poisson constant times the length of dD minus A."""
    comp = arcs.complement()
    length = 0.0 if comp.empty else domain.arclength(None if comp.full else comp)
    return poisson_bound_constant(domain) * length


def arc_measure_bound(z, domain: PlanarDomain, arcs: BoundaryArcSet, C: float):
    """``C dist(z, dD) / dist(z, dD \\ A)^2``; +inf where the denominator vanishes."""
    z = np.asarray(z, dtype=complex)
    num = domain.dist_to_boundary(z)
    den = domain.dist_to_arcs(z, arcs.complement()) if not arcs.full else np.full(z.shape, np.inf)
    with np.errstate(divide="ignore", invalid="ignore"):
        out = np.where(den > 0, C * num / np.where(den > 0, den, 1.0) ** 2, np.inf)
    return out if z.ndim else float(out)
