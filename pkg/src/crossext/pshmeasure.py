"""Relative extremal functions of planar sets and the constructions built on them.

In one complex variable the plurisubharmonic measure of a set is a harmonic
measure, so everything here reduces to Dirichlet problems solved by
:mod:`crossext.harmonic`. Two kinds of plural set are supported: interior
subsets (a :class:`PlanarDomain` inside the domain, or a cell mask) and
open boundary arcs.
"""

from __future__ import annotations

import math
import warnings
from dataclasses import dataclass, field
from typing import Callable, Sequence, Union

import numpy as np
from scipy import ndimage

from .geometry import (TWO_PI, BoundaryArcSet, GeometryError, PlanarDomain, SmoothedCollar,
                       slice_domain)
from .harmonic import (GridSpec, MeasureGrid, Obstacle, WosConfig, arc_data, domain_obstacle,
                       harmonic_measure_disk_arc, harmonic_measure_grid, harmonic_measure_wos,
                       segment_crossing, solve_dirichlet)

Plural = Union[BoundaryArcSet, PlanarDomain, np.ndarray, Callable]


class ExhaustionError(ValueError):
    """An exhaustion sequence failed its monotonicity or containment checks."""


# ---------------------------------------------------------------------------
# obstacle builders
# ---------------------------------------------------------------------------


def _entry_crossing(domain: PlanarDomain, value: float):
    """Crossing rule for arms that enter ``domain`` from outside."""

    def crossing(p, step, i, j):
        s_back, _ = segment_crossing(domain, p + step, -step)
        return 1.0 - s_back, np.full(p.shape, value)

    return crossing


def _subset_obstacle(subset, spec: GridSpec, domain: PlanarDomain) -> Obstacle:
    z = spec.centers()
    if isinstance(subset, PlanarDomain):
        mask = subset.contains(z) | (subset.dist_to_boundary(z) == 0)
        return Obstacle(mask & domain.contains(z), 0.0, _entry_crossing(subset, 0.0))
    if callable(subset):
        mask = np.asarray(subset(z), dtype=bool)
    else:
        mask = np.asarray(subset, dtype=bool)
        if mask.shape != spec.shape:
            raise GeometryError(f"subset mask shape {mask.shape} differs from grid {spec.shape}")
    return Obstacle(mask & domain.contains(z), 0.0)


def measure_obstacles(domain: PlanarDomain, plural: Plural, spec: GridSpec) -> list[Obstacle]:
    """Obstacles for omega(., plural, domain): exterior first, then an interior subset if any."""
    if isinstance(plural, BoundaryArcSet):
        return [domain_obstacle(domain, spec, arc_data(plural))]
    return [domain_obstacle(domain, spec, lambda t: np.ones(np.shape(t))),
            _subset_obstacle(plural, spec, domain)]


# ---------------------------------------------------------------------------
# Case I and Case II measures
# ---------------------------------------------------------------------------


def relative_extremal_interior(domain: PlanarDomain, subset, resolution: int, *, solver: str = "sor",
                               tol: float = 1e-10) -> MeasureGrid:
    """omega(., E, D) for an interior set ``E``: 0 on ``E``, 1 on ``dD``, harmonic between.

    ``subset`` may be a :class:`PlanarDomain` (closed set; exact crossings on
    its boundary), a predicate on complex cell centres, or a cell mask on the
    grid ``GridSpec.around(domain, resolution)``.
    """
    spec = GridSpec.around(domain, resolution)
    obs = measure_obstacles(domain, subset, spec)
    if not obs[1].mask.any():
        raise GeometryError("subset covers no grid cell")
    inside = domain.contains(spec.centers())
    if not (inside & ~obs[1].mask).any():
        return MeasureGrid(spec, np.where(inside, 0.0, np.nan), spec.h)
    return solve_dirichlet(spec, obs, solver=solver, tol=tol)


def boundary_measure(domain: PlanarDomain, arcs: BoundaryArcSet, method: str = "grid",
                     resolution: int = 256, cfg: WosConfig | None = None) -> MeasureGrid:
    """omega(., A, D) sampled at cell centres by the chosen method.

    ``closed-form`` needs a disk; ``wos`` runs one estimate per cell and is
    meant for coarse grids.
    """
    if method == "grid":
        return harmonic_measure_grid(domain, arcs, resolution)
    spec = GridSpec.around(domain, resolution)
    z = spec.centers()
    inside = domain.contains(z)
    vals = np.full(spec.shape, np.nan)
    if method == "closed-form":
        if domain.kind != "disk":
            raise GeometryError("closed form is available for disks only")
        vals[inside] = harmonic_measure_disk_arc(z[inside], arcs, center=domain.center,
                                                 radius=domain.radius)
        return MeasureGrid(spec, vals, 0.0)
    if method == "wos":
        cfg = cfg or WosConfig(sample_count=4000)
        est = [harmonic_measure_wos(p, domain, arcs, cfg) for p in z[inside]]
        vals[inside] = [e.value for e in est]
        se = max((e.stderr for e in est), default=0.0)
        return MeasureGrid(spec, vals, 6 * se)
    raise ValueError(f"unknown method {method!r}")


# ---------------------------------------------------------------------------
# sublevel sets
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class SublevelDomain:
    """Connected component of ``{omega < 1 - epsilon}`` on the parent grid (4-connectivity)."""

    epsilon: float
    parent: MeasureGrid
    mask: np.ndarray
    component_id: int

    @property
    def level(self) -> float:
        return 1.0 - self.epsilon

    def to_csv(self) -> str:
        return _mask_csv(self.parent.spec, self.mask)


def sublevel_domain(measure: MeasureGrid, epsilon: float, seed_point: complex) -> SublevelDomain:
    """Flood-fill the sublevel component through ``seed_point``."""
    if not 0 <= epsilon < 1:
        raise ValueError("epsilon must lie in [0, 1)")
    level = 1.0 - epsilon
    vals = measure.values
    below = ~np.isnan(vals) & (np.nan_to_num(vals, nan=2.0) < level)
    i, j = measure.spec.cell_of(seed_point)
    i, j = int(i), int(j)
    if not (0 <= i < vals.shape[0] and 0 <= j < vals.shape[1]) or not below[i, j]:
        raise GeometryError(f"seed point {seed_point} is not in the sublevel set omega < {level:g}")
    labels, _ = ndimage.label(below)
    cid = int(labels[i, j])
    return SublevelDomain(float(epsilon), measure, labels == cid, cid)


def _level_obstacle(parent: np.ndarray, mask: np.ndarray, level: float, value: float = 1.0) -> Obstacle:
    """Cells outside a sublevel component; arms end where the parent crosses ``level``."""
    ny, nx = parent.shape

    def crossing(p, step, i, j):
        di = int(round(step.imag / abs(step)))
        dj = int(round(step.real / abs(step)))
        u0 = parent[i, j]
        u1 = parent[i + di, j + dj]
        with np.errstate(divide="ignore", invalid="ignore"):
            th = (level - u0) / (u1 - u0)
        th = np.where(np.isfinite(th) & (u1 > level), np.clip(th, 0.0, 1.0), 1.0)
        return th, np.full(p.shape, value)

    return Obstacle(~mask, value, crossing)


def _solve_on_sublevel(domain: PlanarDomain, plural: Plural, parent: MeasureGrid, sub: SublevelDomain,
                       solver: str = "sor") -> MeasureGrid:
    spec = parent.spec
    obs = measure_obstacles(domain, plural, spec)
    inside = domain.contains(spec.centers())
    others = inside & ~sub.mask
    for ob in obs[1:]:
        others &= ~ob.mask
    level = _level_obstacle(np.nan_to_num(parent.values, nan=1.0), ~others, sub.level)
    outside = ~(sub.mask | np.logical_or.reduce([ob.mask for ob in obs[1:]] + [np.zeros(spec.shape, bool)]))
    outside |= ~inside
    return solve_dirichlet(spec, obs + [level], solver=solver, outside=outside)


def rescale_identity_residual(domain: PlanarDomain, plural: Plural, epsilon: float, resolution: int,
                              *, parent: MeasureGrid | None = None, solver: str = "sor",
                              endpoint_margin: float = 2.0) -> float:
    """Sup over the component of ``|omega(., A, D_eps) - omega(., A, D) / (1 - eps)|``.

    The component is the one containing the minimum of the parent field
    (next to the plural set). On the new level boundary the data are 1.
    Cells within ``endpoint_margin`` cell sizes of an arc endpoint are left
    out: the indicator data jump there and the cell next to the jump carries
    an O(1) error at every resolution.
    """
    if not 0 <= epsilon < 1:
        raise ValueError("epsilon must lie in [0, 1)")
    if epsilon == 0:
        return 0.0
    if parent is None:
        if isinstance(plural, BoundaryArcSet):
            parent = harmonic_measure_grid(domain, plural, resolution, solver=solver)
        else:
            parent = relative_extremal_interior(domain, plural, resolution, solver=solver)
    return _rescaled_pair(domain, plural, epsilon, parent, solver, endpoint_margin)[0]


def _rescaled_pair(domain, plural, epsilon, parent, solver, endpoint_margin=0.0):
    vals = parent.values
    obs = measure_obstacles(domain, plural, parent.spec)
    free = parent.inside.copy()
    for ob in obs[1:]:
        free &= ~ob.mask
    k = np.nanargmin(np.where(free, vals, np.nan))
    seed = parent.centers().ravel()[k]
    sub = sublevel_domain(parent.with_values(np.where(free, vals, np.nan)), epsilon, seed)
    omega_eps = _solve_on_sublevel(domain, plural, parent, sub, solver)
    common = sub.mask.copy()
    if isinstance(plural, BoundaryArcSet) and endpoint_margin > 0 and not plural.full:
        ends = domain.point(np.array([t for iv in plural.intervals for t in iv]))
        z = parent.centers()
        near = np.min(np.abs(z[..., None] - ends), axis=-1) <= endpoint_margin * parent.spec.h
        common &= ~near
    diff = np.abs(omega_eps.values[common] - vals[common] / (1.0 - epsilon))
    return float(diff.max()), omega_eps, sub


# ---------------------------------------------------------------------------
# boundary behaviour and tubes
# ---------------------------------------------------------------------------


def lipschitz_boundary_bound(measure: MeasureGrid, arcs: BoundaryArcSet, K: BoundaryArcSet,
                             domain: PlanarDomain, radius: float | None = None) -> float:
    """Least ``C`` with ``omega(z) <= C dist(z, K)`` over grid cells (within ``radius`` of ``K``).

    Returns +inf with a warning when ``K`` is not compactly inside ``A``.
    """
    if not K.is_compactly_inside(arcs):
        warnings.warn("K is not compactly contained in A; the Lipschitz bound does not exist",
                      RuntimeWarning, stacklevel=2)
        return math.inf
    m = measure.inside
    z = measure.centers()[m]
    d = domain.dist_to_arcs(z, K)
    sel = d > 0
    if radius is not None:
        sel &= d <= radius
    if not sel.any():
        return 0.0
    return float(np.max(measure.values[m][sel] / d[sel]))


@dataclass(frozen=True, eq=False)
class TubeSet:
    """Grid realization of ``{z in D : C_k dist(z, A_k) < delta for some k}``."""

    delta: float
    constants: tuple
    inner_arcs: tuple
    mask: np.ndarray
    spec: GridSpec

    def to_csv(self) -> str:
        return _mask_csv(self.spec, self.mask)


TUBE_SHRINK = (0.25, 0.125, 0.0625)


def tube_set(domain: PlanarDomain, arcs: BoundaryArcSet, delta: float, measure: MeasureGrid) -> TubeSet:
    """Tube around three nested inner arc sets of ``A`` with fitted Lipschitz constants.

    Each ``C_k`` is at least 1, so tube cells lie within ``delta`` of ``A``.
    """
    if not 0 < delta < 1:
        raise ValueError("delta must lie in (0, 1)")
    z = measure.centers()
    inside = measure.inside
    mask = np.zeros(inside.shape, dtype=bool)
    consts, inner = [], []
    for frac in TUBE_SHRINK:
        Ak = arcs.shrink(frac)
        Ck = max(lipschitz_boundary_bound(measure, arcs, Ak, domain), 1.0)
        d = np.full(inside.shape, np.inf)
        d[inside] = domain.dist_to_arcs(z[inside], Ak)
        mask |= inside & (Ck * d < delta)
        consts.append(Ck)
        inner.append(Ak)
    return TubeSet(float(delta), tuple(consts), tuple(inner), mask, measure.spec)


def tube_measure(domain: PlanarDomain, arcs: BoundaryArcSet, tube: TubeSet, *, solver: str = "sor") -> MeasureGrid:
    """omega(., T, D): zero on tube cells and on ``A``, one on the rest of ``dD``."""
    spec = tube.spec
    obs = [domain_obstacle(domain, spec, arc_data(arcs)), Obstacle(tube.mask, 0.0)]
    return solve_dirichlet(spec, obs, solver=solver)


# ---------------------------------------------------------------------------
# exhaustions
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class Exhaustion:
    """Increasing subdomains ``Omega_k`` of ``domain`` with arc sets ``A_k`` on ``dOmega``.

    Each region is a :class:`PlanarDomain` contained in ``domain`` or a
    boolean cell mask on ``GridSpec.around(domain, resolution)`` (e.g. a
    sublevel component), whose edge carries the data 1 unless ``levels``
    supplies a parent field and level for exact crossings.
    """

    domain: PlanarDomain
    regions: tuple
    arcs: tuple
    levels: tuple = ()

    def __post_init__(self):
        if len(self.regions) != len(self.arcs) or not self.regions:
            raise ExhaustionError("need one arc set per region and at least one region")
        for a1, a2 in zip(self.arcs, self.arcs[1:]):
            t = a1.sample(512, closed=False)
            if t.size and not a2.contains(t).all():
                raise ExhaustionError("arc sets must increase")


def _region_obstacles(ex: Exhaustion, k: int, spec: GridSpec) -> tuple[list[Obstacle], np.ndarray]:
    dom = ex.domain
    z = spec.centers()
    inside = dom.contains(z)
    arcs = ex.arcs[k]
    data = arc_data(arcs)
    region = ex.regions[k]
    if isinstance(region, PlanarDomain):
        scale = dom.diameter

        def value(t):
            q = region.point(t)
            tq, dq = dom.nearest_param(q)
            on = dq <= 1e-9 * scale
            return np.where(on, data(tq), 1.0)

        rin = region.contains(z)
        if (rin & ~inside).any():
            raise ExhaustionError(f"region {k} leaves the domain")
        return [domain_obstacle(region, spec, value)], rin
    mask = np.asarray(region, dtype=bool) & inside
    obs = [domain_obstacle(dom, spec, data)]
    if ex.levels:
        parent, level = ex.levels[k]
        obs.append(_level_obstacle(np.nan_to_num(parent, nan=1.0), mask | ~inside, level))
    else:
        obs.append(Obstacle(inside & ~mask, 1.0))
    return obs, mask


def measure_via_exhaustion(ex: Exhaustion, resolution: int, *, tol: float = 1e-4,
                           solver: str = "sor") -> MeasureGrid:
    """Limit of ``omega(., A_k, Omega_k)`` (extended by 1 off ``Omega_k``).

    Stops when successive terms differ by less than ``tol`` in sup norm or
    the sequence ends; ``meta["converged"]`` records which. Raises
    ``ExhaustionError`` when a term exceeds its predecessor by more than
    twice the grid error.
    """
    spec = GridSpec.around(ex.domain, resolution)
    inside = ex.domain.contains(spec.centers())
    prev, prev_mask = None, None
    diffs = []
    for k in range(len(ex.regions)):
        obs, rmask = _region_obstacles(ex, k, spec)
        if prev_mask is not None and (prev_mask & ~rmask).any():
            raise ExhaustionError(f"region {k} does not contain region {k - 1}")
        g = solve_dirichlet(spec, obs, solver=solver, outside=~inside)
        vals = np.where(inside & ~rmask, 1.0, g.values)
        vals = np.where(inside, vals, np.nan)
        cur = MeasureGrid(spec, vals, spec.h, g.residual, g.sweeps, None, {"term": k})
        if prev is not None:
            step = cur.values[inside] - prev.values[inside]
            if step.max() > 2 * spec.h:
                raise ExhaustionError(f"term {k} increases by {step.max():.3g}; exhaustion is not monotone")
            diffs.append(float(np.abs(step).max()))
            if diffs[-1] < tol:
                cur.meta.update(converged=True, diffs=diffs)
                return cur
        prev, prev_mask = cur, rmask
    prev.meta.update(converged=len(ex.regions) == 1, diffs=diffs)
    return prev


def sublevel_exhaustion(domain: PlanarDomain, arcs: BoundaryArcSet, resolution: int,
                        epsilons: Sequence[float], parent: MeasureGrid | None = None) -> Exhaustion:
    """Exhaustion by sublevel components ``D_eps`` for decreasing ``eps`` with fixed ``A``."""
    parent = parent or harmonic_measure_grid(domain, arcs, resolution)
    k = np.nanargmin(parent.values)
    seed = parent.centers().ravel()[k]
    regions, levels = [], []
    for e in epsilons:
        sub = sublevel_domain(parent, e, seed)
        regions.append(sub.mask)
        levels.append((parent.values, sub.level))
    return Exhaustion(domain, tuple(regions), tuple(arcs for _ in regions), tuple(levels))


# ---------------------------------------------------------------------------
# slices of the collar
# ---------------------------------------------------------------------------


def slice_upper_bound(point, collar: SmoothedCollar, arc_radius: float, resolution: int = 256) -> float:
    """Harmonic measure of the slice through ``point`` relative to its arc trace.

    ``point = (z1, z2)``; the slice is taken at ``Q = z2`` and the arc trace
    is the part of the slice boundary on the original boundary within
    ``arc_radius`` of the base point.
    """
    z1, z2 = complex(point[0]), complex(point[1])
    sl = slice_domain(collar, z2, arc_radius=arc_radius)
    dom = sl.domain
    if not bool(dom.contains(z1)):
        raise GeometryError("point lies in no slice of the collar")
    if sl.arc_trace.empty:
        return 1.0
    if dom.kind == "disk":
        return float(harmonic_measure_disk_arc(z1, sl.arc_trace, center=dom.center, radius=dom.radius))
    g = harmonic_measure_grid(dom, sl.arc_trace, resolution)
    return float(g.interpolate(z1))


def _mask_csv(spec: GridSpec, mask: np.ndarray) -> str:
    z = spec.centers()
    lines = ["x,y,inside"]
    for x, y, m in zip(z.real.ravel(), z.imag.ravel(), mask.ravel()):
        lines.append(f"{x!r},{y!r},{int(m)}")
    return "\n".join(lines) + "\n"
