"""Pure numpy versions of the compiled kernels in ``_ckernels.pyx``.

Signatures and return conventions match the compiled module exactly. The
walkers advance all paths in lockstep, so the per-walk random streams are the
same as the compiled loop consumes.
"""

import numpy as np
from scipy.spatial import cKDTree

BACKEND = "python"

TWO_PI = 2.0 * np.pi

_M1 = np.uint64(0x9E3779B97F4A7C15)
_M2 = np.uint64(0xBF58476D1CE4E5B9)
_M3 = np.uint64(0x94D049BB133111EB)


def _splitmix(z):
    z = np.asarray(z, dtype=np.uint64)
    with np.errstate(over="ignore"):
        z = z + _M1
        z = (z ^ (z >> np.uint64(30))) * _M2
        z = (z ^ (z >> np.uint64(27))) * _M3
    return z ^ (z >> np.uint64(31))


def _uniform(key, walks, step):
    with np.errstate(over="ignore"):
        h = _splitmix(_splitmix(key ^ _splitmix(walks)) + np.uint64(step))
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def counter_uniform(seed, walks, steps):
    """Uniform variates for (walk, step) pairs; same stream as the walkers."""
    key = _splitmix(np.uint64(seed))
    walks = np.asarray(walks, dtype=np.uint64)
    steps = np.asarray(steps, dtype=np.uint64)
    with np.errstate(over="ignore"):
        h = _splitmix(_splitmix(key ^ _splitmix(walks)) + steps)
    return (h >> np.uint64(11)).astype(np.float64) * (1.0 / 9007199254740992.0)


def _residual(u, aE, aW, aN, aS, diag, rhs, unknown):
    gs = _gauss_seidel_value(u, aE, aW, aN, aS, diag, rhs)
    r = np.abs(gs - u[1:-1, 1:-1])[unknown[1:-1, 1:-1]]
    return float(r.max()) if r.size else 0.0


def _gauss_seidel_value(u, aE, aW, aN, aS, diag, rhs):
    c = (slice(1, -1), slice(1, -1))
    return (rhs[c] + aE[c] * u[1:-1, 2:] + aW[c] * u[1:-1, :-2]
            + aN[c] * u[2:, 1:-1] + aS[c] * u[:-2, 1:-1]) / diag[c]


def sor_solve(u, aE, aW, aN, aS, diag, rhs, unknown, omega, tol, max_sweeps, check_every=10):
    """Red-black SOR; same contract as the compiled kernel."""
    unknown = np.asarray(unknown, dtype=bool)
    ny, nx = u.shape
    ii, jj = np.meshgrid(np.arange(1, ny - 1), np.arange(1, nx - 1), indexing="ij")
    inner = unknown[1:-1, 1:-1]
    colors = [inner & ((ii + jj) % 2 == 0), inner & ((ii + jj) % 2 == 1)]
    # the compiled loop starts with cells where (i + j) is even
    res = _residual(u, aE, aW, aN, aS, diag, rhs, unknown)
    if res <= tol:
        return 0, res
    sweep = 0
    view = u[1:-1, 1:-1]
    while sweep < max_sweeps:
        for mask in colors:
            gs = _gauss_seidel_value(u, aE, aW, aN, aS, diag, rhs)
            view[mask] += omega * (gs[mask] - view[mask])
        sweep += 1
        if sweep % check_every == 0:
            res = _residual(u, aE, aW, aN, aS, diag, rhs, unknown)
            if res <= tol:
                break
    if sweep % check_every != 0:
        res = _residual(u, aE, aW, aN, aS, diag, rhs, unknown)
    return sweep, res


def _in_arcs(t, arc_start, arc_len):
    t = np.asarray(t, dtype=float)
    hit = np.zeros(t.shape, dtype=bool)
    for a, length in zip(arc_start, arc_len):
        d = np.fmod(t - a, TWO_PI)
        d = np.where(d < 0, d + TWO_PI, d)
        hit |= (d > 0.0) & (d < length)
    return hit


def wos_disk(x0, y0, cx, cy, R, eps, max_steps, seed, first_walk, n_walks, arc_start, arc_len):
    """Walk-on-spheres exits for a disk; 1 = complement, 0 = arcs, 2 = failure."""
    key = _splitmix(np.uint64(seed))
    walks = np.arange(first_walk, first_walk + n_walks, dtype=np.uint64)
    px = np.full(n_walks, float(x0))
    py = np.full(n_walks, float(y0))
    out = np.full(n_walks, 2, dtype=np.uint8)
    active = np.arange(n_walks)
    for step in range(max_steps):
        if active.size == 0:
            break
        d = R - np.sqrt((px[active] - cx) ** 2 + (py[active] - cy) ** 2)
        done = d < eps
        if done.any():
            idx = active[done]
            t = np.arctan2(py[idx] - cy, px[idx] - cx)
            t = np.where(t < 0, t + TWO_PI, t)
            out[idx] = np.where(_in_arcs(t, arc_start, arc_len), 0, 1)
            active = active[~done]
            d = d[~done]
        if active.size == 0:
            break
        th = TWO_PI * _uniform(key, walks[active], step)
        px[active] += d * np.cos(th)
        py[active] += d * np.sin(th)
    return out


class _PolylineIndex:
    """Nearest-segment queries for a closed polyline via a vertex k-d tree."""

    def __init__(self, vx, vy, k=8):
        self.vx = np.asarray(vx)
        self.vy = np.asarray(vy)
        self.tree = cKDTree(np.column_stack([self.vx, self.vy]))
        self.k = min(k, len(self.vx))

    def nearest(self, px, py):
        nv = len(self.vx)
        _, idx = self.tree.query(np.column_stack([px, py]), k=self.k)
        idx = np.atleast_2d(idx)
        cand = np.concatenate([idx, (idx - 1) % nv], axis=1)
        ax, ay = self.vx[cand], self.vy[cand]
        bx, by = self.vx[(cand + 1) % nv], self.vy[(cand + 1) % nv]
        dx, dy = bx - ax, by - ay
        L2 = dx * dx + dy * dy
        s = np.clip(((px[:, None] - ax) * dx + (py[:, None] - ay) * dy) / np.where(L2 > 0, L2, 1.0), 0.0, 1.0)
        qx = ax + s * dx - px[:, None]
        qy = ay + s * dy - py[:, None]
        d2 = qx * qx + qy * qy
        # exact ties go to the lowest segment index
        order = np.lexsort((cand, d2), axis=1)[:, 0]
        rows = np.arange(len(px))
        return np.sqrt(d2[rows, order]), cand[rows, order], s[rows, order]


def wos_polyline(x0, y0, vx, vy, vt, x_lo, y_lo, hb, nbx, nby, start, segs, dlow, dup,
                 near, eps, max_steps, seed, first_walk, n_walks, arc_start, arc_len):
    """Walk-on-spheres exits for a polyline-bounded domain; same contract as compiled."""
    index = _PolylineIndex(vx, vy)
    nv = len(vx)
    key = _splitmix(np.uint64(seed))
    walks = np.arange(first_walk, first_walk + n_walks, dtype=np.uint64)
    px = np.full(n_walks, float(x0))
    py = np.full(n_walks, float(y0))
    out = np.full(n_walks, 2, dtype=np.uint8)
    active = np.arange(n_walks)
    for step in range(max_steps):
        if active.size == 0:
            break
        ci = ((px[active] - x_lo) / hb).astype(np.int64)
        cj = ((py[active] - y_lo) / hb).astype(np.int64)
        d = dlow[ci, cj].copy()
        close = d < near
        if close.any():
            sub = active[close]
            dist, seg, s = index.nearest(px[sub], py[sub])
            d[close] = dist
            hit = dist < eps
            if hit.any():
                seg_h, s_h = seg[hit], s[hit]
                t0 = vt[seg_h]
                t1 = np.where(seg_h + 1 < nv, vt[np.minimum(seg_h + 1, nv - 1)], TWO_PI)
                t = t0 + s_h * (t1 - t0)
                t = np.where(t >= TWO_PI, t - TWO_PI, t)
                out[sub[hit]] = np.where(_in_arcs(t, arc_start, arc_len), 0, 1)
                keep = np.ones(active.size, dtype=bool)
                keep[np.flatnonzero(close)[hit]] = False
                active = active[keep]
                d = d[keep]
        if active.size == 0:
            break
        th = TWO_PI * _uniform(key, walks[active], step)
        px[active] += d * np.cos(th)
        py[active] += d * np.sin(th)
    return out


def jacobi_eigh(a_in, tol=1e-15, max_sweeps=60):
    """Cyclic Jacobi eigen-decomposition with a diagonal-relative threshold."""
    a = np.array(a_in, dtype=np.float64, copy=True)
    n = a.shape[0]
    v = np.eye(n)
    sweep = 0
    while sweep < max_sweeps:
        rotated = False
        for p in range(n - 1):
            for q in range(p + 1, n):
                apq = a[p, q]
                if abs(apq) <= tol * np.sqrt(abs(a[p, p] * a[q, q])):
                    continue
                rotated = True
                app, aqq = a[p, p], a[q, q]
                theta = (aqq - app) / (2.0 * apq)
                t = 1.0 / (abs(theta) + np.sqrt(theta * theta + 1.0))
                if theta < 0:
                    t = -t
                c = 1.0 / np.sqrt(t * t + 1.0)
                s = t * c
                colp, colq = a[:, p].copy(), a[:, q].copy()
                a[:, p] = c * colp - s * colq
                a[:, q] = s * colp + c * colq
                rowp, rowq = a[p, :].copy(), a[q, :].copy()
                a[p, :] = c * rowp - s * rowq
                a[q, :] = s * rowp + c * rowq
                a[p, q] = a[q, p] = 0.0
                a[p, p] = app - t * apq
                a[q, q] = aqq + t * apq
                vp, vq = v[:, p].copy(), v[:, q].copy()
                v[:, p] = c * vp - s * vq
                v[:, q] = s * vp + c * vq
        sweep += 1
        if not rotated:
            break
    return np.diag(a).copy(), v, sweep
