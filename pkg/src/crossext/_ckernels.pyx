# cython: language_level=3, boundscheck=False, wraparound=False, cdivision=True
"""Compiled inner loops: SOR relaxation, walk-on-spheres, Jacobi rotations.

Each routine has a numpy twin in ``_pykernels`` with the same signature;
``crossext.kernels`` picks one at import time.
"""

import numpy as np
cimport numpy as cnp
from libc.math cimport sqrt, fabs, cos, sin, atan2, fmod, M_PI, ceil
from libc.stdint cimport uint64_t, int64_t

cnp.import_array()

BACKEND = "cython"

cdef double TWO_PI = 2.0 * M_PI


# ---------------------------------------------------------------------------
# SOR relaxation of a 5-point stencil system
# ---------------------------------------------------------------------------

cdef double _residual(double[:, ::1] u, double[:, ::1] aE, double[:, ::1] aW,
                      double[:, ::1] aN, double[:, ::1] aS, double[:, ::1] diag,
                      double[:, ::1] rhs, unsigned char[:, ::1] unknown) nogil:
    cdef Py_ssize_t i, j
    cdef Py_ssize_t ny = u.shape[0], nx = u.shape[1]
    cdef double r, rmax = 0.0
    for i in range(1, ny - 1):
        for j in range(1, nx - 1):
            if unknown[i, j]:
                r = (rhs[i, j] + aE[i, j] * u[i, j + 1] + aW[i, j] * u[i, j - 1]
                     + aN[i, j] * u[i + 1, j] + aS[i, j] * u[i - 1, j]) / diag[i, j] - u[i, j]
                r = fabs(r)
                if r > rmax:
                    rmax = r
    return rmax


def sor_solve(double[:, ::1] u, double[:, ::1] aE, double[:, ::1] aW,
              double[:, ::1] aN, double[:, ::1] aS, double[:, ::1] diag,
              double[:, ::1] rhs, unsigned char[:, ::1] unknown,
              double omega, double tol, long max_sweeps, long check_every=10):
    """Red-black SOR on ``diag*u = rhs + sum(a_dir * u_neighbour)``.

    ``u`` is updated in place. Returns ``(sweeps, residual)`` where the
    residual is the largest normalized correction ``|Gu - u|``.
    Border rows and columns must not be unknowns.
    """
    cdef Py_ssize_t i, j, jstart
    cdef Py_ssize_t ny = u.shape[0], nx = u.shape[1]
    cdef long sweep = 0
    cdef int color
    cdef double gs, res = _residual(u, aE, aW, aN, aS, diag, rhs, unknown)
    if res <= tol:
        return 0, res
    with nogil:
        while sweep < max_sweeps:
            for color in range(2):
                for i in range(1, ny - 1):
                    jstart = 1 + ((i + 1 + color) & 1)
                    for j in range(jstart, nx - 1, 2):
                        if unknown[i, j]:
                            gs = (rhs[i, j] + aE[i, j] * u[i, j + 1] + aW[i, j] * u[i, j - 1]
                                  + aN[i, j] * u[i + 1, j] + aS[i, j] * u[i - 1, j]) / diag[i, j]
                            u[i, j] = u[i, j] + omega * (gs - u[i, j])
            sweep += 1
            if sweep % check_every == 0:
                res = _residual(u, aE, aW, aN, aS, diag, rhs, unknown)
                if res <= tol:
                    break
    if sweep % check_every != 0:
        res = _residual(u, aE, aW, aN, aS, diag, rhs, unknown)
    return sweep, res


# ---------------------------------------------------------------------------
# counter-based uniform stream
# ---------------------------------------------------------------------------

cdef inline uint64_t _splitmix(uint64_t z) nogil:
    z = z + <uint64_t>0x9E3779B97F4A7C15
    z = (z ^ (z >> 30)) * <uint64_t>0xBF58476D1CE4E5B9
    z = (z ^ (z >> 27)) * <uint64_t>0x94D049BB133111EB
    return z ^ (z >> 31)


cdef inline double _uniform(uint64_t key, uint64_t walk, uint64_t step) nogil:
    cdef uint64_t h = _splitmix(_splitmix(key ^ _splitmix(walk)) + step)
    return <double>(h >> 11) * (1.0 / 9007199254740992.0)


def counter_uniform(uint64_t seed, cnp.ndarray walks, cnp.ndarray steps):
    """Uniform variates for (walk, step) pairs; same stream as the walkers."""
    cdef uint64_t[::1] w = np.ascontiguousarray(walks, dtype=np.uint64)
    cdef uint64_t[::1] s = np.ascontiguousarray(steps, dtype=np.uint64)
    cdef Py_ssize_t k, n = w.shape[0]
    out = np.empty(n, dtype=np.float64)
    cdef double[::1] o = out
    cdef uint64_t key = _splitmix(seed)
    for k in range(n):
        o[k] = _uniform(key, w[k], s[k])
    return out


# ---------------------------------------------------------------------------
# walk on spheres
# ---------------------------------------------------------------------------

cdef inline int _in_arcs(double t, double[::1] arc_start, double[::1] arc_len) nogil:
    cdef Py_ssize_t k
    cdef double d
    for k in range(arc_start.shape[0]):
        d = fmod(t - arc_start[k], TWO_PI)
        if d < 0:
            d += TWO_PI
        if d > 0.0 and d < arc_len[k]:
            return 1
    return 0


cdef inline double _seg_dist2(double px, double py, double ax, double ay,
                              double bx, double by, double* s_out) nogil:
    cdef double dx = bx - ax, dy = by - ay
    cdef double L2 = dx * dx + dy * dy
    cdef double s = 0.0
    if L2 > 0:
        s = ((px - ax) * dx + (py - ay) * dy) / L2
        if s < 0:
            s = 0.0
        elif s > 1:
            s = 1.0
    cdef double qx = ax + s * dx - px, qy = ay + s * dy - py
    s_out[0] = s
    return qx * qx + qy * qy


cdef double _poly_nearest(double px, double py, double[::1] vx, double[::1] vy,
                          double x0, double y0, double hb, Py_ssize_t nbx, Py_ssize_t nby,
                          long[::1] start, long[::1] segs, double radius,
                          long* seg_out, double* s_out) nogil:
    """Exact distance from (px, py) to the closed polyline, searching buckets within radius."""
    cdef long ci = <long>((px - x0) / hb), cj = <long>((py - y0) / hb)
    cdef long k = <long>ceil(radius / hb) + 1
    cdef long a, b, m, seg, nv = vx.shape[0]
    cdef double d2, best = 1e300, s = 0.0
    seg_out[0] = -1
    for a in range(ci - k, ci + k + 1):
        if a < 0 or a >= nbx:
            continue
        for b in range(cj - k, cj + k + 1):
            if b < 0 or b >= nby:
                continue
            for m in range(start[a * nby + b], start[a * nby + b + 1]):
                seg = segs[m]
                d2 = _seg_dist2(px, py, vx[seg], vy[seg], vx[(seg + 1) % nv],
                                vy[(seg + 1) % nv], &s)
                if d2 < best:
                    best = d2
                    seg_out[0] = seg
                    s_out[0] = s
    return sqrt(best)


def wos_disk(double x0, double y0, double cx, double cy, double R, double eps,
             long max_steps, uint64_t seed, long first_walk, long n_walks,
             double[::1] arc_start, double[::1] arc_len):
    """Walk-on-spheres exits for a disk; 1 = exit in complement of arcs, 0 = in arcs, 2 = failure."""
    out = np.empty(n_walks, dtype=np.uint8)
    cdef unsigned char[::1] o = out
    cdef uint64_t key = _splitmix(seed)
    cdef long w, step
    cdef double px, py, d, th, t
    with nogil:
        for w in range(n_walks):
            px = x0
            py = y0
            o[w] = 2
            for step in range(max_steps):
                d = R - sqrt((px - cx) * (px - cx) + (py - cy) * (py - cy))
                if d < eps:
                    t = atan2(py - cy, px - cx)
                    if t < 0:
                        t += TWO_PI
                    o[w] = 0 if _in_arcs(t, arc_start, arc_len) else 1
                    break
                th = TWO_PI * _uniform(key, <uint64_t>(first_walk + w), <uint64_t>step)
                px = px + d * cos(th)
                py = py + d * sin(th)
    return out


def wos_polyline(double x0, double y0, double[::1] vx, double[::1] vy, double[::1] vt,
                 double x_lo, double y_lo, double hb, long nbx, long nby,
                 long[::1] start, long[::1] segs, double[:, ::1] dlow, double[:, ::1] dup,
                 double near, double eps, long max_steps, uint64_t seed,
                 long first_walk, long n_walks,
                 double[::1] arc_start, double[::1] arc_len):
    """Walk-on-spheres exits for a domain bounded by a closed polyline.

    ``dlow``/``dup`` bound the distance to the polyline per bucket; steps use
    ``dlow`` while it exceeds ``near`` and the exact distance otherwise.
    """
    out = np.empty(n_walks, dtype=np.uint8)
    cdef unsigned char[::1] o = out
    cdef uint64_t key = _splitmix(seed)
    cdef long w, step, ci, cj, seg, nv = vx.shape[0]
    cdef double px, py, d, th, t, s, t0, t1
    with nogil:
        for w in range(n_walks):
            px = x0
            py = y0
            o[w] = 2
            for step in range(max_steps):
                ci = <long>((px - x_lo) / hb)
                cj = <long>((py - y_lo) / hb)
                d = dlow[ci, cj]
                if d < near:
                    d = _poly_nearest(px, py, vx, vy, x_lo, y_lo, hb, nbx, nby,
                                      start, segs, dup[ci, cj], &seg, &s)
                    if d < eps:
                        t0 = vt[seg]
                        t1 = vt[seg + 1] if seg + 1 < nv else TWO_PI
                        t = t0 + s * (t1 - t0)
                        if t >= TWO_PI:
                            t -= TWO_PI
                        o[w] = 0 if _in_arcs(t, arc_start, arc_len) else 1
                        break
                th = TWO_PI * _uniform(key, <uint64_t>(first_walk + w), <uint64_t>step)
                px = px + d * cos(th)
                py = py + d * sin(th)
    return out


# ---------------------------------------------------------------------------
# cyclic Jacobi eigenvalue iteration
# ---------------------------------------------------------------------------

def jacobi_eigh(double[:, ::1] a_in, double tol=1e-15, long max_sweeps=60):
    """Eigen-decomposition of a symmetric matrix by cyclic Jacobi rotations.

    Convergence is judged relative to the diagonal, so graded matrices keep
    relative accuracy in their small eigenvalues. Returns ``(w, V, sweeps)``.
    """
    cdef Py_ssize_t n = a_in.shape[0]
    A = np.array(a_in, dtype=np.float64, copy=True)
    V = np.eye(n, dtype=np.float64)
    cdef double[:, ::1] a = A
    cdef double[:, ::1] v = V
    cdef Py_ssize_t p, q, k
    cdef long sweep = 0
    cdef double apq, theta, t, c, s, akp, akq, app, aqq
    cdef int rotated
    with nogil:
        while sweep < max_sweeps:
            rotated = 0
            for p in range(n - 1):
                for q in range(p + 1, n):
                    apq = a[p, q]
                    if fabs(apq) <= tol * sqrt(fabs(a[p, p] * a[q, q])):
                        continue
                    rotated = 1
                    app = a[p, p]
                    aqq = a[q, q]
                    theta = (aqq - app) / (2.0 * apq)
                    t = 1.0 / (fabs(theta) + sqrt(theta * theta + 1.0))
                    if theta < 0:
                        t = -t
                    c = 1.0 / sqrt(t * t + 1.0)
                    s = t * c
                    for k in range(n):
                        akp = a[k, p]
                        akq = a[k, q]
                        a[k, p] = c * akp - s * akq
                        a[k, q] = s * akp + c * akq
                    for k in range(n):
                        akp = a[p, k]
                        akq = a[q, k]
                        a[p, k] = c * akp - s * akq
                        a[q, k] = s * akp + c * akq
                    a[p, q] = 0.0
                    a[q, p] = 0.0
                    a[p, p] = app - t * apq
                    a[q, q] = aqq + t * apq
                    for k in range(n):
                        akp = v[k, p]
                        akq = v[k, q]
                        v[k, p] = c * akp - s * akq
                        v[k, q] = s * akp + c * akq
            sweep += 1
            if not rotated:
                break
    return np.diag(A).copy(), V, sweep
