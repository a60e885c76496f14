"""Doubly orthogonal polynomial bases and the series built from them.

For a domain ``D`` and a compact ``A`` inside it, the basis ``b_k`` is
orthonormal in ``L^2(A, mu)`` and orthogonal in the Bergman space of ``D``
with ``||b_k||_D = nu_k``. Polynomials of degree ``<= K`` are represented by
coefficients in scaled monomials ``((z - c)/s)^m`` where ``c``, ``s`` are
the centre and radius of ``A``.
"""

from __future__ import annotations

import csv
import io
import json
import math
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
from scipy import linalg

from . import kernels
from .geometry import TWO_PI, GeometryError, PlanarDomain

EPS = np.finfo(float).eps


class BasisConditionError(ValueError):
    """The Gram matrix on ``A`` is numerically singular."""


class QuadratureError(RuntimeError):
    """Coefficient quadrature did not settle under refinement."""


class DivergenceError(RuntimeError):
    """Series terms grow; the point is outside the certified region."""


# ---------------------------------------------------------------------------
# quadrature
# ---------------------------------------------------------------------------


def _star_center(domain: PlanarDomain) -> complex:
    if domain.kind == "disk":
        return domain.center
    return complex(domain.coeffs[0, 0], domain.coeffs[0, 2])


def area_nodes(domain: PlanarDomain, n_rho: int = 64, n_t: int = 128, center: complex | None = None):
    """Nodes and weights for area integrals over a domain star-shaped about ``center``.

    Uses ``z = c + rho (gamma(t) - c)`` with Gauss-Legendre in ``rho`` and the
    trapezoid rule in ``t``.
    """
    c = _star_center(domain) if center is None else complex(center)
    t = np.linspace(0.0, TWO_PI, n_t, endpoint=False)
    g = domain.point(t) - c
    dg = domain.deriv(t)
    jac = (np.conj(g) * dg).imag * domain.orientation
    if np.any(jac <= 0):
        raise GeometryError("domain is not star-shaped about its centre")
    x, w = np.polynomial.legendre.leggauss(n_rho)
    rho = 0.5 * (x + 1.0)
    wr = 0.5 * w
    z = c + np.multiply.outer(rho, g)
    wt = np.multiply.outer(wr * rho, jac) * (TWO_PI / n_t)
    return z.ravel(), wt.ravel()


def curve_nodes(domain: PlanarDomain, n_t: int = 256):
    """Nodes and arclength weights on the boundary curve."""
    t = np.linspace(0.0, TWO_PI, n_t, endpoint=False)
    return domain.point(t), np.abs(domain.deriv(t)) * (TWO_PI / n_t)


# ---------------------------------------------------------------------------
# basis
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class DoublyOrthogonalBasis:
    """``b_k = sum_m coeffs[m, k] ((z - center)/scale)^m`` with Bergman norms ``nu[k]``."""

    K: int
    center: complex
    scale: float
    coeffs: np.ndarray
    nu: np.ndarray
    mu: str
    gram_D: np.ndarray = field(repr=False)
    gram_A: np.ndarray = field(repr=False)
    nodes_A: tuple = field(repr=False)
    cond_A: float = 0.0
    domain_A: PlanarDomain | None = field(default=None, repr=False)
    quad: tuple = ()

    def monomials(self, z, K: int | None = None) -> np.ndarray:
        K = self.K if K is None else K
        u = (np.asarray(z, dtype=complex).ravel() - self.center) / self.scale
        return np.vander(u, K + 1, increasing=True)

    def evaluate(self, z) -> np.ndarray:
        """Matrix ``b_k(z_i)`` of shape ``(len(z), K + 1)``."""
        return self.monomials(z) @ self.coeffs

    def orthogonality_residuals(self) -> tuple[float, float]:
        """Max deviation from ``I`` in the A product and from ``diag(nu^2)`` in the D product.

        The second is measured entrywise relative to ``nu_j nu_k``.
        """
        B = self.coeffs
        GA = B.conj().T @ self.gram_A @ B
        GD = B.conj().T @ self.gram_D @ B
        ra = float(np.abs(GA - np.eye(self.K + 1)).max())
        rd = float((np.abs(GD - np.diag(self.nu ** 2)) / np.outer(self.nu, self.nu)).max())
        return ra, rd

    def to_json(self) -> str:
        data = {"K": self.K, "center": [self.center.real, self.center.imag], "scale": self.scale,
                "mu": self.mu, "nu": self.nu.tolist(),
                "coeffs": [[[c.real, c.imag] for c in self.coeffs[:, k]] for k in range(self.K + 1)]}
        return json.dumps(data, sort_keys=True)


def _hermitian_gram(z, w, center, scale, K):
    V = np.vander((z - center) / scale, K + 1, increasing=True)
    return (V.conj().T * w) @ V


def _hermitian_eigh(C: np.ndarray):
    """Eigenpairs of a Hermitian matrix by cyclic Jacobi (real embedding when complex)."""
    if np.abs(C.imag).max() <= 1e-14 * np.abs(C).max():
        lam, V, _ = kernels.jacobi_eigh(np.ascontiguousarray(C.real))
        return lam, V.astype(complex)
    n = C.shape[0]
    R = np.block([[C.real, -C.imag], [C.imag, C.real]])
    lam, V, _ = kernels.jacobi_eigh(np.ascontiguousarray(R))
    order = np.argsort(lam, kind="stable")
    lam, V = lam[order], V[:, order]
    vecs = V[:n, ::2] + 1j * V[n:, ::2]
    vecs /= np.linalg.norm(vecs, axis=0)
    return lam[::2], vecs


def build_doubly_orthogonal(D: PlanarDomain, A: PlanarDomain, mu: str = "area", K: int = 40,
                            n_rho: int = 64, n_t: int = 128, max_cond: float = 1e12) -> DoublyOrthogonalBasis:
    """Simultaneously diagonalize the Bergman Gram of ``D`` and the ``L^2(A, mu)`` Gram.

    ``mu="area"`` is normalized area on ``A``; ``mu="arclength"`` is
    normalized arclength on the boundary curve of ``A``.
    """
    if K < 1:
        raise ValueError("K must be at least 1")
    cA = _star_center(A)
    if A.kind == "disk":
        scale = A.radius
    else:
        scale = float(np.abs(A.point(np.linspace(0, TWO_PI, 512, endpoint=False)) - cA).max())
    n_t = max(n_t, 2 * K + 8)
    n_rho = max(n_rho, K + 2)
    zD, wD = area_nodes(D, n_rho, n_t)
    if mu == "area":
        quad = (n_rho, n_t)
        zA, wA = area_nodes(A, n_rho, n_t, cA)
    elif mu == "arclength":
        quad = (max(2 * n_t, 4 * K),)
        zA, wA = curve_nodes(A, quad[0])
    else:
        raise ValueError(f"unknown measure {mu!r}")
    wA = wA / wA.sum()
    GD = _hermitian_gram(zD, wD, cA, scale, K)
    GA = _hermitian_gram(zA, wA, cA, scale, K)
    cond = float(np.linalg.cond(GA))
    if not cond <= max_cond:
        raise BasisConditionError(f"Gram matrix on A has condition {cond:.3e} > {max_cond:.0e}; use a smaller K")
    L = np.linalg.cholesky(GA)
    X = linalg.solve_triangular(L, GD, lower=True)
    C = linalg.solve_triangular(L, X.conj().T, lower=True).conj().T
    C = 0.5 * (C + C.conj().T)
    lam, V = _hermitian_eigh(C)
    order = np.argsort(lam, kind="stable")
    lam, V = lam[order], V[:, order]
    B = linalg.solve_triangular(L.conj().T, V, lower=False)
    # phase: the largest coefficient of each b_k is real and positive
    lead = B[np.argmax(np.abs(B), axis=0), np.arange(K + 1)]
    B = B * (np.abs(lead) / lead)[None, :]
    return DoublyOrthogonalBasis(K, cA, float(scale), B, np.sqrt(np.maximum(lam, 0.0)),
                                 f"normalized {mu} on A", GD, GA, (zA, wA), cond, A, quad)


# ---------------------------------------------------------------------------
# coefficients
# ---------------------------------------------------------------------------


@dataclass(frozen=True, eq=False)
class CoefficientField:
    """``values[k, j] = c_k(w_j)``; ``noise`` holds the rounding bound used for zeroing."""

    w: np.ndarray
    values: np.ndarray
    noise: np.ndarray = field(repr=False)

    def to_csv(self) -> str:
        buf = io.StringIO()
        wr = csv.writer(buf, lineterminator="\n")
        wr.writerow(["k", "w_re", "w_im", "c_re", "c_im"])
        for k in range(self.values.shape[0]):
            for j, w in enumerate(self.w):
                c = self.values[k, j]
                wr.writerow([k, repr(float(w.real)), repr(float(w.imag)), repr(float(c.real)), repr(float(c.imag))])
        return buf.getvalue()


def _coeff_quad(f, basis, zA, wA, w_samples, chunk: int = 256):
    bz = basis.evaluate(zA)
    bzh = bz.conj().T
    abz = np.abs(bz).T
    vals = np.empty((basis.K + 1, len(w_samples)), dtype=complex)
    noise = np.empty((basis.K + 1, len(w_samples)))
    for j0 in range(0, len(w_samples), chunk):
        w = w_samples[j0:j0 + chunk]
        F = np.asarray(f(zA[:, None], w[None, :]), dtype=complex) * wA[:, None]
        F = np.broadcast_to(F, (len(zA), len(w)))
        vals[:, j0:j0 + chunk] = bzh @ F
        noise[:, j0:j0 + chunk] = 8 * EPS * (abz @ np.abs(F))
    return vals, noise


def coefficients(f: Callable, basis: DoublyOrthogonalBasis, w_samples, check: bool = True,
                 tol: float = 1e-8) -> CoefficientField:
    """``c_k(w) = int_A f(z, w) conj(b_k(z)) dmu(z)`` at each ``w`` sample.

    ``f(z, w)`` must accept arrays. Values within their rounding-noise
    bound are set to zero. With ``check`` the quadrature is repeated on a
    finer rule and must agree to ``tol`` (relative to ``max |f|``).
    """
    w_samples = np.atleast_1d(np.asarray(w_samples, dtype=complex))
    zA, wA = basis.nodes_A
    vals, noise = _coeff_quad(f, basis, zA, wA, w_samples)
    if check and basis.domain_A is not None:
        if len(basis.quad) == 2:
            z2, w2 = area_nodes(basis.domain_A, basis.quad[0] + 16, basis.quad[1] + 32, basis.center)
        else:
            z2, w2 = curve_nodes(basis.domain_A, basis.quad[0] + 64)
        w2 = w2 / w2.sum()
        v2, _ = _coeff_quad(f, basis, z2, w2, w_samples)
        fmax = max(1.0, float(np.abs(f(zA, np.full(zA.shape, w_samples[0]))).max()))
        if np.abs(v2 - vals).max() > tol * fmax:
            raise QuadratureError("coefficient quadrature changes under refinement")
    vals = np.where(np.abs(vals) <= noise, 0.0, vals)
    return CoefficientField(w_samples, vals, noise)


def decay_exponents(coeffs: CoefficientField, basis: DoublyOrthogonalBasis, omega_w=None,
                    eps_report: float = 0.1, k_range: tuple | None = None):
    """Table ``log|c_k(w)| / log nu_k`` and flags where it exceeds ``omega(w) - 1 + eps_report``.

    Zero coefficients give ``-inf`` and are never flagged; rows with
    ``nu_k <= 1`` are NaN.
    """
    nu = basis.nu
    with np.errstate(divide="ignore", invalid="ignore"):
        lognu = np.where(nu > 1, np.log(nu), np.nan)
        table = np.log(np.abs(coeffs.values)) / lognu[:, None]
    flags = np.zeros(table.shape, dtype=bool)
    if omega_w is not None:
        thr = np.asarray(omega_w, dtype=float)[None, :] - 1.0 + eps_report
        flags = np.isfinite(table) & (table > thr)
    if k_range is not None:
        keep = np.zeros(len(nu), dtype=bool)
        keep[k_range[0]:k_range[1] + 1] = True
        flags &= keep[:, None]
    return table, flags


# ---------------------------------------------------------------------------
# series
# ---------------------------------------------------------------------------


def series_tail(terms: np.ndarray, window: int = 10):
    """Geometric tail estimate from the last ``window`` nonzero terms of a series.

    ``terms`` holds term magnitudes with the degree on axis 0. The fitted
    geometric decay is extrapolated from the last nonzero degree onward.
    Returns ``(tail, ratio)`` over the remaining axes; both are ``inf``
    where the fitted terms do not decay. With fewer than three live terms
    the series counts as finite (tail 0) when its last ``window`` degrees
    vanish, else the tail is the largest live term. Zeroed coefficients
    inside a longer series do not end it: they sit below rounding noise,
    but their products with a growing ``b_k(z)`` need not be small.
    """
    T = np.asarray(terms, dtype=float)
    K1 = T.shape[0]
    k = np.arange(K1, dtype=float).reshape((K1,) + (1,) * (T.ndim - 1))
    live = T > 0
    rank = np.flip(np.cumsum(np.flip(live, 0), axis=0), 0)
    sel = live & (rank <= window)
    n = sel.sum(axis=0)
    k_last = np.where(live, k, -1.0).max(axis=0)
    with np.errstate(divide="ignore", invalid="ignore"):
        y = np.where(sel, np.log(np.where(sel, T, 1.0)), 0.0)
        kb = (k * sel).sum(axis=0) / n
        yb = y.sum(axis=0) / n
        dk = np.where(sel, k - kb, 0.0)
        slope = (dk * (y - yb)).sum(axis=0) / (dk * dk).sum(axis=0)
        q = np.exp(slope)
        tail = np.exp(yb + slope * (k_last - kb)) * q / (1.0 - q)
    fit = n >= 3
    fallback = np.where(sel, T, 0.0).max(axis=0)
    fallback = np.where(k_last < K1 - window, 0.0, fallback)
    ratio = np.where(fit, q, 0.0)
    tail = np.where(fit, tail, fallback)
    grow = fit & ~(q < 1.0)
    tail = np.where(grow, np.inf, tail)
    ratio = np.where(grow, np.inf, ratio)
    return tail, ratio


def assemble_extension(basis: DoublyOrthogonalBasis, coeffs: CoefficientField, z, K_used: int | None = None,
                       chunk: int = 64):
    """Partial sums ``sum_{k <= K_used} c_k(w) b_k(z)`` for every ``z`` and every ``w`` sample.

    Returns ``(values, tail)`` with shape ``(len(z), len(w))``; the tail is
    the geometric extrapolation of the last ten nonzero terms (``inf`` when
    they grow).
    """
    K_used = basis.K if K_used is None else min(K_used, basis.K)
    z = np.atleast_1d(np.asarray(z, dtype=complex))
    bz = basis.evaluate(z)[:, :K_used + 1]
    C = coeffs.values[:K_used + 1]
    values = bz @ C
    bw = np.abs(bz).T
    cw = np.abs(C)
    tails = np.empty(values.shape)
    for j0 in range(0, C.shape[1], chunk):
        terms = bw[:, :, None] * cw[:, None, j0:j0 + chunk]
        tails[:, j0:j0 + chunk], _ = series_tail(terms)
    return values, tails


def evaluate_extension(basis, coeffs, z, w_index: int = 0, K_used: int | None = None,
                       omega_sum: float | None = None):
    """Scalar series value at ``(z, w_j)``; raises when outside the envelope or divergent."""
    if omega_sum is not None and omega_sum >= 1:
        raise GeometryError("point lies outside the envelope (omega sum >= 1)")
    v, t = assemble_extension(basis, coeffs, [z], K_used)
    if not math.isfinite(t[0, w_index]):
        raise DivergenceError("series terms grow over the last ten terms")
    return complex(v[0, w_index]), float(t[0, w_index])


def basis_growth_profile(basis: DoublyOrthogonalBasis, points, window: int = 10):
    """``sup |b_k|`` over the sample set and the fitted growth exponent against ``nu_k``.

    The exponent is the least-squares slope of ``log sup|b_k|`` against
    ``log nu_k`` over the last ``window`` degrees.
    """
    bz = np.abs(basis.evaluate(points))
    sup = bz.max(axis=0)
    k = np.arange(basis.K + 1)[-window:]
    x = np.log(basis.nu[k])
    y = np.log(sup[k])
    if np.ptp(x) == 0:
        return sup, 0.0
    slope, _ = np.polyfit(x, y, 1)
    return sup, float(slope)


def bessel_gap(basis: DoublyOrthogonalBasis, f: Callable, w) -> float:
    """``||f(., w)||^2_{L^2(A, mu)} - sum_k |c_k(w)|^2`` (nonnegative up to rounding)."""
    zA, wA = basis.nodes_A
    fz = np.asarray(f(zA, np.full(zA.shape, w)), dtype=complex)
    norm2 = float(np.sum(wA * np.abs(fz) ** 2))
    c = coefficients(f, basis, [w], check=False).values[:, 0]
    return norm2 - float(np.sum(np.abs(c) ** 2))
