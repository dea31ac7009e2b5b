"""Transformation kernels and numerical replays of the uniqueness argument.

Kernels live on a uniform ``(x, y)`` grid with step ``h``.  The Jost kernel
``K(x, y)`` vanishes for ``x + y >= 2 alpha`` but not for ``alpha < y``, so
arrays cover ``0 <= x <= a`` and ``x <= y <= 2a - x``; the same region is
used for the product kernel ``L``.
"""

from __future__ import annotations

import csv
import io
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError, ConvergenceError
from .numerics import DEFAULT_FLOOR, log_linear_fit, principal_sqrt
from .weyl import DEFAULT_RTOL, jost_solution, m_halfline

PICARD_TOL = 1e-12
PICARD_MAX_ITER = 200
GAUSS_NODES = 48


@dataclass(frozen=True, eq=False)
class TriangularKernelGrid:
    """Kernel samples ``values[i, j] = K(i*h, j*h)``.

    Shape is ``(n + 1, 2n + 1)`` with ``n = a / h``; entries outside
    ``i <= j <= 2n - i`` are exactly zero.
    """

    a: float
    h: float
    values: np.ndarray
    sweeps: int = 0

    @property
    def n(self):
        return self.values.shape[0] - 1

    @property
    def x(self):
        return np.arange(self.n + 1) * self.h

    @property
    def y(self):
        return np.arange(2 * self.n + 1) * self.h

    def triangle(self):
        """Samples on the closed triangle ``0 <= x <= y <= a``."""
        return self.values[:, : self.n + 1]

    def at(self, x, y):
        """Bilinear interpolation of ``K(x, y)``; zero off the support."""
        x, y = np.broadcast_arrays(np.asarray(x, dtype=float), np.asarray(y, dtype=float))
        fi, fj = x / self.h, y / self.h
        i0 = np.clip(np.floor(fi).astype(int), 0, self.n - 1)
        j0 = np.clip(np.floor(fj).astype(int), 0, 2 * self.n - 1)
        ti, tj = fi - i0, fj - j0
        V = self.values
        out = (
            (1 - ti) * (1 - tj) * V[i0, j0]
            + ti * (1 - tj) * V[i0 + 1, j0]
            + (1 - ti) * tj * V[i0, j0 + 1]
            + ti * tj * V[i0 + 1, j0 + 1]
        )
        outside = (x > y) | (x < 0) | (x + y > 2 * self.a) | (y < 0)
        return np.where(outside, 0.0, out)


def _grid_size(a, h):
    n = a / h
    if abs(n - round(n)) > 1e-8 * max(1.0, n):
        raise ConfigurationError(f"h = {h} does not divide a = {a} into whole cells")
    n = int(round(n))
    if n < 8:
        raise ConfigurationError(f"need at least 8 cells, got {n}")
    return n


def _support_end(*potentials):
    return max(p.support_sup for p in potentials)


def _rev_cumtrapz(A, h, axis):
    # int_u^end along ``axis``, endpoint value 0
    A = np.flip(A, axis=axis)
    mid = 0.5 * h * (np.take(A, range(1, A.shape[axis]), axis=axis) + np.take(A, range(A.shape[axis] - 1), axis=axis))
    out = np.concatenate([np.zeros_like(np.take(A, [0], axis=axis)), np.cumsum(mid, axis=axis)], axis=axis)
    return np.flip(out, axis=axis)


def _cumtrapz(A, h, axis):
    mid = 0.5 * h * (np.take(A, range(1, A.shape[axis]), axis=axis) + np.take(A, range(A.shape[axis] - 1), axis=axis))
    return np.concatenate([np.zeros_like(np.take(A, [0], axis=axis)), np.cumsum(mid, axis=axis)], axis=axis)


def transformation_kernel(q, h, a=None, *, tol=PICARD_TOL, max_iter=PICARD_MAX_ITER, sweeps=None):
    """Jost transformation kernel by successive approximation.

    Works in characteristic coordinates ``u = (x + y)/2``, ``v = (y - x)/2``
    on a grid of step ``h/2``, where the integral equation reads
    ``Kc(u, v) = Q(u)/2 + int_u^a ds int_0^v dt q(s - t) Kc(s, t)``.
    ``sweeps`` runs exactly that many Picard sweeps with no convergence
    check (``sweeps=0`` returns the first iterate).
    """
    a = q.support_sup if a is None else float(a)
    if a < q.support_sup:
        raise ConfigurationError(f"domain a = {a} is shorter than the support {q.support_sup}")
    n = _grid_size(a, h)
    nc = 2 * n
    hc = h / 2
    u = np.arange(nc + 1) * hc
    seed = 0.5 * q.tail_integral(u)[:, None] * np.ones(nc + 1)
    lower = np.tril(np.ones((nc + 1, nc + 1), dtype=bool))
    seed = np.where(lower, seed, 0.0)
    # q(s - t) on the lattice; breakpoints take the mean of one-sided limits
    qd = q.evaluate(np.arange(nc + 1) * hc, at_breaks="mean")
    diff = np.subtract.outer(np.arange(nc + 1), np.arange(nc + 1))
    qst = np.where(lower, qd[np.clip(diff, 0, nc)], 0.0)
    Kc = seed
    done = 0
    limit = max_iter if sweeps is None else sweeps
    while done < limit:
        C = _cumtrapz(qst * Kc, hc, axis=1)
        G = _rev_cumtrapz(C, hc, axis=0)
        new = np.where(lower, seed + G, 0.0)
        step = float(np.max(np.abs(new - Kc)))
        Kc = new
        done += 1
        if sweeps is None and step < tol:
            break
    else:
        if sweeps is None and limit > 0:
            raise ConvergenceError(f"Picard iteration did not converge in {max_iter} sweeps")
    i = np.arange(n + 1)[:, None]
    j = np.arange(2 * n + 1)[None, :]
    valid = (j >= i) & (i + j <= 2 * n)
    vals = np.where(valid, Kc[np.clip(i + j, 0, nc), np.clip(j - i, 0, nc)], 0.0)
    return TriangularKernelGrid(a, h, vals, done)


def kernel_bound(q, x, y):
    """Pointwise bound on ``|K(x, y)|`` from the successive-approximation estimate."""
    x, y = np.asarray(x, dtype=float), np.asarray(y, dtype=float)
    return 0.5 * q.abs_tail_integral(0.5 * (x + y)) * np.exp(q.abs_tail_integral(x, moment=1))


def _trap_weights(m, h):
    w = np.full(m, h)
    if m:
        w[0] = w[-1] = 0.5 * h
    if m == 1:
        w[0] = 0.0
    return w


def jost_via_kernel(K, z, x):
    """``f(z, x) = exp(ikx) + int_x^{2a-x} K(x, y) exp(iky) dy`` by the trapezoid rule."""
    k = principal_sqrt(z)
    i = int(round(x / K.h))
    if abs(i * K.h - x) > 1e-9 * max(1.0, K.a) or not 0 <= i <= K.n:
        raise ConfigurationError(f"x = {x} is not a grid point")
    j = np.arange(i, 2 * K.n - i + 1)
    y = j * K.h
    integral = np.sum(_trap_weights(len(j), K.h) * K.values[i, j] * np.exp(1j * k * y))
    return complex(np.exp(1j * k * x) + integral)


def product_kernel(K1, K2):
    """Kernel ``L`` of ``f1 f2 = exp(2ikx) + int_x^{2a-x} L(x, y) exp(2iky) dy``.

    ``L(x, y) = 2[K1 + K2](x, 2y - x) + 2 int_x^{2y-x} K1(x, t) K2(x, 2y - t) dt``.
    """
    if K1.values.shape != K2.values.shape or abs(K1.h - K2.h) > 1e-15 * K1.h:
        raise ConfigurationError("product_kernel needs kernels on the same grid")
    n, h = K1.n, K1.h
    L = np.zeros_like(K1.values)
    for i in range(n + 1):
        a1 = K1.values[i, i : 2 * n - i + 1]
        a2 = K2.values[i, i : 2 * n - i + 1]
        conv = np.convolve(a1, a2)
        jmax = 2 * n - i
        for_j = np.arange(i, jmax + 1)
        m = 2 * (for_j - i)
        mm = np.minimum(m, len(a1) - 1)
        edge = np.where(m < len(a1), a1[0] * a2[mm] + a1[mm] * a2[0], 0.0)
        # trapezoid = full sum minus half the two end products
        integral = h * (conv[m] - 0.5 * edge)
        direct = np.zeros(len(for_j))
        inside = 2 * for_j - i <= 2 * n
        direct[inside] = K1.values[i, 2 * for_j[inside] - i] + K2.values[i, 2 * for_j[inside] - i]
        L[i, for_j] = 2 * direct + 2 * integral
    return TriangularKernelGrid(K1.a, h, L)


def _kernels_for(q1, q2, h, a=None):
    a = _support_end(q1, q2) if a is None else a
    return transformation_kernel(q1, h, a), transformation_kernel(q2, h, a)


def product_identity_residual(q1, q2, z, h, a=None, rtol=DEFAULT_RTOL):
    """``max_x |f1 f2 - exp(2ikx) - int L exp(2iky) dy|`` over the ``x`` grid."""
    K1, K2 = _kernels_for(q1, q2, h, a)
    L = product_kernel(K1, K2)
    k = principal_sqrt(z)
    x = K1.x
    f1 = jost_solution(q1, z, grid=x, rtol=rtol).f
    f2 = jost_solution(q2, z, grid=x, rtol=rtol).f
    e2 = np.exp(2j * k * L.y)
    worst = 0.0
    for i in range(L.n + 1):
        j = np.arange(i, 2 * L.n - i + 1)
        integral = np.sum(_trap_weights(len(j), h) * L.values[i, j] * e2[j])
        worst = max(worst, abs(f1[i] * f2[i] - np.exp(2j * k * x[i]) - integral))
    return float(worst)


def _gauss_nodes(breaks, n=GAUSS_NODES):
    t, w = np.polynomial.legendre.leggauss(n)
    xs, ws = [], []
    for lo, hi in zip(breaks[:-1], breaks[1:]):
        xs.append(0.5 * (hi - lo) * t + 0.5 * (hi + lo))
        ws.append(0.5 * (hi - lo) * w)
    return np.concatenate(xs), np.concatenate(ws)


def _merged_breaks(a, *potentials):
    pts = {0.0, float(a)}
    for p in potentials:
        pts |= {b for b in p.breakpoints if 0 < b < a}
    return sorted(pts)


def wronskian_identity_check(q1, q2, z, a=None, rtol=DEFAULT_RTOL):
    """Both sides of ``int_0^a (q1 - q2) f1 f2 dx = [f1 f2 (m1 - m2)]_0^a``.

    The left side is Gauss-Legendre quadrature over the merged breakpoints;
    the right side uses the Jost values at the ends and the m-engine at 0.
    Returns ``(lhs, rhs, |lhs - rhs|)``.
    """
    a = _support_end(q1, q2) if a is None else float(a)
    xs, ws = _gauss_nodes(_merged_breaks(a, q1, q2))
    dq = q1.evaluate(xs) - q2.evaluate(xs)
    grid = np.concatenate([[0.0], xs, [a]])
    t1 = jost_solution(q1, z, grid=grid, rtol=rtol)
    t2 = jost_solution(q2, z, grid=grid, rtol=rtol)
    lhs = complex(np.sum(ws * dq * t1.f[1:-1] * t2.f[1:-1]))
    at_a = t1.f[-1] * t2.f[-1] * (t1.fp[-1] / t1.f[-1] - t2.fp[-1] / t2.f[-1])
    at_0 = t1.f[0] * t2.f[0] * (m_halfline(q1, z, rtol) - m_halfline(q2, z, rtol))
    rhs = complex(at_a - at_0)
    return lhs, rhs, abs(lhs - rhs)


def laplace_density(L, dq):
    """``d(y) = dq(y) + int_0^y L(x, y) dq(x) dx`` on the ``y`` grid of ``L``.

    ``dq`` holds ``q1 - q2`` on the ``y`` grid (length ``2n + 1``; zero beyond ``a``).
    """
    n, h = L.n, L.h
    dq = np.asarray(dq, dtype=float)
    out = dq.copy()
    for j in range(1, 2 * n + 1):
        i = np.arange(0, min(j, 2 * n - j) + 1)
        if len(i) > 1:
            out[j] += np.sum(_trap_weights(len(i), h) * L.values[i, j] * dq[i])
    return out


def volterra_solve(L, g, h=None):
    """Solve ``u(y) + int_0^y L(x, y) u(x) dx = g(y)`` by trapezoid forward substitution.

    ``L`` is a :class:`TriangularKernelGrid` or a square array with
    ``L[i, j] = L(x_i, y_j)``; ``g`` is sampled on the same uniform grid.
    """
    if isinstance(L, TriangularKernelGrid):
        h = L.h if h is None else h
        vals = L.values
    else:
        vals = np.asarray(L)
    if h is None:
        raise ConfigurationError("volterra_solve needs the grid step h")
    g = np.asarray(g)
    n = len(g)
    u = np.zeros(n, dtype=np.result_type(g, vals, float))
    if n == 0:
        return u
    u[0] = g[0]
    for j in range(1, n):
        acc = 0.5 * vals[0, j] * u[0] + np.dot(vals[1:j, j], u[1:j])
        u[j] = (g[j] - h * acc) / (1.0 + 0.5 * h * vals[j, j])
    return u


def volterra_pipeline(q1, q2, h, a=None):
    """Replay of the closing Volterra step.

    Builds ``L`` from both kernels, the density ``d`` of the Laplace form,
    then inverts the Volterra operator on ``d``.  Returns a dict with
    ``density_norm`` (``sup |d|`` on ``[0, a]``), ``recovered_norm``
    (``sup |u|``, a proxy for ``sup |q1 - q2|``) and ``recovery_error``.
    """
    K1, K2 = _kernels_for(q1, q2, h, a)
    L = product_kernel(K1, K2)
    n = L.n
    dq = np.zeros(2 * n + 1)
    y = L.y[: n + 1]
    dq[: n + 1] = q1.evaluate(y, at_breaks="mean") - q2.evaluate(y, at_breaks="mean")
    d = laplace_density(L, dq)
    u = volterra_solve(L.values[:, : n + 1], d[: n + 1], L.h)
    return {
        "density_norm": float(np.max(np.abs(d[: n + 1]))),
        "recovered_norm": float(np.max(np.abs(u))),
        "recovery_error": float(np.max(np.abs(u - dq[: n + 1]))),
    }


def laplace_form_check(q1, q2, z, h, a=None, rtol=DEFAULT_RTOL):
    """Interchange-of-integration check.

    Compares ``int_0^a (q1 - q2) f1 f2 dx`` (Gauss-Legendre on exact Jost
    values) with ``int_0^{2a} d(y) exp(2iky) dy`` built from ``L``.
    Returns ``(x_form, y_form, |difference|)``.
    """
    a = _support_end(q1, q2) if a is None else float(a)
    lhs, _, _ = wronskian_identity_check(q1, q2, z, a, rtol)
    K1, K2 = _kernels_for(q1, q2, h, a)
    L = product_kernel(K1, K2)
    n = L.n
    dq = np.zeros(2 * n + 1)
    dq[: n + 1] = q1.evaluate(L.y[: n + 1], at_breaks="mean") - q2.evaluate(L.y[: n + 1], at_breaks="mean")
    d = laplace_density(L, dq)
    k = principal_sqrt(z)
    y_form = complex(np.sum(_trap_weights(2 * n + 1, h) * d * np.exp(2j * k * L.y)))
    return lhs, y_form, abs(lhs - y_form)


def finite_laplace(y, g, x):
    """``int_0^a g(t) exp(-x t) dt`` for the piecewise-linear interpolant of ``(y, g)``.

    Each cell is integrated exactly against the exponential, so constant and
    linear ``g`` are reproduced without quadrature error.
    """
    y = np.asarray(y, dtype=float)
    g = np.asarray(g, dtype=float)
    x = float(x)
    h = np.diff(y)
    g0, dg = g[:-1], np.diff(g)
    if x == 0:
        return float(np.sum(h * (g0 + 0.5 * dg)))
    xh = x * h
    i0 = -np.expm1(-xh) / x
    small = np.abs(xh) < 1e-3
    i1 = np.where(
        small,
        h**2 / 2 - x * h**3 / 3 + x**2 * h**4 / 8,
        (-np.expm1(-xh) - xh * np.exp(-xh)) / np.where(small, 1.0, x * x),
    )
    return float(np.sum(np.exp(-x * y[:-1]) * (g0 * i0 + dg / h * i1)))


def laplace_support_estimate(y, g, xs, floor=DEFAULT_FLOOR):
    """Fit the decay exponent of the finite Laplace transform over ``xs``.

    The exponent estimates ``inf supp g``; returns the :class:`DecayFit`.
    """
    pts = [(float(x), abs(finite_laplace(y, g, x))) for x in xs]
    return log_linear_fit(pts, floor, prefactor="fit")


def kernel_to_csv(K, fh=None, extended=False):
    """Rows ``x, y, K`` over the triangle ``x <= y <= a`` (``extended``: ``y <= 2a - x``), grouped by ``y``."""
    own = fh is None
    fh = fh or io.StringIO()
    w = csv.writer(fh, lineterminator="\n")
    w.writerow(["x", "y", "K"])
    n = K.n
    jmax = 2 * n if extended else n
    for j in range(jmax + 1):
        for i in range(0, min(j, 2 * n - j) + 1):
            w.writerow([format(i * K.h, ".17g"), format(j * K.h, ".17g"), format(float(K.values[i, j]), ".17g")])
    return fh.getvalue() if own else None


def kernel_cells(a, h):
    return _grid_size(a, h)


__all__ = [
    "TriangularKernelGrid", "finite_laplace", "jost_via_kernel", "kernel_bound", "kernel_to_csv",
    "laplace_density", "laplace_form_check", "laplace_support_estimate", "product_identity_residual",
    "product_kernel", "transformation_kernel", "volterra_pipeline", "volterra_solve",
    "wronskian_identity_check",
]
