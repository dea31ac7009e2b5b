"""Jost and Weyl solutions and the m-functions built from them.

Solutions are propagated backward from the right edge of the support, where
the Jost solution is a pure exponential.  On constant segments the transfer
matrix is applied in closed form; polynomial segments go through an adaptive
DOP853 integration.  The Riccati route (:func:`riccati_m_trace`) is an
independent integration used to cross-check the linear-system route.
"""

from __future__ import annotations

import csv
import io
import math
from concurrent.futures import ProcessPoolExecutor
from dataclasses import dataclass
from functools import partial

import numpy as np
from scipy.integrate import solve_ivp

from .errors import ConvergenceError, DomainError, PoleError, ValidationError
from .model import (
    DIRICHLET,
    FINITE_INTERVAL,
    FULL_LINE,
    HALF_LINE,
    BoundaryCondition,
    HermitianMatrixPotential,
    PiecewisePotential,
    ProblemSpec,
    validate,
)
from .numerics import SpectralRay, principal_sqrt, ray_points

DEFAULT_RTOL = 1e-10
RICCATI_GUARD = 1e6
POLE_RTOL = 1e-13


# ---------------------------------------------------------------------------
# spectral-floor bookkeeping


def spectral_floor(p, right_bc=None):
    """Real ``E`` such that real ``z <= E`` is safely below the spectrum.

    Uses ``H >= min(0, inf q)`` plus the Robin correction ``-(max(0, -cot beta))**2``
    for a right boundary condition, and a unit safety margin.
    """
    floor = p.inf_value() - 1.0
    if right_bc is not None and not right_bc.is_dirichlet:
        h = max(0.0, -right_bc.c / right_bc.s)
        floor -= h * h
    return floor


def _check_z(z, floor):
    z = complex(z)
    if not (math.isfinite(z.real) and math.isfinite(z.imag)):
        raise DomainError(f"z = {z} is not finite")
    if z.imag == 0.0 and z.real > floor:
        raise DomainError(f"real z = {z.real} is above the spectral floor {floor:.6g}")
    return z


# ---------------------------------------------------------------------------
# propagation engine (scalars are treated as 1x1 matrices)


def _as_matrix_potential(p):
    if isinstance(p, HermitianMatrixPotential):
        return p
    segs = tuple(np.asarray(seg, dtype=complex).reshape(-1, 1, 1) for seg in p.segments)
    return HermitianMatrixPotential(1, p.breakpoints, segs)


def _pieces(p, x_hi):
    """``(lo, hi, coeffs)`` covering ``[0, x_hi]`` in descending order."""
    out = []
    dim = p.dim
    zero = np.zeros((1, dim, dim), dtype=complex)
    if x_hi > p.support_sup:
        out.append((max(p.support_sup, 0.0), x_hi, zero))
    for (lo, hi), seg in reversed(list(zip(p.segment_bounds(), p.segments))):
        lo, hi = max(lo, 0.0), min(hi, x_hi)
        if hi > lo:
            out.append((lo, hi, seg))
    return out


def _polyval_matrix(coeffs, x):
    out = coeffs[-1].copy()
    for c in coeffs[-2::-1]:
        out = out * x + c
    return out


def _descending_with_end(points, end):
    return np.unique(np.append(points, end))[::-1]


def _propagate(p, z, x_start, f0, fp0, targets, rtol=DEFAULT_RTOL, *, log_scale=False):
    """Solve ``-F'' + (Q - z) F = 0`` backward from ``x_start``.

    ``f0`` and ``fp0`` are ``(dim, k)`` arrays at ``x_start``.  Returns the
    values and derivatives at ``targets`` (each ``>= 0`` and ``<= x_start``)
    as arrays of shape ``(len(targets), dim, k)``.  Solutions grow like
    ``exp(Re(sqrt(lambda - z)) x)`` towards 0, so the state is renormalized
    as it goes; with ``log_scale`` the normalized arrays are returned together
    with the per-target logarithm of the factor that was removed.
    """
    targets = np.asarray(targets, dtype=float)
    dim = p.dim
    f = np.array(f0, dtype=complex).reshape(dim, -1)
    fp = np.array(fp0, dtype=complex).reshape(dim, -1)
    k = f.shape[1]
    F = np.full((len(targets), dim, k), np.nan + 0j)
    Fp = np.full((len(targets), dim, k), np.nan + 0j)
    LS = np.zeros(len(targets))
    ls = 0.0
    at_start = targets >= x_start
    F[at_start], Fp[at_start] = f, fp
    eye = np.eye(dim)
    for lo, hi, coeffs in _pieces(p, x_start):
        inside = (targets >= lo) & (targets < hi)
        if not np.any(coeffs[1:]):
            lam, U = np.linalg.eigh(coeffs[0])
            kappa = np.sqrt((lam - z).astype(complex))[:, None]
            g, gp = U.conj().T @ f, U.conj().T @ fp

            def transfer(t, g=g, gp=gp, kappa=kappa, U=U):
                # cosh/sinh with the largest growth factor exp(top) pulled out
                top = float(np.max(kappa.real)) * t
                grow = np.exp(kappa * t - top)
                decay = np.exp(-kappa * t - top)
                ch, sh = 0.5 * (grow + decay), 0.5 * (grow - decay)
                safe = np.where(kappa == 0, 1, kappa)
                sh_k = np.where(kappa == 0, t * np.exp(-top), sh / safe)
                return U @ (ch * g - sh_k * gp), U @ (-kappa * sh * g + ch * gp), top

            for idx in np.flatnonzero(inside):
                F[idx], Fp[idx], top = transfer(hi - targets[idx])
                LS[idx] = ls + top
            f, fp, top = transfer(hi - lo)
            ls += top
        else:
            growth = math.sqrt(abs(z) + float(np.max(np.abs(coeffs))) * (1 + abs(hi)) ** len(coeffs))
            nsub = max(1, math.ceil(growth * (hi - lo) / 40.0))
            edges = np.linspace(hi, lo, nsub + 1)

            def rhs(x, y, coeffs=coeffs):
                Y = y.reshape(2, dim, k)
                A = _polyval_matrix(coeffs, x) - z * eye
                return np.concatenate([Y[1].ravel(), (A @ Y[0]).ravel()])

            for s_hi, s_lo in zip(edges[:-1], edges[1:]):
                s_lo = lo if s_lo <= lo else s_lo
                sub = (targets >= s_lo) & (targets < s_hi) & inside
                idx = np.flatnonzero(sub)
                t_eval = _descending_with_end(targets[idx], s_lo)
                scale = max(np.max(np.abs(f)), np.max(np.abs(fp)), 1e-300)
                y0 = np.concatenate([f.ravel(), fp.ravel()]) / scale
                ls += math.log(scale)
                sol = solve_ivp(rhs, (s_hi, s_lo), y0, method="DOP853", rtol=rtol, atol=rtol * 1e-6, t_eval=t_eval)
                if sol.status != 0:
                    raise ConvergenceError(f"ODE integration failed on [{s_lo}, {s_hi}]: {sol.message}")
                Y = sol.y.T.reshape(-1, 2, dim, k)
                pos = np.searchsorted(-t_eval, -targets[idx])
                F[idx], Fp[idx] = Y[pos, 0], Y[pos, 1]
                LS[idx] = ls
                f, fp = Y[-1, 0], Y[-1, 1]
        nrm = max(np.max(np.abs(f)), np.max(np.abs(fp)), 1e-300)
        f, fp = f / nrm, fp / nrm
        ls += math.log(nrm)
    at_zero = targets <= 0
    F[at_zero], Fp[at_zero] = f, fp
    LS[at_zero] = ls
    if log_scale:
        return F, Fp, LS
    factor = np.exp(LS)[:, None, None]
    return F * factor, Fp * factor


def _propagate_scalar(q, z, x_start, f0, fp0, targets, rtol=DEFAULT_RTOL, *, log_scale=False):
    out = _propagate(_as_matrix_potential(q), z, x_start, [[f0]], [[fp0]], targets, rtol, log_scale=log_scale)
    if log_scale:
        return out[0][:, 0, 0], out[1][:, 0, 0], out[2]
    return out[0][:, 0, 0], out[1][:, 0, 0]


# ---------------------------------------------------------------------------
# solutions


@dataclass(frozen=True, eq=False)
class SolutionTrace:
    """Sampled solution ``(f, f')`` on an ascending grid at spectral point ``z``."""

    grid: np.ndarray
    f: np.ndarray
    fp: np.ndarray
    z: complex
    kind: str

    def residual(self, q):
        """Max relative three-point residual of ``-f'' + (q - z) f`` off the breakpoints."""
        x, f = self.grid, self.f
        h = np.diff(x)
        if len(x) < 3 or not np.allclose(h, h[0]):
            raise ValueError("residual check needs a uniform grid of at least 3 points")
        h = h[0]
        qv = q.evaluate(x[1:-1])
        fpp = (f[2:] - 2 * f[1:-1] + f[:-2]) / h**2
        res = np.abs(-fpp + (qv - self.z) * f[1:-1])
        scale = np.abs(self.z) * np.abs(f[1:-1]) + np.abs(fpp) + 1e-300
        near = np.zeros(len(res), dtype=bool)
        for b in q.breakpoints:
            near |= np.abs(x[1:-1] - b) <= h * 1.0000001
        rel = (res / scale)[~near]
        return float(rel.max()) if rel.size else 0.0


def _grid(x_max, grid_step):
    if x_max <= 0:
        return np.array([0.0])
    if grid_step is None:
        grid_step = x_max / 400
    n = max(1, math.ceil(x_max / grid_step - 1e-9))
    return np.linspace(0.0, x_max, n + 1)


def jost_solution(q, z, grid_step=None, *, x_max=None, grid=None, rtol=DEFAULT_RTOL):
    """Jost solution ``f(z, x)`` with ``f = exp(i sqrt(z) x)`` beyond the support.

    The grid covers ``[0, max(alpha, x_max)]`` with spacing at most
    ``grid_step`` unless an explicit ``grid`` is given.
    """
    z = complex(z)
    k = principal_sqrt(z)
    alpha = q.support_sup
    if grid is None:
        grid = _grid(max(alpha, x_max or 0.0), grid_step)
    grid = np.asarray(grid, dtype=float)
    if np.any(grid < 0):
        raise DomainError("Jost grid must lie in x >= 0")
    f = np.exp(1j * k * grid)
    fp = 1j * k * f
    inner = grid < alpha
    if np.any(inner):
        e = np.exp(1j * k * alpha)
        fi, fpi = _propagate_scalar(q, z, alpha, e, 1j * k * e, grid[inner], rtol)
        f[inner], fp[inner] = fi, fpi
    if not (np.all(np.isfinite(f)) and np.all(np.isfinite(fp))):
        raise ConvergenceError(f"Jost solution overflowed at z = {z}")
    return SolutionTrace(grid, f, fp, z, "jost")


def m_halfline(q, z, rtol=DEFAULT_RTOL):
    """Dirichlet half-line m-function ``f'(z, 0) / f(z, 0)``."""
    z = _check_z(z, spectral_floor(q))
    k = principal_sqrt(z)
    alpha = q.support_sup
    if alpha <= 0 or q.is_zero:
        return 1j * k
    # unit start avoids underflow of exp(i k alpha) for large alpha * Im k
    f, fp, _ = _propagate_scalar(q, z, alpha, 1.0, 1j * k, [0.0], rtol, log_scale=True)
    return _ratio(fp[0], f[0], z)


def _ratio(num, den, z):
    # relative test: at an eigenvalue den vanishes only up to rounding
    if abs(den) <= POLE_RTOL * abs(num) or not np.isfinite(den) or not np.isfinite(num):
        raise PoleError(f"Weyl solution vanishes at x = 0 for z = {z}", z)
    m = complex(num / den)
    if not (math.isfinite(m.real) and math.isfinite(m.imag)):
        raise PoleError(f"m-function is singular at z = {z}", z)
    return m


def riccati_m_trace(q, z, grid, rtol=DEFAULT_RTOL, guard=RICCATI_GUARD):
    """``m(z, x)`` on ``grid`` from ``m' + m**2 = q - z`` integrated backward.

    Starts from ``m(z, alpha) = i sqrt(z)``.  If ``|m|`` exceeds ``guard`` on a
    segment (a zero of the Jost solution is near) the remaining grid values
    are taken from the linear-system route instead.
    """
    z = _check_z(z, spectral_floor(q))
    k = principal_sqrt(z)
    grid = np.asarray(grid, dtype=float)
    alpha = q.support_sup
    out = np.full(len(grid), 1j * k, dtype=complex)
    inner = grid < alpha
    if not np.any(inner):
        return out
    m = 1j * k
    mp = _as_matrix_potential(q)
    fallback_from = None
    for lo, hi, coeffs in _pieces(mp, alpha):
        c = coeffs[:, 0, 0]

        def rhs(x, y, c=c):
            return np.polynomial.polynomial.polyval(x, c) - z - y * y

        def blowup(x, y):
            return abs(y[0]) - guard

        blowup.terminal = True
        sel = np.flatnonzero((grid >= lo) & (grid < hi))
        t_eval = _descending_with_end(grid[sel], lo)
        sol = solve_ivp(
            rhs, (hi, lo), [m], method="DOP853", rtol=rtol, atol=rtol * abs(k) * 1e-3,
            t_eval=t_eval, events=blowup,
        )
        if sol.status != 0:
            fallback_from = hi
            break
        out[sel] = sol.y[0, np.searchsorted(-t_eval, -grid[sel])]
        m = sol.y[0, -1]
    if fallback_from is not None:
        rest = grid < fallback_from
        tr = jost_solution(q, z, grid=grid[rest], rtol=rtol)
        with np.errstate(divide="ignore", invalid="ignore"):
            vals = tr.fp / tr.f
        if not np.all(np.isfinite(vals)):
            raise PoleError(f"both Riccati and linear routes hit a pole at z = {z}", z)
        out[rest] = vals
    return out


def atkinson_residual(q, z, a, grid_step=None, rtol=DEFAULT_RTOL):
    """``sup_{x in [0, a]} |m(z, x) - i sqrt(z)|`` on a uniform grid."""
    grid = _grid(a, grid_step)
    m = riccati_m_trace(q, z, grid, rtol)
    return float(np.max(np.abs(m - 1j * principal_sqrt(z))))


# ---------------------------------------------------------------------------
# finite interval


def finite_weyl_solution(q, b, beta, z, targets, rtol=DEFAULT_RTOL, *, log_scale=False):
    """``(psi, psi')`` at ``targets`` for the solution with ``(psi, psi')(b) = (s, -c)``.

    With ``log_scale`` a third array holds ``log`` of the factor removed
    from each returned pair.
    """
    return _propagate_scalar(q, complex(z), b, beta.s, -beta.c, targets, rtol, log_scale=log_scale)


def m_finite(q, b, beta, z, rtol=DEFAULT_RTOL):
    """m-function of ``H(b, beta)`` (Dirichlet at 0)."""
    if q.support_sup > b:
        raise DomainError(f"support {q.support_sup} exceeds the interval end b = {b}")
    z = _check_z(z, spectral_floor(q, beta))
    psi, dpsi, _ = finite_weyl_solution(q, b, beta, z, [0.0], rtol, log_scale=True)
    return _ratio(dpsi[0], psi[0], z)


def _zeta_parts(k, beta):
    # zeta = N / D with zeta = (-i k - cot beta) / (-i k + cot beta), scaled by s
    return -1j * k * beta.s - beta.c, -1j * k * beta.s + beta.c


def free_weyl_finite(z, b, beta, x):
    """Closed-form Weyl solution of ``H(b, beta)`` for ``q = 0``, normalized to 1 at ``x = 0``."""
    k = principal_sqrt(z)
    zn, zd = _zeta_parts(k, beta)
    e = np.exp(2j * k * b)
    den = zd + zn * e
    if abs(den) <= POLE_RTOL * (abs(zd) + abs(zn * e)):
        raise PoleError(f"z = {z} is an eigenvalue of the free operator on [0, {b}]", z)
    return (zd * np.exp(1j * k * np.asarray(x)) + zn * np.exp(1j * k * (2 * b - np.asarray(x)))) / den


def free_m_finite(z, b, beta):
    """``psi0'(0) / psi0(0)`` for the free operator ``H(b, beta)``."""
    k = principal_sqrt(z)
    zn, zd = _zeta_parts(k, beta)
    e = np.exp(2j * k * b)
    den = zd + zn * e
    if abs(den) <= POLE_RTOL * (abs(zd) + abs(zn * e)):
        raise PoleError(f"z = {z} is an eigenvalue of the free operator on [0, {b}]", z)
    return complex(1j * k * (zd - zn * e) / den)


# ---------------------------------------------------------------------------
# boundary-condition transform, full line, matrix case


def m_alpha_transform(m, alpha):
    """``(-s + c m) / (c + s m)``: Dirichlet m-function to boundary angle ``alpha``."""
    den = alpha.c + alpha.s * m
    if den == 0:
        raise PoleError("m_alpha has a pole here (c + s m = 0)")
    return (-alpha.s + alpha.c * m) / den


def full_line_M(m_minus, m_plus):
    """2x2 full-line M-function from the two Dirichlet half-line m-functions."""
    d = m_minus - m_plus
    if d == 0:
        raise PoleError("m_minus == m_plus; full-line M is singular")
    off = 0.5 * (m_minus + m_plus)
    return np.array([[1.0, off], [off, m_minus * m_plus]], dtype=complex) / d


def full_line_halves_m(q, z, rtol=DEFAULT_RTOL):
    """``(m_minus, m_plus)`` with ``m_minus = psi_-'(0)/psi_-(0)`` (free: ``-i sqrt z``)."""
    q_plus, q_minus = q.halves()
    return -m_halfline(q_minus, z, rtol), m_halfline(q_plus, z, rtol)


def matrix_jost(Q, z, grid, rtol=DEFAULT_RTOL):
    """Matrix Jost solution ``F(z, x)`` with ``F = exp(i sqrt(z) x) I`` beyond the support."""
    z = complex(z)
    k = principal_sqrt(z)
    grid = np.asarray(grid, dtype=float)
    alpha = Q.support_sup
    eye = np.eye(Q.dim)
    e = np.exp(1j * k * grid)[:, None, None]
    F, Fp = e * eye, 1j * k * e * eye
    inner = grid < alpha
    if np.any(inner):
        ea = np.exp(1j * k * alpha)
        Fi, Fpi = _propagate(Q, z, alpha, ea * eye, 1j * k * ea * eye, grid[inner], rtol)
        F[inner], Fp[inner] = Fi, Fpi
    return F, Fp


def _matrix_ratio(Fp, F, z):
    # M = F' F^{-1}, via the transposed solve F^T M^T = F'^T
    if not np.all(np.isfinite(F)) or np.linalg.cond(F) > 1e14:
        raise PoleError(f"F(z, 0) is numerically singular at z = {z}", z)
    return np.linalg.solve(F.T, Fp.T).T


def matrix_M(Q, z, rtol=DEFAULT_RTOL):
    """Matrix m-function ``F'(z, 0) F(z, 0)^{-1}``."""
    z = _check_z(z, spectral_floor(Q))
    k = principal_sqrt(z)
    eye = np.eye(Q.dim)
    if Q.support_sup <= 0:
        return 1j * k * eye
    F, Fp, _ = _propagate(Q, z, Q.support_sup, eye.astype(complex), 1j * k * eye, [0.0], rtol, log_scale=True)
    return _matrix_ratio(Fp[0], F[0], z)


def matrix_M_trace_x(Q, z, grid, rtol=DEFAULT_RTOL):
    """``M(z, x)`` on ``grid`` from the matrix Jost solution."""
    F, Fp = matrix_jost(Q, z, grid, rtol)
    return np.array([_matrix_ratio(b, a, z) for a, b in zip(F, Fp)])


# ---------------------------------------------------------------------------
# problem-level evaluation and traces


def evaluate_m(spec, z, rtol=DEFAULT_RTOL):
    """m-value of a validated :class:`ProblemSpec` at ``z``.

    Returns a complex scalar for scalar half-line and interval problems, a
    2x2 matrix for the full line, and an ``m x m`` matrix for matrix problems.
    """
    p = spec.potential
    if isinstance(p, HermitianMatrixPotential):
        return matrix_M(p, z, rtol)
    if spec.geometry == FULL_LINE:
        m_minus, m_plus = full_line_halves_m(p, z, rtol)
        return full_line_M(m_minus, m_plus)
    if spec.geometry == FINITE_INTERVAL:
        m = m_finite(p, spec.b, spec.right_bc, z, rtol)
    else:
        m = m_halfline(p, z, rtol)
    if not spec.left_bc.is_dirichlet:
        m = m_alpha_transform(m, spec.left_bc)
    return m


@dataclass(frozen=True, eq=False)
class MTrace:
    """m-function samples ``values[i]`` at ``z[i]``.

    ``kind`` is ``"half_line"``, ``"finite"``, ``"full_line_2x2"`` or
    ``"matrix(m)"``; ``ray`` may be ``None`` for traces read from CSV.
    """

    z: np.ndarray
    values: np.ndarray
    kind: str
    ray: SpectralRay | None = None

    @property
    def is_matrix(self):
        return self.values.ndim == 3

    @property
    def samples(self):
        return list(zip(self.z, self.values))

    def off_ray(self):
        """Indices of samples not on the declared ray (empty when consistent)."""
        if self.ray is None:
            return []
        return [i for i, z in enumerate(self.z) if not self.ray.contains(z)]


def m_trace(spec, ray, rtol=DEFAULT_RTOL, jobs=1):
    """Sample :func:`evaluate_m` along ``ray``; order is ascending ``|z|`` for any ``jobs``."""
    spec = validate(spec)
    zs = [z for z, _ in ray_points(ray)]
    fn = partial(evaluate_m, spec, rtol=rtol)
    if jobs and jobs > 1:
        with ProcessPoolExecutor(max_workers=jobs) as pool:
            vals = list(pool.map(fn, zs, chunksize=max(1, len(zs) // (4 * jobs))))
    else:
        vals = [fn(z) for z in zs]
    return MTrace(np.array(zs), np.array(vals), spec.kind, ray)


def _fmt(x):
    return format(float(x), ".17g")


def trace_to_csv(trace, fh=None):
    """Write ``re_z, im_z, re_m, im_m`` (or row-major ``re_m_ij, im_m_ij``) with a header."""
    own = fh is None
    fh = fh or io.StringIO()
    w = csv.writer(fh, lineterminator="\n")
    if trace.is_matrix:
        m = trace.values.shape[1]
        cols = []
        for i in range(1, m + 1):
            for j in range(1, m + 1):
                cols += [f"re_m_{i}{j}", f"im_m_{i}{j}"]
        w.writerow(["re_z", "im_z"] + cols)
        for z, v in zip(trace.z, trace.values):
            row = [_fmt(z.real), _fmt(z.imag)]
            for c in v.reshape(-1):
                row += [_fmt(c.real), _fmt(c.imag)]
            w.writerow(row)
    else:
        w.writerow(["re_z", "im_z", "re_m", "im_m"])
        for z, v in zip(trace.z, trace.values):
            w.writerow([_fmt(z.real), _fmt(z.imag), _fmt(v.real), _fmt(v.imag)])
    return fh.getvalue() if own else None


def trace_from_csv(text, kind=None):
    rows = list(csv.reader(io.StringIO(text)))
    if not rows:
        raise ValidationError([("csv", "empty trace")])
    header, body = rows[0], rows[1:]
    if header[:2] != ["re_z", "im_z"]:
        raise ValidationError([("csv", "header must start with re_z, im_z")])
    try:
        data = np.array([[float(x) for x in r] for r in body], dtype=float).reshape(len(body), len(header))
    except ValueError as exc:
        raise ValidationError([("csv", f"malformed row: {exc}")]) from None
    z = data[:, 0] + 1j * data[:, 1]
    vals = data[:, 2::2] + 1j * data[:, 3::2]
    if header[2:] == ["re_m", "im_m"]:
        return MTrace(z, vals[:, 0], kind or "half_line")
    m = int(round(math.sqrt(vals.shape[1])))
    if m * m != vals.shape[1]:
        raise ValidationError([("csv", "matrix trace needs m*m complex columns")])
    return MTrace(z, vals.reshape(len(z), m, m), kind or f"matrix({m})")


__all__ = [
    "MTrace", "SolutionTrace", "atkinson_residual", "evaluate_m", "finite_weyl_solution", "free_m_finite",
    "free_weyl_finite", "full_line_M", "full_line_halves_m", "jost_solution", "m_alpha_transform",
    "m_finite", "m_halfline", "m_trace", "matrix_M", "matrix_M_trace_x", "matrix_jost",
    "riccati_m_trace", "spectral_floor", "trace_from_csv", "trace_to_csv",
]
