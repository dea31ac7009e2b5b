"""Potentials, boundary conditions and problem specifications.

Polynomial coefficients are in ascending powers of the global coordinate
``x`` (not of the offset from the segment start), so ``[0, 1]`` is
``q(x) = x`` on whichever segment it is attached to.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field

import numpy as np
from numpy.polynomial import polynomial as P

from .errors import DomainError, ValidationError

HERMITIAN_TOL = 1e-14
BC_TOL = 1e-14

HALF_LINE = "half_line"
FINITE_INTERVAL = "finite_interval"
FULL_LINE = "full_line"


def _structure_errors(breakpoints, n_segments, allow_negative_start=False):
    errors = []
    bp = breakpoints
    if len(bp) < 1:
        errors.append(("breakpoints", "need at least one breakpoint"))
        return errors
    if not all(math.isfinite(x) for x in bp):
        errors.append(("breakpoints", "non-finite breakpoint"))
    if any(b <= a for a, b in zip(bp, bp[1:])):
        errors.append(("breakpoints", "must be strictly increasing"))
    if allow_negative_start:
        if not bp[0] <= 0 <= bp[-1]:
            errors.append(("breakpoints", "full-line breakpoints must bracket 0"))
    elif bp[0] != 0:
        errors.append(("breakpoints", f"first breakpoint must be 0, got {bp[0]}"))
    if n_segments != len(bp) - 1:
        errors.append(("segments", f"expected {len(bp) - 1} segments, got {n_segments}"))
    return errors


def _segment_index(breakpoints, x):
    # right-continuous: x in [x_i, x_{i+1})
    return int(np.searchsorted(breakpoints, x, side="right")) - 1


@dataclass(frozen=True)
class PiecewisePotential:
    """Compactly supported piecewise-polynomial potential ``q``.

    ``q`` vanishes outside ``[breakpoints[0], breakpoints[-1])``.  Half-line
    and interval potentials start at 0; a full-line potential may start at a
    negative breakpoint and is split into its two half-line restrictions by
    :meth:`halves`.
    """

    breakpoints: tuple
    segments: tuple
    full_line: bool = False

    def __post_init__(self):
        bp = tuple(float(x) for x in self.breakpoints)
        segs = tuple(tuple(float(c) for c in seg) for seg in self.segments)
        object.__setattr__(self, "breakpoints", bp)
        object.__setattr__(self, "segments", segs)
        errors = _structure_errors(bp, len(segs), self.full_line)
        for i, seg in enumerate(segs):
            if not seg:
                errors.append((f"segments[{i}]", "empty coefficient list"))
            elif not all(math.isfinite(c) for c in seg):
                errors.append((f"segments[{i}]", "non-finite coefficient"))
        if errors:
            raise ValidationError(errors)

    @classmethod
    def zero(cls):
        return cls((0.0,), ())

    @classmethod
    def piecewise_constant(cls, breakpoints, values):
        return cls(tuple(breakpoints), tuple((v,) for v in values))

    @classmethod
    def indicator(cls, lo, hi, height=1.0):
        """``height`` on ``[lo, hi)``, zero elsewhere on the half-line."""
        if lo == 0:
            return cls((0.0, hi), ((height,),))
        return cls((0.0, lo, hi), ((0.0,), (height,)))

    @property
    def support_sup(self):
        return self.breakpoints[-1]

    @property
    def is_zero(self):
        return all(not any(seg) for seg in self.segments)

    def segment_bounds(self):
        bp = self.breakpoints
        return list(zip(bp[:-1], bp[1:]))

    def is_constant(self, i):
        return all(c == 0 for c in self.segments[i][1:])

    def __call__(self, x):
        return potential_eval(self, x)

    def evaluate(self, x, at_breaks="right"):
        """Vectorized evaluation without domain checks.

        ``at_breaks="mean"`` returns the average of the one-sided limits at
        interior breakpoints (used by trapezoid quadratures).
        """
        x = np.asarray(x, dtype=float)
        bp = np.asarray(self.breakpoints)
        out = np.zeros_like(x)
        for i, seg in enumerate(self.segments):
            mask = (x >= bp[i]) & (x < bp[i + 1])
            if mask.any():
                out[mask] = P.polyval(x[mask], seg)
        if at_breaks == "mean" and len(bp) > 0:
            for i, xb in enumerate(bp):
                hit = x == xb
                if not hit.any():
                    continue
                left = P.polyval(xb, self.segments[i - 1]) if i > 0 else 0.0
                right = P.polyval(xb, self.segments[i]) if i < len(self.segments) else 0.0
                out[hit] = 0.5 * (left + right)
        return out

    def sup_norm(self):
        best = 0.0
        for (lo, hi), seg in zip(self.segment_bounds(), self.segments):
            cand = [lo, hi]
            if len(seg) > 2:
                for r in P.polyroots(P.polyder(seg)):
                    if abs(r.imag) < 1e-12 and lo < r.real < hi:
                        cand.append(r.real)
            best = max(best, float(np.max(np.abs(P.polyval(np.array(cand), seg)))))
        return best

    def inf_value(self):
        """``min(0, inf q)``; a lower bound for the Dirichlet operator."""
        best = 0.0
        for (lo, hi), seg in zip(self.segment_bounds(), self.segments):
            cand = [lo, hi]
            if len(seg) > 2:
                for r in P.polyroots(P.polyder(seg)):
                    if abs(r.imag) < 1e-12 and lo < r.real < hi:
                        cand.append(r.real)
            best = min(best, float(np.min(P.polyval(np.array(cand), seg))))
        return best

    def tail_integral(self, u):
        """``int_u^alpha q(t) dt`` evaluated exactly, vectorized in ``u``."""
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        for (lo, hi), seg in zip(self.segment_bounds(), self.segments):
            anti = P.polyint(seg)
            a = np.clip(u, lo, hi)
            out += P.polyval(hi, anti) - P.polyval(a, anti)
        return out

    def abs_tail_integral(self, u, moment=0):
        """``int_u^alpha t**moment |q(t)| dt``, exact (segments are split at sign changes)."""
        u = np.asarray(u, dtype=float)
        out = np.zeros_like(u)
        for (lo, hi), seg in zip(self.segment_bounds(), self.segments):
            cuts = [lo, hi]
            if len(seg) > 1:
                for r in P.polyroots(seg):
                    if abs(r.imag) < 1e-12 and lo < r.real < hi:
                        cuts.append(r.real)
            cuts.sort()
            weighted = P.polymul(seg, [0.0] * moment + [1.0])
            anti = P.polyint(weighted)
            for a, b in zip(cuts[:-1], cuts[1:]):
                sign = np.sign(P.polyval(0.5 * (a + b), seg))
                c = np.clip(u, a, b)
                out += sign * (P.polyval(b, anti) - P.polyval(c, anti))
        return out

    def refined(self, breakpoints):
        """Same function on the union of its breakpoints and ``breakpoints``."""
        extra = [float(b) for b in breakpoints if self.breakpoints[0] <= b]
        bp = sorted(set(self.breakpoints) | set(extra))
        segs = []
        for lo in bp[:-1]:
            i = _segment_index(self.breakpoints, lo)
            segs.append(self.segments[i] if 0 <= i < len(self.segments) else (0.0,))
        return PiecewisePotential(tuple(bp), tuple(segs), self.full_line)

    def reflected(self):
        """``x -> q(-x)`` with reversed breakpoints."""
        bp = tuple(-b for b in reversed(self.breakpoints))
        segs = tuple(
            tuple(c * (-1) ** k for k, c in enumerate(seg)) for seg in reversed(self.segments)
        )
        return PiecewisePotential(bp, segs, True)

    def halves(self):
        """``(q_plus, q_minus)`` with ``q_plus(x) = q(x)``, ``q_minus(x) = q(-x)`` on ``x >= 0``."""
        q = self.refined([0.0]) if self.breakpoints[0] < 0 < self.breakpoints[-1] else self
        bp = np.asarray(q.breakpoints)
        k = int(np.searchsorted(bp, 0.0))
        if bp[-1] <= 0:
            plus = PiecewisePotential.zero()
        else:
            plus = PiecewisePotential(tuple(bp[k:]), q.segments[k:])
        if bp[0] >= 0:
            minus = PiecewisePotential.zero()
        else:
            left = PiecewisePotential(tuple(bp[: k + 1]), q.segments[:k], True)
            r = left.reflected()
            minus = PiecewisePotential(r.breakpoints, r.segments)
        return plus, minus


def _as_matrix_coeffs(seg, dim):
    arr = np.asarray(seg, dtype=complex)
    return arr.reshape(-1, dim, dim)


@dataclass(frozen=True, eq=False)
class HermitianMatrixPotential:
    """Compactly supported piecewise-polynomial ``m x m`` Hermitian potential.

    ``segments[i]`` is an array of shape ``(degree + 1, dim, dim)``.
    """

    dim: int
    breakpoints: tuple
    segments: tuple

    def __post_init__(self):
        bp = tuple(float(x) for x in self.breakpoints)
        object.__setattr__(self, "breakpoints", bp)
        errors = []
        if int(self.dim) != self.dim or self.dim < 1:
            raise ValidationError([("dim", f"must be a positive integer, got {self.dim}")])
        segs = []
        for i, seg in enumerate(self.segments):
            try:
                arr = _as_matrix_coeffs(seg, self.dim)
            except ValueError:
                errors.append((f"segments[{i}]", f"coefficients are not {self.dim}x{self.dim}"))
                continue
            if arr.shape[0] == 0:
                errors.append((f"segments[{i}]", "empty coefficient list"))
            if not np.all(np.isfinite(arr)):
                errors.append((f"segments[{i}]", "non-finite coefficient"))
            arr.setflags(write=False)
            segs.append(arr)
        object.__setattr__(self, "segments", tuple(segs))
        errors = _structure_errors(bp, len(segs), False) + errors
        if errors:
            raise ValidationError(errors)

    def __eq__(self, other):
        if not isinstance(other, HermitianMatrixPotential):
            return NotImplemented
        return (
            self.dim == other.dim
            and self.breakpoints == other.breakpoints
            and len(self.segments) == len(other.segments)
            and all(a.shape == b.shape and np.array_equal(a, b) for a, b in zip(self.segments, other.segments))
        )

    __hash__ = None

    @classmethod
    def zero(cls, dim):
        return cls(dim, (0.0,), ())

    @classmethod
    def diagonal(cls, potentials):
        """Diagonal matrix potential from scalar entries."""
        bp = sorted(set().union(*(p.breakpoints for p in potentials)))
        dim = len(potentials)
        segs = []
        for lo in bp[:-1]:
            entries = []
            for p in potentials:
                i = _segment_index(p.breakpoints, lo)
                entries.append(p.segments[i] if 0 <= i < len(p.segments) else (0.0,))
            deg = max(len(e) for e in entries)
            arr = np.zeros((deg, dim, dim), dtype=complex)
            for j, e in enumerate(entries):
                arr[: len(e), j, j] = e
            segs.append(arr)
        return cls(dim, tuple(bp), tuple(segs))

    @property
    def support_sup(self):
        return self.breakpoints[-1]

    def segment_bounds(self):
        bp = self.breakpoints
        return list(zip(bp[:-1], bp[1:]))

    def is_constant(self, i):
        return not np.any(self.segments[i][1:])

    def __call__(self, x):
        return potential_eval(self, x)

    def evaluate(self, x):
        x = float(x)
        i = _segment_index(self.breakpoints, x)
        if i < 0 or i >= len(self.segments):
            return np.zeros((self.dim, self.dim), dtype=complex)
        coeffs = self.segments[i]
        out = np.zeros((self.dim, self.dim), dtype=complex)
        for c in coeffs[::-1]:
            out = out * x + c
        return out

    def hermitian_errors(self):
        errors = []
        for i, arr in enumerate(self.segments):
            for k, c in enumerate(arr):
                scale = max(1.0, float(np.max(np.abs(c))))
                if np.max(np.abs(c - c.conj().T)) > HERMITIAN_TOL * scale:
                    errors.append((f"segments[{i}][{k}]", "coefficient matrix is not Hermitian"))
        return errors

    def inf_value(self, samples=64):
        best = 0.0
        for lo, hi in self.segment_bounds():
            for x in np.linspace(lo, hi, samples):
                lam = np.linalg.eigvalsh(self.evaluate(min(x, np.nextafter(hi, lo))))
                best = min(best, float(lam[0]))
        return best

    def sup_norm(self, samples=64):
        best = 0.0
        for lo, hi in self.segment_bounds():
            for x in np.linspace(lo, hi, samples):
                best = max(best, float(np.linalg.norm(self.evaluate(min(x, np.nextafter(hi, lo))), 2)))
        return best


def potential_eval(p, x, b=None):
    """Value of ``q(x)`` (or ``Q(x)``); zero beyond the support.

    ``b`` restricts the domain to ``[0, b]`` for interval problems.
    """
    x = float(x)
    lo = p.breakpoints[0] if isinstance(p, PiecewisePotential) and p.full_line else 0.0
    if not math.isfinite(x) or x < lo or (b is not None and x > b):
        raise DomainError(f"x = {x} outside the domain")
    if isinstance(p, HermitianMatrixPotential):
        return p.evaluate(x)
    return float(p.evaluate(np.array([x]))[0])


@dataclass(frozen=True)
class BoundaryCondition:
    """Projective pair ``(c, s)`` for ``s*g' + c*g = 0`` with ``c**2 + s**2 = 1``, ``s >= 0``.

    ``(1, 0)`` is Dirichlet, ``(0, 1)`` Neumann.  The angle is
    ``atan2(s, c)`` in ``[0, pi)``.
    """

    c: float = 1.0
    s: float = 0.0

    def __post_init__(self):
        c, s = float(self.c), float(self.s)
        norm = math.hypot(c, s)
        if not math.isfinite(norm) or norm == 0:
            raise ValidationError([("bc", f"(c, s) = ({c}, {s}) is not a valid projective pair")])
        if abs(norm - 1.0) > BC_TOL:
            c, s = c / norm, s / norm
        if s < 0 or (s == 0 and c < 0):
            c, s = -c, -s
        object.__setattr__(self, "c", c + 0.0)
        object.__setattr__(self, "s", s + 0.0)

    @classmethod
    def from_angle(cls, angle):
        c, s = math.cos(angle), math.sin(angle)
        # snap rounding residue so pi/2 gives an exact Neumann pair
        c = 0.0 if abs(c) < 1e-16 else c
        s = 0.0 if abs(s) < 1e-16 else s
        return cls(c, s)

    @classmethod
    def dirichlet(cls):
        return cls(1.0, 0.0)

    @classmethod
    def neumann(cls):
        return cls(0.0, 1.0)

    @property
    def angle(self):
        a = math.atan2(self.s, self.c)
        return 0.0 if a >= math.pi else a

    @property
    def is_dirichlet(self):
        return self.s == 0.0

    @property
    def cot(self):
        if self.s == 0:
            raise DomainError("cot is infinite for the Dirichlet condition")
        return self.c / self.s


DIRICHLET = BoundaryCondition(1.0, 0.0)


@dataclass(frozen=True)
class ProblemSpec:
    """Operator description: geometry, potential and boundary conditions.

    ``b`` is the right endpoint for ``geometry == "finite_interval"``.
    """

    geometry: str
    potential: object
    left_bc: BoundaryCondition = field(default=DIRICHLET)
    right_bc: BoundaryCondition | None = None
    b: float | None = None

    @property
    def is_matrix(self):
        return isinstance(self.potential, HermitianMatrixPotential)

    @property
    def kind(self):
        if self.is_matrix:
            return f"matrix({self.potential.dim})"
        return {HALF_LINE: "half_line", FINITE_INTERVAL: "finite", FULL_LINE: "full_line_2x2"}[self.geometry]


def validate(spec):
    """Return a normalized copy of ``spec`` or raise :class:`ValidationError`."""
    errors = []
    geometry = spec.geometry
    p = spec.potential
    if geometry not in (HALF_LINE, FINITE_INTERVAL, FULL_LINE):
        errors.append(("geometry", f"unknown geometry {geometry!r}"))
    if not isinstance(p, (PiecewisePotential, HermitianMatrixPotential)):
        errors.append(("potential", "not a potential"))
        raise ValidationError(errors)
    if isinstance(p, HermitianMatrixPotential):
        errors += [("potential." + path, msg) for path, msg in p.hermitian_errors()]
        if geometry == FULL_LINE:
            errors.append(("geometry", "full-line matrix problems are not supported"))
    if geometry == FULL_LINE:
        if isinstance(p, PiecewisePotential) and not p.full_line and p.breakpoints[0] != 0:
            errors.append(("potential.breakpoints", "must bracket 0"))
    elif isinstance(p, PiecewisePotential) and p.breakpoints[0] != 0:
        errors.append(("potential.breakpoints", "first breakpoint must be 0"))
    if not math.isfinite(p.support_sup):
        errors.append(("potential", "support must be bounded"))
    b = spec.b
    right = spec.right_bc
    if geometry == FINITE_INTERVAL:
        if b is None or not (math.isfinite(b) and b > 0):
            errors.append(("geometry.finite_interval", f"b must be a positive real, got {b}"))
        elif p.support_sup > b:
            errors.append(("potential", f"support_sup {p.support_sup} exceeds b = {b}"))
        if right is None:
            right = DIRICHLET
    else:
        if right is not None:
            errors.append(("right_bc", "only allowed for finite_interval"))
        if b is not None:
            errors.append(("geometry", "b only allowed for finite_interval"))
    left = spec.left_bc if spec.left_bc is not None else DIRICHLET
    if geometry == FULL_LINE and not left.is_dirichlet:
        errors.append(("left_bc", "full-line problems pair Dirichlet half-lines at 0"))
    if isinstance(p, HermitianMatrixPotential) and not left.is_dirichlet:
        errors.append(("left_bc", "matrix problems use the Dirichlet condition"))
    if errors:
        raise ValidationError(errors)
    if isinstance(p, PiecewisePotential) and geometry == FULL_LINE and not p.full_line:
        p = PiecewisePotential(p.breakpoints, p.segments, True)
    return ProblemSpec(geometry, p, BoundaryCondition(left.c, left.s), right, b)


# JSON problem documents

_TOP_FIELDS = {"geometry", "potential", "left_bc", "right_bc"}


def _parse_bc(obj, path):
    if not isinstance(obj, dict) or set(obj) != {"c", "s"}:
        raise ValidationError([(path, 'expected {"c": ..., "s": ...}')])
    try:
        return BoundaryCondition(float(obj["c"]), float(obj["s"]))
    except (TypeError, ValueError):
        raise ValidationError([(path, "c and s must be numbers")]) from None
    except ValidationError as exc:
        raise ValidationError([(path, msg) for _, msg in exc.errors]) from None


def _parse_potential(obj, full_line):
    path = "potential"
    if not isinstance(obj, dict):
        raise ValidationError([(path, "expected an object")])
    try:
        if "dim" in obj:
            unknown = set(obj) - {"dim", "breakpoints", "segments"}
            if unknown:
                raise ValidationError([(path, f"unknown fields {sorted(unknown)}")])
            dim = obj["dim"]
            if not isinstance(dim, int) or isinstance(dim, bool):
                raise ValidationError([(path + ".dim", "must be an integer")])
            segs = []
            for i, seg in enumerate(obj["segments"]):
                coeffs = []
                for k, flat in enumerate(seg):
                    pairs = np.asarray(flat, dtype=float)
                    if pairs.shape != (dim * dim, 2):
                        raise ValidationError(
                            [(f"{path}.segments[{i}][{k}]", f"expected {dim * dim} [re, im] pairs")]
                        )
                    coeffs.append((pairs[:, 0] + 1j * pairs[:, 1]).reshape(dim, dim))
                segs.append(np.array(coeffs).reshape(-1, dim, dim) if coeffs else np.zeros((0, dim, dim)))
            return HermitianMatrixPotential(dim, tuple(obj["breakpoints"]), tuple(segs))
        unknown = set(obj) - {"breakpoints", "segments"}
        if unknown:
            raise ValidationError([(path, f"unknown fields {sorted(unknown)}")])
        return PiecewisePotential(tuple(obj["breakpoints"]), tuple(obj["segments"]), full_line)
    except KeyError as exc:
        raise ValidationError([(path, f"missing field {exc.args[0]!r}")]) from None
    except (TypeError, ValueError) as exc:
        raise ValidationError([(path, f"malformed: {exc}")]) from None
    except ValidationError as exc:
        raise ValidationError(
            [(p if p.startswith(path) else f"{path}.{p}", msg) for p, msg in exc.errors]
        ) from None


def parse_problem(doc):
    """Build and validate a :class:`ProblemSpec` from a decoded JSON document."""
    if not isinstance(doc, dict):
        raise ValidationError([("", "problem document must be a JSON object")])
    unknown = set(doc) - _TOP_FIELDS
    if unknown:
        raise ValidationError([("", f"unknown fields {sorted(unknown)}")])
    if "geometry" not in doc or "potential" not in doc:
        raise ValidationError([("", "geometry and potential are required")])
    geo = doc["geometry"]
    b = None
    if isinstance(geo, dict):
        if set(geo) != {FINITE_INTERVAL}:
            raise ValidationError([("geometry", f"unknown geometry {sorted(geo)}")])
        try:
            b = float(geo[FINITE_INTERVAL])
        except (TypeError, ValueError):
            raise ValidationError([("geometry.finite_interval", "b must be a number")]) from None
        geometry = FINITE_INTERVAL
    elif geo in (HALF_LINE, FULL_LINE):
        geometry = geo
    else:
        raise ValidationError([("geometry", f"unknown geometry {geo!r}")])
    potential = _parse_potential(doc["potential"], geometry == FULL_LINE)
    left = _parse_bc(doc["left_bc"], "left_bc") if "left_bc" in doc else DIRICHLET
    right = _parse_bc(doc["right_bc"], "right_bc") if "right_bc" in doc else None
    return validate(ProblemSpec(geometry, potential, left, right, b))


def emit_problem(spec):
    """Inverse of :func:`parse_problem`."""
    p = spec.potential
    if isinstance(p, HermitianMatrixPotential):
        pot = {
            "dim": p.dim,
            "breakpoints": list(p.breakpoints),
            "segments": [
                [[[c.real, c.imag] for c in coeff.reshape(-1)] for coeff in seg] for seg in p.segments
            ],
        }
    else:
        pot = {"breakpoints": list(p.breakpoints), "segments": [list(seg) for seg in p.segments]}
    geometry = {FINITE_INTERVAL: spec.b} if spec.geometry == FINITE_INTERVAL else spec.geometry
    doc = {"geometry": geometry, "potential": pot, "left_bc": {"c": spec.left_bc.c, "s": spec.left_bc.s}}
    if spec.right_bc is not None:
        doc["right_bc"] = {"c": spec.right_bc.c, "s": spec.right_bc.s}
    return doc
