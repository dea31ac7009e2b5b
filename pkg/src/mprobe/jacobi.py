"""Finite Jacobi operators: m-function, moments, decay order and inverse problem.

The m-function of a Jacobi matrix has the large-``z`` expansion
``m(z) = -sum_k mu_k z**(-k-1)`` with ``mu_k = <delta_0, J**k delta_0>``, so
the order of contact of two m-functions at infinity is read off the first
moment in which they differ.  Moments are computed exactly in rational mode.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction
from numbers import Rational

import numpy as np

from .errors import ConfigurationError, ConvergenceError, DomainError, PoleError, ValidationError

FLOAT = "float"
RATIONAL = "rational"
MEASURE_TOL = 1e-14


def _to_fraction(v):
    if isinstance(v, str):
        return Fraction(v.strip())
    if isinstance(v, float):
        return Fraction(v)
    return Fraction(v)


@dataclass(frozen=True)
class JacobiOperator:
    """Symmetric tridiagonal matrix with diagonal ``b`` and off-diagonal ``a > 0``."""

    a: tuple
    b: tuple
    arithmetic: str = FLOAT

    def __post_init__(self):
        if self.arithmetic not in (FLOAT, RATIONAL):
            raise ConfigurationError(f"unknown arithmetic {self.arithmetic!r}")
        conv = _to_fraction if self.arithmetic == RATIONAL else float
        a = tuple(conv(v) for v in self.a)
        b = tuple(conv(v) for v in self.b)
        if len(b) == 0:
            raise ValidationError([("b", "a Jacobi operator needs at least one diagonal entry")])
        if len(a) != len(b) - 1:
            raise ValidationError([("a", f"expected {len(b) - 1} off-diagonal entries, got {len(a)}")])
        bad = [(f"a[{i}]", "must be > 0") for i, v in enumerate(a) if not v > 0]
        bad += [(f"b[{i}]", "must be finite") for i, v in enumerate(b) if not math.isfinite(v)]
        if bad:
            raise ValidationError(bad)
        object.__setattr__(self, "a", a)
        object.__setattr__(self, "b", b)

    @property
    def n(self):
        return len(self.b)

    @property
    def is_rational(self):
        return self.arithmetic == RATIONAL

    def to_float(self):
        return JacobiOperator(tuple(float(v) for v in self.a), tuple(float(v) for v in self.b), FLOAT)

    def matrix(self):
        return np.diag(np.array(self.b, dtype=float)) + np.diag(np.array(self.a, dtype=float), 1) + np.diag(
            np.array(self.a, dtype=float), -1
        )

    def norm(self):
        return float(np.linalg.norm(self.matrix(), 2))

    def apply(self, v):
        """``J @ v`` for a list ``v``; exact when the entries are fractions."""
        n = self.n
        out = []
        for k in range(n):
            acc = self.b[k] * v[k]
            if k > 0:
                acc += self.a[k - 1] * v[k - 1]
            if k < n - 1:
                acc += self.a[k] * v[k + 1]
            out.append(acc)
        return out

    def to_dict(self):
        fmt = (lambda v: f"{v.numerator}/{v.denominator}") if self.is_rational else float
        return {"a": [fmt(v) for v in self.a], "b": [fmt(v) for v in self.b], "arithmetic": self.arithmetic}

    @classmethod
    def from_dict(cls, doc):
        if not isinstance(doc, dict):
            raise ValidationError([("$", "expected an object")])
        extra = set(doc) - {"a", "b", "arithmetic"}
        if extra:
            raise ValidationError([(f"$.{k}", "unknown field") for k in sorted(extra)])
        if "b" not in doc:
            raise ValidationError([("$.b", "missing")])
        arith = doc.get("arithmetic", FLOAT)
        try:
            return cls(tuple(doc.get("a", ())), tuple(doc["b"]), arith)
        except (TypeError, ValueError, ZeroDivisionError) as exc:
            raise ValidationError([("$", str(exc))]) from exc


@dataclass(frozen=True)
class DiscreteMeasure:
    """Finite probability measure ``sum_i w_i delta(lambda_i)``."""

    points: tuple
    weights: tuple
    arithmetic: str = FLOAT

    def __post_init__(self):
        conv = _to_fraction if self.arithmetic == RATIONAL else float
        pts = tuple(conv(v) for v in self.points)
        w = tuple(conv(v) for v in self.weights)
        errs = []
        if len(pts) != len(w):
            errs.append(("weights", "length differs from points"))
        if len(set(pts)) != len(pts):
            errs.append(("points", "must be distinct"))
        errs += [(f"weights[{i}]", "must be > 0") for i, v in enumerate(w) if not v > 0]
        total = sum(w)
        if self.arithmetic == RATIONAL:
            if total != 1:
                errs.append(("weights", f"sum to {total}, not 1"))
        elif abs(total - 1) > MEASURE_TOL * max(1, len(w)):
            errs.append(("weights", f"sum to {total!r}, not 1"))
        if errs:
            raise ValidationError(errs)
        object.__setattr__(self, "points", pts)
        object.__setattr__(self, "weights", w)

    @classmethod
    def of(cls, J: JacobiOperator):
        """Spectral measure of ``J`` at ``delta_0`` (float)."""
        lam, U = np.linalg.eigh(J.to_float().matrix())
        w = U[0] ** 2
        return cls(tuple(lam), tuple(w / w.sum()))

    def integrate(self, f):
        return sum(wi * f(p) for p, wi in zip(self.points, self.weights))

    def to_dict(self):
        fmt = (lambda v: f"{v.numerator}/{v.denominator}") if self.arithmetic == RATIONAL else float
        return {"points": [fmt(v) for v in self.points], "weights": [fmt(v) for v in self.weights]}

    @classmethod
    def from_dict(cls, doc, arithmetic=None):
        if not isinstance(doc, dict) or set(doc) != {"points", "weights"}:
            raise ValidationError([("$", "expected exactly the fields points and weights")])
        if arithmetic is None:
            raw = list(doc["points"]) + list(doc["weights"])
            arithmetic = RATIONAL if any(isinstance(v, str) for v in raw) else FLOAT
        try:
            return cls(tuple(doc["points"]), tuple(doc["weights"]), arithmetic)
        except (TypeError, ValueError, ZeroDivisionError) as exc:
            raise ValidationError([("$", str(exc))]) from exc


@dataclass(frozen=True)
class PolynomialTable:
    """Monomial coefficients (ascending) of ``P_0 .. P_{n-1}``."""

    coeffs: tuple

    def __call__(self, k, x):
        return sum(c * x**i for i, c in enumerate(self.coeffs[k]))

    def gram(self, mu: DiscreteMeasure):
        n = len(self.coeffs)
        return [[mu.integrate(lambda x, j=j, k=k: self(j, x) * self(k, x)) for k in range(n)] for j in range(n)]


def jacobi_m(J: JacobiOperator, z):
    """``(delta_0, (J - z)^{-1} delta_0)`` by elimination from the bottom row.

    Exact for rational ``J`` and rational ``z``; otherwise complex floats.
    """
    exact = J.is_rational and isinstance(z, Rational)
    if not exact:
        z = complex(z)
        a = [float(v) for v in J.a]
        b = [float(v) for v in J.b]
    else:
        a, b = list(J.a), list(J.b)
    # d_k = b_k - z - a_k^2 / d_{k+1}; None marks an infinite pivot
    d = b[-1] - z
    for k in range(J.n - 2, -1, -1):
        tail = 0 if d is None else (None if d == 0 else a[k] ** 2 / d)
        d = None if tail is None else b[k] - z - tail
    if d is None:
        return Fraction(0) if exact else 0j
    if d == 0:
        raise PoleError(f"z = {z} is an eigenvalue of J", z)
    return 1 / d if exact else complex(1 / d)


def moments(J: JacobiOperator, K: int):
    """``mu_0 .. mu_K`` with ``mu_k = <delta_0, J**k delta_0>``."""
    if K < 0:
        raise ConfigurationError("K must be >= 0")
    one = Fraction(1) if J.is_rational else 1.0
    zero = one - one
    v = [one] + [zero] * (J.n - 1)
    out = [v[0]]
    for _ in range(K):
        v = J.apply(v)
        out.append(v[0])
    return out


@dataclass(frozen=True)
class DecayOrder:
    """``m1 - m2 = O(|z|^-n)``; ``at_least`` means no moment up to the cut-off differed."""

    n: int
    at_least: bool = False

    def __str__(self):
        return f">= {self.n}" if self.at_least else str(self.n)

    def value(self):
        return math.inf if self.at_least else self.n


def decay_order(J1: JacobiOperator, J2: JacobiOperator, K_max: int) -> DecayOrder:
    m1, m2 = moments(J1, K_max), moments(J2, K_max)
    for k, (x, y) in enumerate(zip(m1, m2)):
        if x != y:
            return DecayOrder(k + 1)
    return DecayOrder(K_max + 2, at_least=True)


@dataclass(frozen=True)
class AgreementDepth:
    """Coefficients agree for ``a_k, k <= a_max`` and ``b_k, k <= b_max`` (``-1``: none)."""

    a_max: int
    b_max: int

    def covered_by(self, other):
        return self.a_max <= other.a_max and self.b_max <= other.b_max


def agreement_depth(N: int) -> AgreementDepth:
    """Coefficient agreement forced by ``m1 - m2 = O(|z|^-N)``, ``N >= 3``."""
    if N < 3:
        raise DomainError(f"agreement depth is defined for N >= 3, got {N}")
    if N % 2 == 0:
        k = (N - 4) // 2
        return AgreementDepth(k, k)
    return AgreementDepth((N - 5) // 2, (N - 3) // 2)


def interleaved(J: JacobiOperator):
    """``b_0, a_0, b_1, a_1, ...``: the order in which moments see the entries."""
    out = []
    for k in range(J.n):
        out.append(J.b[k])
        if k < J.n - 1:
            out.append(J.a[k])
    return out


def actual_depth(J1: JacobiOperator, J2: JacobiOperator) -> AgreementDepth:
    """Leading coefficient agreement measured directly (``inf`` style large values when identical)."""
    s1, s2 = interleaved(J1), interleaved(J2)
    p = 0
    while p < min(len(s1), len(s2)) and s1[p] == s2[p]:
        p += 1
    if p == len(s1) == len(s2):
        big = len(s1)
        return AgreementDepth(big, big)
    return AgreementDepth((p - 2) // 2 if p >= 2 else -1, (p - 1) // 2 if p >= 1 else -1)


@dataclass(frozen=True)
class EquivalenceReport:
    order: DecayOrder
    depth: AgreementDepth
    violations: tuple

    @property
    def ok(self):
        return not self.violations


def verify_order_equivalence(J1: JacobiOperator, J2: JacobiOperator, K_max: int) -> EquivalenceReport:
    """Check ``m1 - m2 = O(|z|^-N)`` iff the predicted coefficients agree, for ``3 <= N <= K_max + 1``."""
    order = decay_order(J1, J2, K_max)
    depth = actual_depth(J1, J2)
    violations = []
    for N in range(3, K_max + 2):
        decays = order.value() >= N
        agrees = agreement_depth(N).covered_by(depth)
        if decays != agrees:
            violations.append(
                f"N={N}: decay order {order} {'implies' if decays else 'excludes'} O(|z|^-{N}) but "
                f"agreement depth a<={depth.a_max}, b<={depth.b_max} "
                f"{'does' if agrees else 'does not'} cover a<={agreement_depth(N).a_max}, b<={agreement_depth(N).b_max}"
            )
    return EquivalenceReport(order, depth, tuple(violations))


def random_pair(rng, n=8, lo=-3, hi=3, a_lo=1, a_hi=3):
    """Random integer pair sharing a random interleaved prefix, then differing in one entry.

    When the prefix covers every entry the two operators are identical.
    """
    b = [int(v) for v in rng.integers(lo, hi + 1, n)]
    a = [int(v) for v in rng.integers(a_lo, a_hi + 1, n - 1)]
    J1 = JacobiOperator(tuple(a), tuple(b), RATIONAL)
    total = 2 * n - 1
    p = int(rng.integers(0, total + 1))
    s = interleaved(J1)
    s2 = list(s)
    for i in range(p + 1, total):
        s2[i] = Fraction(int(rng.integers(a_lo, a_hi + 1))) if i % 2 else Fraction(int(rng.integers(lo, hi + 1)))
    if p < total:
        span = range(a_lo, a_hi + 1) if p % 2 else range(lo, hi + 1)
        choices = [v for v in span if v != s[p]]
        s2[p] = Fraction(int(rng.choice(choices)))
    J2 = JacobiOperator(tuple(s2[1::2]), tuple(s2[0::2]), RATIONAL)
    return J1, J2


def reconstruct(mu: DiscreteMeasure, n: int) -> tuple[JacobiOperator, PolynomialTable]:
    """Jacobi coefficients from a discrete measure.

    Float mode runs Lanczos on ``diag(points)`` from ``sqrt(weights)`` with
    full reorthogonalization.  Rational mode runs the monic Stieltjes
    recurrence exactly; ``a_k`` is then exact only if ``a_k**2`` is the
    square of a rational, otherwise :class:`DomainError` is raised.
    """
    if n < 1:
        raise ConfigurationError("n must be >= 1")
    if len(mu.points) < n:
        raise DomainError(f"measure has {len(mu.points)} points; cannot build {n} orthonormal polynomials")
    if mu.arithmetic == RATIONAL:
        return _reconstruct_exact(mu, n)
    lam = np.array(mu.points, dtype=float)
    Q = np.zeros((n, len(lam)))
    Q[0] = np.sqrt(np.array(mu.weights, dtype=float))
    a, b = [], []
    for k in range(n):
        v = lam * Q[k]
        b.append(float(Q[k] @ v))
        if k == n - 1:
            break
        for _ in range(2):
            v -= Q[: k + 1].T @ (Q[: k + 1] @ v)
        nrm = float(np.linalg.norm(v))
        if nrm <= 1e-12 * max(1.0, float(np.max(np.abs(lam)))):
            raise ConvergenceError(f"Lanczos breakdown at step {k}: measure rank exhausted")
        a.append(nrm)
        Q[k + 1] = v / nrm
    J = JacobiOperator(tuple(a), tuple(b), FLOAT)
    return J, _polynomials(J)


def _exact_sqrt(x: Fraction):
    num, den = math.isqrt(x.numerator), math.isqrt(x.denominator)
    if num * num == x.numerator and den * den == x.denominator:
        return Fraction(num, den)
    return None


def _reconstruct_exact(mu, n):
    pts, w = mu.points, mu.weights
    prev = [Fraction(0)] * len(pts)
    cur = [Fraction(1)] * len(pts)
    norm_prev = None
    norm_cur = sum(w)
    a, b = [], []
    for k in range(n):
        bk = sum(wi * x * p * p for wi, x, p in zip(w, pts, cur)) / norm_cur
        b.append(bk)
        if k == n - 1:
            break
        beta = norm_cur / norm_prev if norm_prev is not None else Fraction(0)
        nxt = [(x - bk) * p - beta * q for x, p, q in zip(pts, cur, prev)]
        norm_nxt = sum(wi * p * p for wi, p in zip(w, nxt))
        if norm_nxt == 0:
            raise DomainError(f"measure rank exhausted at step {k}")
        ak = _exact_sqrt(norm_nxt / norm_cur)
        if ak is None:
            raise DomainError(f"a_{k}**2 = {norm_nxt / norm_cur} is not a rational square; use float mode")
        a.append(ak)
        prev, cur, norm_prev, norm_cur = cur, nxt, norm_cur, norm_nxt
    J = JacobiOperator(tuple(a), tuple(b), RATIONAL)
    return J, _polynomials(J)


def _polynomials(J):
    # P_{k+1} = ((x - b_k) P_k - a_{k-1} P_{k-1}) / a_k
    one = Fraction(1) if J.is_rational else 1.0
    zero = one - one
    polys = [[one]]
    prev = [zero]
    for k in range(J.n - 1):
        cur = polys[-1]
        shifted = [zero] + cur
        nxt = [shifted[i] - (J.b[k] * cur[i] if i < len(cur) else zero) for i in range(len(shifted))]
        if k > 0:
            for i, c in enumerate(prev):
                nxt[i] -= J.a[k - 1] * c
        nxt = [c / J.a[k] for c in nxt]
        prev = cur
        polys.append(nxt)
    return PolynomialTable(tuple(tuple(p) for p in polys))


def coefficient_error(J1: JacobiOperator, J2: JacobiOperator) -> float:
    if J1.n != J2.n:
        raise ConfigurationError(f"sizes differ: {J1.n} vs {J2.n}")
    diffs = [abs(float(x) - float(y)) for x, y in zip(J1.a + J1.b, J2.a + J2.b)]
    return max(diffs, default=0.0)


__all__ = [
    "AgreementDepth", "DecayOrder", "DiscreteMeasure", "EquivalenceReport", "JacobiOperator",
    "PolynomialTable", "actual_depth", "agreement_depth", "coefficient_error", "decay_order",
    "jacobi_m", "moments", "random_pair", "reconstruct", "verify_order_equivalence",
]
