"""Shared numerics: principal square root, spectral rays, decay fits."""

from __future__ import annotations

import cmath
import math
from dataclasses import dataclass

import numpy as np

from .errors import ConfigurationError

DEFAULT_FLOOR = 1e-13


def principal_sqrt(z):
    """Square root on the branch ``Im(w) >= 0``.

    Negative reals map to ``i*sqrt(|z|)`` exactly, regardless of the sign
    of a zero imaginary part.  Arrays are handled elementwise.
    """
    if np.ndim(z):
        z = np.asarray(z, dtype=complex)
        w = np.sqrt(z)
        w = np.where(w.imag < 0, -w, w)
        neg = (z.imag == 0) & (z.real < 0)
        w[neg] = 1j * np.sqrt(-z.real[neg])
        return w
    z = complex(z)
    if z.imag == 0.0:
        if z.real < 0:
            return complex(0.0, math.sqrt(-z.real))
        return complex(math.sqrt(z.real), 0.0)
    w = cmath.sqrt(z)
    return -w if w.imag < 0 else w


@dataclass(frozen=True)
class SpectralRay:
    """Log-spaced spectral points along ``arg z = pi - epsilon`` or ``z < 0``.

    ``epsilon=None`` selects the negative real axis.
    """

    r_min: float
    r_max: float
    count: int
    epsilon: float | None = None

    def __post_init__(self):
        problems = []
        if not (self.r_min > 0 and self.r_max > self.r_min):
            problems.append(f"need 0 < r_min < r_max, got [{self.r_min}, {self.r_max}]")
        if int(self.count) != self.count or self.count < 2:
            problems.append(f"count must be an integer >= 2, got {self.count}")
        if self.epsilon is not None and not 0 < self.epsilon < math.pi:
            problems.append(f"epsilon must lie in (0, pi), got {self.epsilon}")
        if problems:
            raise ConfigurationError("; ".join(problems))

    @classmethod
    def negative_axis(cls, r_min, r_max, count):
        return cls(float(r_min), float(r_max), int(count), None)

    @classmethod
    def ray(cls, epsilon, r_min, r_max, count):
        return cls(float(r_min), float(r_max), int(count), float(epsilon))

    @classmethod
    def parse(cls, text):
        """Parse ``neg,rmin=..,rmax=..,n=..`` or ``eps=<rad>,rmin=..,rmax=..,n=..``."""
        fields = {}
        neg = False
        for part in text.split(","):
            part = part.strip()
            if not part:
                continue
            if part == "neg":
                neg = True
                continue
            key, sep, value = part.partition("=")
            if not sep:
                raise ConfigurationError(f"bad ray field {part!r}")
            fields[key.strip()] = value.strip()
        try:
            r_min = float(fields.pop("rmin"))
            r_max = float(fields.pop("rmax"))
            count = int(fields.pop("n"))
            eps = float(fields.pop("eps")) if "eps" in fields else None
        except KeyError as exc:
            raise ConfigurationError(f"ray spec missing {exc.args[0]!r}") from None
        except ValueError as exc:
            raise ConfigurationError(f"bad ray value: {exc}") from None
        if fields:
            raise ConfigurationError(f"unknown ray fields {sorted(fields)}")
        if neg == (eps is not None):
            raise ConfigurationError("ray spec needs exactly one of 'neg' or 'eps='")
        return cls(r_min, r_max, count, eps)

    @property
    def is_negative_axis(self):
        return self.epsilon is None

    def scaled(self, a):
        """Window rescaled by ``1/a**2`` so that ``2 Im(sqrt z) * a`` keeps its range."""
        return SpectralRay(self.r_min / a**2, self.r_max / a**2, self.count, self.epsilon)

    def with_range(self, r_min, r_max):
        return SpectralRay(r_min, r_max, self.count, self.epsilon)

    def to_string(self):
        head = "neg" if self.epsilon is None else f"eps={self.epsilon!r}"
        return f"{head},rmin={self.r_min!r},rmax={self.r_max!r},n={self.count}"

    def contains(self, z, rtol=1e-12):
        z = complex(z)
        r = abs(z)
        if not self.r_min * (1 - rtol) <= r <= self.r_max * (1 + rtol):
            return False
        if self.epsilon is None:
            return z.real < 0 and abs(z.imag) <= rtol * r
        return abs(z - r * cmath.exp(1j * (math.pi - self.epsilon))) <= rtol * r * 10


DEFAULT_PROBE_RAY = SpectralRay.negative_axis(10.0, 150.0, 32)


def ray_radii(ray):
    return np.geomspace(ray.r_min, ray.r_max, ray.count)


def ray_points(ray):
    """List of ``(z, sqrt_z)`` pairs in ascending ``|z|``."""
    out = []
    for r in ray_radii(ray):
        r = float(r)
        if ray.epsilon is None:
            z = complex(-r, 0.0)
            w = complex(0.0, math.sqrt(r))
        else:
            theta = math.pi - ray.epsilon
            z = r * cmath.exp(1j * theta)
            w = math.sqrt(r) * cmath.exp(0.5j * theta)
        out.append((z, w))
    return out


@dataclass(frozen=True)
class DecayFit:
    """Result of fitting ``log y = intercept - a_hat * s [- power * log s]``.

    ``window`` is the ``(lo, hi)`` range of ``|z|`` over the points used (or of
    ``s`` when no radii were supplied).  When ``saturated_at_floor`` is set,
    fewer than two points cleared the floor and ``a_hat`` holds the detection
    bound ``-log(floor) / s_max`` instead of an estimate.
    """

    a_hat: float
    intercept: float
    stderr: float
    points_used: int
    window: tuple
    saturated_at_floor: bool
    power: float = 0.0


def detection_bound(s_max, floor=DEFAULT_FLOOR):
    return -math.log(floor) / s_max


def log_linear_fit(points, floor=DEFAULT_FLOOR, *, prefactor=None, radii=None):
    """Least-squares decay rate of ``y ~ exp(-a s)``.

    ``points`` is a sequence of ``(s, y)``.  With ``prefactor="fit"`` an
    algebraic factor ``s**-power`` is fitted alongside (needs three usable
    points); a number fixes ``power``.
    """
    pts = np.asarray(points, dtype=float).reshape(-1, 2)
    s, y = pts[:, 0], pts[:, 1]
    if radii is None:
        radii = s
    radii = np.asarray(radii, dtype=float)
    keep = y > floor
    n = int(keep.sum())
    s_max = float(s.max()) if len(s) else math.nan
    fit_power = prefactor == "fit"
    if n < 2:
        bound = detection_bound(s_max, floor) if len(s) else math.nan
        lo, hi = (float(radii.min()), float(radii.max())) if len(s) else (math.nan, math.nan)
        return DecayFit(bound, math.nan, math.inf, n, (lo, hi), True)
    if fit_power and n < 3:
        fit_power = False
        prefactor = None
    sk, ly = s[keep], np.log(y[keep])
    fixed = 0.0 if prefactor in (None, "fit") else float(prefactor)
    if fixed:
        ly = ly + fixed * np.log(sk)
    cols = [np.ones_like(sk), -sk]
    if fit_power:
        cols.append(-np.log(sk))
    X = np.column_stack(cols)
    coef, _, rank, _ = np.linalg.lstsq(X, ly, rcond=None)
    if rank < X.shape[1]:
        raise ConfigurationError("abscissas are degenerate; cannot fit a decay rate")
    dof = n - X.shape[1]
    resid = ly - X @ coef
    if dof > 0:
        sigma2 = float(resid @ resid) / dof
        cov = sigma2 * np.linalg.inv(X.T @ X)
        stderr = math.sqrt(max(cov[1, 1], 0.0))
    else:
        stderr = math.inf
    rk = radii[keep]
    return DecayFit(
        a_hat=float(coef[1]),
        intercept=float(coef[0]),
        stderr=stderr,
        points_used=n,
        window=(float(rk.min()), float(rk.max())),
        saturated_at_floor=False,
        power=float(coef[2]) if fit_power else fixed,
    )
