"""Local Borg-Marchenko probe.

Two problems whose potentials agree on ``[0, a]`` have m-functions whose
difference decays like ``exp(-2 Im(sqrt z) a)`` along a ray, and the
converse holds as well.  The probe samples both m-functions, fits that
exponent and reports it as an agreement length.
"""

from __future__ import annotations

import json
import math
from dataclasses import dataclass, replace

import numpy as np

from .errors import ConfigurationError, DomainError
from .model import BoundaryCondition, ProblemSpec, validate
from .numerics import (
    DEFAULT_FLOOR,
    DEFAULT_PROBE_RAY,
    DecayFit,
    SpectralRay,
    log_linear_fit,
    principal_sqrt,
    ray_points,
)
from .weyl import DEFAULT_RTOL, MTrace, finite_weyl_solution, m_trace, spectral_floor

AGREE_AT_LEAST = "AgreeAtLeast"
FIRST_DIFFERENCE_NEAR = "FirstDifferenceNear"
INDISTINGUISHABLE = "IndistinguishableToFloor"

# relative stderr above which a fitted length is flagged unreliable
HIGH_STDERR = 0.02
# ray used for boundary-angle extraction: far enough out for the 1/m corrections to be tiny
ALPHA_RAY = SpectralRay.negative_axis(1e3, 1e6, 16)
# admissible range for the adaptive window scale
_ADAPT_SCALE = (0.2, 5.0)


@dataclass(frozen=True)
class AlphaEstimate:
    alpha: float
    limit: complex
    inconclusive: bool = False


@dataclass(frozen=True)
class AgreementReport:
    fit: DecayFit
    a_hat: float
    verdict: str
    alpha_estimates: tuple | None = None

    @property
    def high_stderr(self):
        """True when the fit is too noisy to trust ``a_hat`` at the 2% level."""
        if self.fit.saturated_at_floor:
            return False
        return not self.fit.stderr <= HIGH_STDERR * max(self.a_hat, 1e-3)

    def label(self):
        return f"{self.verdict}({self.a_hat:.6g})" if self.verdict != INDISTINGUISHABLE else self.verdict

    def to_dict(self):
        alphas = None
        if self.alpha_estimates is not None:
            alphas = [None if e is None or e.inconclusive else e.alpha for e in self.alpha_estimates]
        return {
            "a_hat": self.a_hat,
            "stderr": self.fit.stderr if math.isfinite(self.fit.stderr) else None,
            "points_used": self.fit.points_used,
            "window": list(self.fit.window),
            "verdict": self.verdict,
            "alpha_estimates": alphas,
            "power": self.fit.power,
            "saturated_at_floor": self.fit.saturated_at_floor,
        }

    def to_json(self):
        return json.dumps(self.to_dict(), indent=2, sort_keys=False, default=_json_float)


def _json_float(x):
    return float(x)


def _norm(v):
    v = np.asarray(v)
    if v.ndim == 0:
        return float(abs(v))
    return float(np.linalg.norm(v, 2))


def delta_m_trace(t1: MTrace, t2: MTrace):
    """Pairs ``(2 Im sqrt z, ||m1(z) - m2(z)||)``; spectral norm for matrices."""
    if t1.kind != t2.kind:
        raise ConfigurationError(f"trace kinds differ: {t1.kind} vs {t2.kind}")
    if len(t1.z) != len(t2.z) or np.any(t1.z != t2.z):
        raise ConfigurationError("traces are not sampled on the same ray")
    s = 2.0 * np.imag(principal_sqrt(np.asarray(t1.z)))
    return [(float(si), _norm(a - b)) for si, a, b in zip(s, t1.values, t2.values)]


def fit_agreement_length(diffs, floor=DEFAULT_FLOOR, radii=None):
    """Turn a difference trace into an :class:`AgreementReport`.

    The model ``log||dm|| = c - a s - p log s`` absorbs the algebraic
    prefactor that a jump in the potentials (or a boundary transform)
    puts in front of the exponential.
    """
    fit = log_linear_fit(diffs, floor, prefactor="fit", radii=radii)
    if fit.saturated_at_floor:
        return AgreementReport(fit, max(fit.a_hat, 0.0), INDISTINGUISHABLE)
    return AgreementReport(fit, max(fit.a_hat, 0.0), FIRST_DIFFERENCE_NEAR)


def _radii(trace):
    return np.abs(np.asarray(trace.z))


def _trace_pair(spec1, spec2, ray, rtol, jobs):
    t1 = m_trace(spec1, ray, rtol, jobs)
    t2 = m_trace(spec2, ray, rtol, jobs)
    if t1.kind != t2.kind:
        raise ConfigurationError(f"problem kinds differ: {t1.kind} vs {t2.kind}")
    return t1, t2


def _lowest_floor(spec):
    right = spec.right_bc if spec.b is not None else None
    return spectral_floor(spec.potential, right)


def _adapted_ray(ray, a_hat, floors):
    scale = min(max(a_hat, _ADAPT_SCALE[0]), _ADAPT_SCALE[1])
    new = ray.scaled(scale)
    # keep every sample strictly below both spectral floors on the negative axis
    margin = max(0.0, -min(floors)) + 1.0
    if new.r_min < margin:
        new = new.with_range(margin, max(new.r_max, 2 * margin))
    return new


def probe_agreement(spec1: ProblemSpec, spec2: ProblemSpec, ray=None, *, floor=DEFAULT_FLOOR,
                    rtol=DEFAULT_RTOL, jobs=1, adapt=None, with_alpha=True):
    """Estimate the agreement length of two problems.

    With the default ray (or ``adapt=True``) a first fit on ``[10, 150]``
    picks ``a``, the window is rescaled to ``[10, 150] / a**2`` and the fit
    is repeated, so the sampled exponentials stay between the floor and
    the pre-asymptotic regime.  Returns ``(report, t1, t2)``.
    """
    spec1, spec2 = validate(spec1), validate(spec2)
    if spec1.kind != spec2.kind:
        raise ConfigurationError(f"problem kinds differ: {spec1.kind} vs {spec2.kind}")
    if adapt is None:
        adapt = ray is None
    ray = DEFAULT_PROBE_RAY if ray is None else ray
    t1, t2 = _trace_pair(spec1, spec2, ray, rtol, jobs)
    report = fit_agreement_length(delta_m_trace(t1, t2), floor, _radii(t1))
    if adapt and report.verdict == FIRST_DIFFERENCE_NEAR and report.a_hat > 0:
        floors = (_lowest_floor(spec1), _lowest_floor(spec2))
        first = report
        for _ in range(2):
            new_ray = _adapted_ray(DEFAULT_PROBE_RAY if ray.is_negative_axis else ray, report.a_hat, floors)
            n1, n2 = _trace_pair(spec1, spec2, new_ray, rtol, jobs)
            refit = fit_agreement_length(delta_m_trace(n1, n2), floor, _radii(n1))
            if refit.verdict == INDISTINGUISHABLE:
                # the rescaled window fell under the floor; keep the first estimate as a lower bound
                report = replace(first, verdict=AGREE_AT_LEAST)
                break
            done = abs(refit.a_hat - report.a_hat) <= 0.005 * max(report.a_hat, 1e-3)
            report, t1, t2 = refit, n1, n2
            if done:
                break
    if with_alpha and t1.kind in ("half_line", "finite"):
        a1 = estimate_alpha(m_trace(spec1, ALPHA_RAY, rtol, jobs))
        a2 = estimate_alpha(m_trace(spec2, ALPHA_RAY, rtol, jobs))
        report = replace(report, alpha_estimates=(a1, a2))
    return report, t1, t2


def estimate_alpha(t: MTrace, tail=None, tol=0.05) -> AlphaEstimate:
    """Boundary angle at ``x = 0`` from the large-``|z|`` behaviour of ``m``.

    ``m`` is fitted on the outer part of the trace as ``A / t + B + C t + D t^2``
    with ``t = 1 / (i sqrt z)``.  ``A ~ 1`` means ``m ~ i sqrt z`` (Dirichlet,
    angle 0); ``A ~ 0`` leaves the finite limit ``B = cot(alpha)``.
    """
    if t.is_matrix:
        raise ConfigurationError("estimate_alpha needs a scalar trace")
    z = np.asarray(t.z)
    m = np.asarray(t.values, dtype=complex)
    order = np.argsort(np.abs(z))
    z, m = z[order], m[order]
    n = len(z)
    tail = max(5, n // 2) if tail is None else tail
    z, m = z[-tail:], m[-tail:]
    tt = 1.0 / (1j * principal_sqrt(z))
    # rescale so both regimes give O(1) unknowns
    X = np.column_stack([1.0 / tt, np.ones_like(tt), tt, tt**2])
    coef, *_ = np.linalg.lstsq(X, m, rcond=None)
    A, B = coef[0], coef[1]
    if abs(A - 1) < tol:
        return AlphaEstimate(0.0, complex(np.inf), False)
    if abs(A) < tol:
        return AlphaEstimate(float(math.atan2(1.0, B.real) % math.pi), complex(B), False)
    return AlphaEstimate(math.nan, complex(B), True)


def _bc_delta(q, a, beta1, beta2, z, rtol):
    # m(beta1) - m(beta2) from the Wronskian of the two Weyl solutions (no cancellation),
    # returned as (mantissa, log of the removed scale)
    p1, _, l1 = finite_weyl_solution(q, a, beta1, z, [0.0], rtol, log_scale=True)
    p2, _, l2 = finite_weyl_solution(q, a, beta2, z, [0.0], rtol, log_scale=True)
    return (beta1.s * beta2.c - beta1.c * beta2.s) / (p1[0] * p2[0]), -(l1[0] + l2[0])


def bc_mismatch_asymptote(q, a, beta1: BoundaryCondition, beta2: BoundaryCondition, ray, rtol=DEFAULT_RTOL):
    """Ratio trace ``r(z) = (m(z; a, beta1) - m(z; a, beta2)) / (4 exp(2 i sqrt(z) a) (cot beta2 - cot beta1))``.

    ``psi'(a) / psi(a) = -cot(beta)`` makes the leading term of the
    difference ``4 exp(2ika) (cot beta2 - cot beta1)``, so ``r -> 1``.
    Returns a list of ``(z, r(z))``.
    """
    if beta1.is_dirichlet or beta2.is_dirichlet:
        raise DomainError("the asymptote needs finite cot(beta); Dirichlet conditions are rejected")
    d_cot = beta2.cot - beta1.cot
    if d_cot == 0:
        raise DomainError("beta1 == beta2: the asymptote has a zero divisor")
    if q.support_sup > a:
        raise DomainError(f"support {q.support_sup} exceeds a = {a}")
    out = []
    for z, k in ray_points(ray):
        num, log_num = _bc_delta(q, a, beta1, beta2, z, rtol)
        # exp(2ika) = exp(-2 Im(k) a) * phase; combine the exponents before exponentiating
        ratio = num / (4 * d_cot) * np.exp(log_num + 2 * k.imag * a - 2j * k.real * a)
        out.append((z, complex(ratio)))
    return out


def full_line_agreement(T1: MTrace, T2: MTrace, floor=DEFAULT_FLOOR) -> AgreementReport:
    """Agreement half-width from two 2x2 full-line traces."""
    if T1.kind != "full_line_2x2" or T2.kind != "full_line_2x2":
        raise ConfigurationError("full_line_agreement needs full-line 2x2 traces")
    return fit_agreement_length(delta_m_trace(T1, T2), floor, _radii(T1))


__all__ = [
    "AGREE_AT_LEAST", "FIRST_DIFFERENCE_NEAR", "INDISTINGUISHABLE", "AgreementReport", "AlphaEstimate",
    "bc_mismatch_asymptote", "delta_m_trace", "estimate_alpha", "fit_agreement_length",
    "full_line_agreement", "probe_agreement",
]
