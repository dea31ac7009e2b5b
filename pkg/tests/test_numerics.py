import cmath
import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from mprobe.errors import ConfigurationError
from mprobe.numerics import (
    DEFAULT_FLOOR,
    DEFAULT_PROBE_RAY,
    SpectralRay,
    detection_bound,
    log_linear_fit,
    principal_sqrt,
    ray_points,
)

finite = st.floats(-1e6, 1e6, allow_nan=False, allow_infinity=False)


@pytest.mark.parametrize("z, w", [(-1, 1j), (4, 2), (2j, 1 + 1j), (0, 0)])
def test_principal_sqrt_examples(z, w):
    assert abs(principal_sqrt(z) - w) < 1e-15


def test_negative_real_axis_is_exact():
    for r in [1e-3, 2.0, 10.0, 1e4]:
        w = principal_sqrt(complex(-r, 0.0))
        assert w.real == 0.0 and w.imag == math.sqrt(r)


def test_principal_sqrt_vectorized():
    z = np.array([-4.0, 9.0, 2j])
    np.testing.assert_allclose(principal_sqrt(z), [2j, 3, 1 + 1j], atol=1e-15)


@given(finite, finite)
def test_principal_sqrt_branch(x, y):
    z = complex(x, y)
    w = principal_sqrt(z)
    assert w.imag >= 0
    assert abs(w * w - z) <= 1e-14 * max(abs(z), 1e-300) + 1e-300


@given(finite, finite.filter(lambda v: abs(v) > 1e-6))
def test_principal_sqrt_conjugation(x, y):
    z = complex(x, y)
    assert abs(principal_sqrt(z.conjugate()) - (-principal_sqrt(z).conjugate())) <= 1e-12 * math.sqrt(abs(z))


def test_ray_validation():
    with pytest.raises(ConfigurationError):
        SpectralRay.ray(math.pi / 2, 1.0, 1.0, 5)
    with pytest.raises(ConfigurationError):
        SpectralRay.negative_axis(1.0, 10.0, 1)
    with pytest.raises(ConfigurationError):
        SpectralRay.ray(math.pi, 1.0, 10.0, 4)


def test_negative_axis_points():
    pts = ray_points(SpectralRay.negative_axis(1, 100, 3))
    np.testing.assert_allclose([z for z, _ in pts], [-1, -10, -100], rtol=1e-14)
    for z, w in pts:
        assert w.imag >= 0 and abs(w * w - z) < 1e-12


def test_ray_point_polar():
    (z, w), _ = ray_points(SpectralRay.ray(math.pi / 4, 1.0, 2.0, 2))
    assert abs(z - cmath.exp(3j * math.pi / 4)) < 1e-15
    assert abs(w - cmath.exp(3j * math.pi / 8)) < 1e-15


def test_ray_points_ordered_and_deterministic():
    ray = SpectralRay.ray(0.3, 2.0, 5e3, 17)
    a, b = ray_points(ray), ray_points(ray)
    assert a == b
    r = [abs(z) for z, _ in a]
    assert r == sorted(r)
    assert all(ray.contains(z) for z, _ in a)


def test_ray_parse_roundtrip():
    for text in ["neg,rmin=10,rmax=150,n=32", "eps=0.78539816339744828,rmin=1,rmax=10000,n=100"]:
        ray = SpectralRay.parse(text)
        assert SpectralRay.parse(ray.to_string()) == ray
    assert SpectralRay.parse("neg,rmin=10,rmax=150,n=32") == DEFAULT_PROBE_RAY
    for bad in ["rmin=1,rmax=2,n=3", "neg,eps=1,rmin=1,rmax=2,n=3", "neg,rmin=1,rmax=2", "neg,rmin=1,rmax=2,n=3,k=4"]:
        with pytest.raises(ConfigurationError):
            SpectralRay.parse(bad)


def test_scaled_window():
    ray = DEFAULT_PROBE_RAY.scaled(0.5)
    assert (ray.r_min, ray.r_max) == (40.0, 600.0)


def test_fit_own_model_exactly():
    s = np.linspace(4, 20, 12)
    fit = log_linear_fit(list(zip(s, np.exp(-0.7 * s))))
    assert abs(fit.a_hat - 0.7) < 1e-12
    assert fit.stderr < 1e-10
    assert fit.points_used == 12 and not fit.saturated_at_floor


def test_fit_noisy_oracle():
    rng = np.random.default_rng(7)
    s = np.linspace(3, 12, 32)
    y = 3 * np.exp(-2.0 * s) * (1 + 0.01 * rng.standard_normal(len(s)))
    fit = log_linear_fit(list(zip(s, y)))
    assert abs(fit.a_hat - 2.0) < 0.05


def test_fit_saturated_reports_detection_bound():
    s = np.linspace(4, 20, 8)
    fit = log_linear_fit(list(zip(s, np.full(8, 1e-16))))
    assert fit.saturated_at_floor and fit.points_used == 0
    assert fit.a_hat == pytest.approx(detection_bound(20.0, DEFAULT_FLOOR))
    assert fit.a_hat == pytest.approx(-math.log(1e-13) / 20.0)


def test_fit_excludes_floor_points():
    s = np.linspace(2, 30, 15)
    y = np.exp(-1.5 * s)
    fit = log_linear_fit(list(zip(s, y)))
    assert fit.points_used == int(np.sum(y > DEFAULT_FLOOR))
    assert abs(fit.a_hat - 1.5) < 1e-10


def test_fit_prefactor_model():
    s = np.linspace(6, 25, 32)
    y = 0.3 * s**-1.0 * np.exp(-1.2 * s)
    plain = log_linear_fit(list(zip(s, y)))
    fitted = log_linear_fit(list(zip(s, y)), prefactor="fit")
    fixed = log_linear_fit(list(zip(s, y)), prefactor=1.0)
    assert abs(plain.a_hat - 1.2) > 0.03
    assert abs(fitted.a_hat - 1.2) < 1e-10 and abs(fitted.power - 1.0) < 1e-8
    assert abs(fixed.a_hat - 1.2) < 1e-10


@given(st.floats(1e-6, 1e6), st.floats(0.1, 3.0))
def test_fit_scale_invariance(c, a):
    s = np.linspace(2, 8, 10)
    base = log_linear_fit(list(zip(s, np.exp(-a * s))), floor=0.0)
    scaled = log_linear_fit(list(zip(s, c * np.exp(-a * s))), floor=0.0)
    assert abs(base.a_hat - scaled.a_hat) < 1e-9
    assert abs((scaled.intercept - base.intercept) - math.log(c)) < 1e-8
