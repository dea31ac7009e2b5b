import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from conftest import random_piecewise_constant
from mprobe import kernels as kn
from mprobe import weyl
from mprobe.errors import ConfigurationError
from mprobe.model import PiecewisePotential
from mprobe.numerics import log_linear_fit, principal_sqrt

H = 1 / 400


def test_zero_potential_gives_zero_kernel():
    K = kn.transformation_kernel(PiecewisePotential.zero(), 1 / 40, a=1.0)
    assert not np.any(K.values)
    assert kn.jost_via_kernel(K, -3.0, 0.25) == pytest.approx(np.exp(1j * principal_sqrt(-3.0) * 0.25), abs=1e-15)


def test_grid_preconditions(bump):
    with pytest.raises(ConfigurationError):
        kn.transformation_kernel(bump, 0.3)
    with pytest.raises(ConfigurationError):
        kn.transformation_kernel(bump, 0.25)
    with pytest.raises(ConfigurationError):
        kn.transformation_kernel(bump, 0.1, a=0.5)


def test_first_iterate_is_tail_integral(steps):
    K0 = kn.transformation_kernel(steps, 1 / 80, sweeps=0)
    i, j = np.meshgrid(np.arange(K0.n + 1), np.arange(2 * K0.n + 1), indexing="ij")
    mask = (j >= i) & (i + j <= 2 * K0.n)
    expected = 0.5 * steps.tail_integral(0.5 * (i + j) * K0.h)
    np.testing.assert_allclose(K0.values[mask], expected[mask], atol=1e-15)


def test_first_iterate_constant_closed_form():
    c, alpha = 1.7, 1.5
    K0 = kn.transformation_kernel(PiecewisePotential.indicator(0, alpha, c), alpha / 60, sweeps=0)
    x, y = K0.x[:, None], K0.y[None, :]
    tri = (x <= y + 1e-12) & (x + y <= 2 * alpha + 1e-12)
    np.testing.assert_allclose(K0.values[tri], np.broadcast_to(c / 2 * (alpha - (x + y) / 2), tri.shape)[tri], atol=1e-14)


@pytest.mark.parametrize("name", ["bump", "steps"])
def test_jost_via_kernel_matches_ode(name, request):
    q = request.getfixturevalue(name)
    K = kn.transformation_kernel(q, q.support_sup / 400)
    for z in (complex(-10), complex(4, 3)):
        for x in (0.0, 0.25, 0.5, 0.9):
            ode = weyl.jost_solution(q, z, grid=[x]).f[0]
            assert abs(kn.jost_via_kernel(K, z, x) - ode) < 1e-4 * abs(ode)


def test_jost_normalized_tends_to_one(bump):
    K = kn.transformation_kernel(bump, H)
    x = 0.25
    gaps = []
    for r in (10, 100, 1000):
        k = principal_sqrt(-r)
        gaps.append(abs(kn.jost_via_kernel(K, -r, x) * np.exp(-1j * k * x) - 1))
    assert gaps[0] > gaps[1] > gaps[2]


def test_kernel_bound_and_triangularity(bump, steps):
    for q in (bump, steps):
        K = kn.transformation_kernel(q, q.support_sup / 200)
        x, y = K.x[:, None], K.y[None, :]
        assert np.all(K.values[x > y + 1e-12] == 0)
        bound = kn.kernel_bound(q, x, y)
        tri = x <= y + 1e-12
        assert np.all(np.abs(K.values[tri]) <= bound[tri] * (1 + 1e-9) + 1e-15)


@given(st.integers(0, 2**32 - 1))
def test_kernel_bound_random(seed):
    q = random_piecewise_constant(np.random.default_rng(seed), amp=3.0)
    K = kn.transformation_kernel(q, 1 / 40)
    x, y = K.x[:, None], K.y[None, :]
    tri = x <= y + 1e-12
    assert np.all(K.values[~tri] == 0)
    assert np.all(np.abs(K.values[tri]) <= kn.kernel_bound(q, x, y)[tri] * (1 + 1e-9) + 1e-15)


def test_bilinear_lookup_on_nodes(steps):
    K = kn.transformation_kernel(steps, 1 / 40)
    assert K.at(0.25, 0.5) == pytest.approx(K.values[10, 20], abs=1e-15)
    assert K.at(0.6, 0.3) == 0.0


def test_product_kernel_trivial_cases(bump):
    K1 = kn.transformation_kernel(bump, 1 / 80)
    Z = kn.transformation_kernel(PiecewisePotential.zero(), 1 / 80, a=1.0)
    assert not np.any(kn.product_kernel(Z, Z).values)
    L = kn.product_kernel(K1, Z)
    n = K1.n
    for i in range(0, n + 1, 7):
        for j in range(i, n + 1, 5):
            assert L.values[i, j] == pytest.approx(2 * K1.values[i, 2 * j - i], abs=1e-15)
    x, y = L.x[:, None], L.y[None, :]
    assert np.all(L.values[x > y + 1e-12] == 0)


def test_product_kernel_grid_mismatch(bump):
    with pytest.raises(ConfigurationError):
        kn.product_kernel(kn.transformation_kernel(bump, 1 / 40), kn.transformation_kernel(bump, 1 / 80))


def test_product_identity_zero():
    zero = PiecewisePotential((0.0, 1.0), ((0.0,),))
    assert kn.product_identity_residual(zero, zero, -10, 1 / 40) < 1e-15


def test_product_identity_order_two(bump, bump2):
    r1 = kn.product_identity_residual(bump, bump2, -10, H)
    r2 = kn.product_identity_residual(bump, bump2, -10, H / 2)
    assert r1 < 1e-4
    assert 3.5 <= r1 / r2 <= 4.5


def test_wronskian_identity(bump, steps):
    lhs, rhs, res = kn.wronskian_identity_check(bump, bump, -50, 1.0)
    assert lhs == 0 and abs(rhs) < 1e-15
    lhs, rhs, res = kn.wronskian_identity_check(bump, PiecewisePotential.zero(), -50, 1.0)
    assert res < 1e-7 and abs(lhs) > 1e-3
    _, _, res = kn.wronskian_identity_check(bump, steps, complex(3, 4), 1.0)
    assert res < 1e-7


def test_wronskian_rhs_decay_rate():
    # agree on [0, 0.8], differ on [0.8, 1.2]
    q1 = PiecewisePotential.piecewise_constant((0.0, 0.8, 1.2), (0.4, 1.0))
    q2 = PiecewisePotential.piecewise_constant((0.0, 0.8, 1.2), (0.4, -0.5))
    pts = []
    for r in np.geomspace(10 / 0.64, 150 / 0.64, 16):
        _, rhs, _ = kn.wronskian_identity_check(q1, q2, -r, 1.2)
        pts.append((2 * math.sqrt(r), abs(rhs)))
    fit = log_linear_fit(pts, prefactor="fit")
    assert abs(fit.a_hat - 0.8) < 0.04


def test_volterra_trivial():
    n, h = 41, 0.025
    g = np.sin(np.arange(n) * h)
    np.testing.assert_array_equal(kn.volterra_solve(np.zeros((n, n)), g, h), g)
    assert not np.any(kn.volterra_solve(np.ones((n, n)), np.zeros(n), h))


def test_volterra_constant_kernel():
    c = 1.3
    for n in (101, 201):
        h = 1.0 / (n - 1)
        u = kn.volterra_solve(np.full((n, n), c), np.ones(n), h)
        y = np.arange(n) * h
        err = np.max(np.abs(u - np.exp(-c * y)))
        assert err < 0.2 * h**2


def test_finite_laplace_examples():
    y = np.linspace(0, 2.0, 81)
    assert kn.finite_laplace(y, np.ones_like(y), 0.0) == pytest.approx(2.0, rel=1e-15)
    for x in (0.5, 3.0, 40.0):
        assert kn.finite_laplace(y, np.ones_like(y), x) == pytest.approx((1 - math.exp(-2 * x)) / x, rel=1e-12)
    assert kn.finite_laplace(y, np.zeros_like(y), 2.0) == 0.0
    # linear g is reproduced exactly too
    assert kn.finite_laplace(y, y, 1.0) == pytest.approx(1 - 3 * math.exp(-2), rel=1e-12)


def test_laplace_support_estimate():
    c, a = 0.6, 2.0
    y = np.linspace(0, a, 801)
    g = (y >= c).astype(float)
    fit = kn.laplace_support_estimate(y, g, np.linspace(5, 40, 24))
    assert abs(fit.a_hat - c) < 0.02


def test_interchange_of_integration(bump, bump2):
    _, _, res = kn.laplace_form_check(bump, bump2, -10, H)
    assert res < 1e-6


def test_volterra_pipeline_closure(bump, bump2):
    same = kn.volterra_pipeline(bump, bump, H)
    assert same["density_norm"] < 1e-8 and same["recovered_norm"] < 1e-8
    diff = kn.volterra_pipeline(bump, bump2, H)
    sup = np.max(np.abs(bump.evaluate(np.linspace(0, 1, 401)) - bump2.evaluate(np.linspace(0, 1, 401))))
    assert diff["recovered_norm"] == pytest.approx(sup, rel=1e-6)
    assert diff["recovery_error"] < 1e-10


def test_kernel_csv(steps):
    K = kn.transformation_kernel(steps, 1 / 10)
    lines = kn.kernel_to_csv(K).strip().splitlines()
    assert lines[0] == "x,y,K"
    assert len(lines) - 1 == (K.n + 1) * (K.n + 2) // 2
    ys = [float(r.split(",")[1]) for r in lines[1:]]
    assert ys == sorted(ys)
    x, y, v = (float(t) for t in lines[5].split(","))
    assert v == K.values[round(x / K.h), round(y / K.h)]
