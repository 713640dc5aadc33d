from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st
from scipy.integrate import quad

from siacmra.errors import DomainExitError
from siacmra.field import project
from siacmra.mesh import graded_quad_mesh, interval_mesh, uniform_interval_mesh, uniform_quad_mesh
from siacmra.siac import (
    Adaptive,
    Constant,
    MaxEdge,
    MinEdge,
    bspline,
    build_kernel,
    filter_point_1d,
    filter_point_line,
    filter_points,
    filter_points_1d,
    kernel_coefficients,
    kernel_eval,
    kernel_moments,
    scaling_value,
)


class TestBSpline:
    def test_hat(self):
        assert np.isclose(bspline(2, 0.0), 1.0)
        assert np.allclose(bspline(2, np.array([-1.0, 1.0])), 0.0)

    @pytest.mark.parametrize("ell", [1, 2, 3, 4])
    def test_partition_of_unity(self, ell):
        shifts = np.arange(-ell - 1, ell + 2)
        assert np.isclose(np.sum(bspline(ell, 0.3 - shifts)), 1.0, atol=1e-14)

    @pytest.mark.parametrize("ell", [1, 2, 3, 4])
    def test_unit_integral(self, ell):
        val, _ = quad(lambda t: float(bspline(ell, t)), -ell / 2, ell / 2, points=list(np.arange(-ell / 2, ell / 2 + 1)))
        assert np.isclose(val, 1.0, atol=1e-12)

    def test_bad_order(self):
        with pytest.raises(ValueError):
            bspline(0, 0.0)


class TestKernel:
    def test_p1_coefficients_against_small_system(self):
        g = np.array([-1.0, 0.0, 1.0])
        a = np.array([np.ones(3), g, g**2 + 1.0 / 12.0])
        expect = np.linalg.solve(a, [1.0, 0.0, 0.0])
        assert np.allclose(expect, [-1 / 24, 13 / 12, -1 / 24])
        assert np.allclose(kernel_coefficients(2, 1), expect, atol=1e-12)

    def test_p0_is_box(self):
        assert np.allclose(build_kernel(0).coeffs, [1.0])

    @pytest.mark.parametrize("p", [0, 1, 2, 3])
    @pytest.mark.parametrize("ell", [1, 2])
    def test_moments(self, p, ell):
        k = build_kernel(p, ell)
        mom = kernel_moments(k, k.r)
        target = np.zeros(k.r + 1)
        target[0] = 1.0
        assert np.allclose(mom, target, atol=1e-11)

    @pytest.mark.parametrize("p", [1, 2])
    def test_moments_independent_quadrature(self, p):
        k = build_kernel(p)
        h = 0.37
        knots = list(k.knots * h)
        for m in range(k.r + 1):
            val, _ = quad(lambda t: float(kernel_eval(k, t, h)) * t**m, knots[0], knots[-1], points=knots, epsabs=1e-14)
            assert np.isclose(val, 1.0 if m == 0 else 0.0, atol=1e-11)

    def test_symmetric(self):
        k = build_kernel(2)
        t = np.linspace(-3, 3, 41) + 0.013  # avoid knots of the half-open box spline
        assert np.allclose(k(t), k(-t), atol=1e-14)

    def test_scaling_must_be_positive(self):
        with pytest.raises(ValueError):
            kernel_eval(build_kernel(1), 0.0, 0.0)


def brute_filter_1d(field, kernel, x, h):
    """Convolution by adaptive quadrature split at element and kernel breakpoints."""
    mesh = field.mesh
    lo, hi = x - kernel.half_width * h, x + kernel.half_width * h
    pts = np.concatenate([mesh.breakpoints, x + kernel.knots * h])
    pts = np.sort(pts[(pts > lo) & (pts < hi)])
    edges = np.concatenate([[lo], pts, [hi]])
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b - a < 1e-15:
            continue
        mid = 0.5 * (a + b)
        # integrate each piece with the element owning its midpoint
        e = int(np.atleast_1d(mesh.locate(np.array([mid])))[0])
        def f(y, e=e):
            xi = mesh.to_reference(np.array([e]), np.array([[y]]))
            return float(kernel_eval(kernel, x - y, h)) * float(field.eval_ref(np.array([e]), xi)[0])

        total += quad(f, a, b, epsabs=1e-14, epsrel=1e-13)[0]
    return total


class TestFilter1D:
    def test_quadratic_reproduction(self):
        m = uniform_interval_mesh(20, (-1.0, 1.0))
        u = project(lambda x: x[..., 0] ** 2, m, 2)
        k = build_kernel(1)
        x = 0.037
        # K reproduces quadratics: K * x^2 = x^2 + second moment term, which vanishes
        assert np.isclose(filter_point_1d(u, k, x, 0.1), x**2, atol=1e-12)

    @pytest.mark.parametrize("p", [0, 1, 2])
    def test_matches_brute_force(self, p):
        m = interval_mesh(np.array([-1.0, -0.7, -0.2, 0.1, 0.15, 0.5, 1.0]), periodic=False)
        rng = np.random.default_rng(p)
        u = project(lambda x: np.sin(2 * x[..., 0]), m, p)
        u = u.with_coeffs(u.coeffs + 0.1 * rng.normal(size=u.coeffs.shape))
        k = build_kernel(p)
        h = 0.08
        for x in (-0.31, 0.12, 0.33):
            assert np.isclose(filter_point_1d(u, k, x, h), brute_filter_1d(u, k, x, h), atol=1e-10)

    def test_constant_preserved_with_wrap(self):
        m = uniform_interval_mesh(10)
        u = project(lambda x: np.full(x.shape[:-1], 2.5), m, 1)
        vals = filter_points_1d(u, build_kernel(1), np.array([-0.99, 0.0, 0.99]), 0.2)
        assert np.allclose(vals, 2.5, atol=1e-13)

    def test_exit_nonperiodic(self):
        m = uniform_interval_mesh(10, periodic=False)
        u = project(lambda x: x[..., 0], m, 1)
        with pytest.raises(DomainExitError):
            filter_point_1d(u, build_kernel(1), -0.95, 0.2)

    def test_support_too_wide(self):
        m = uniform_interval_mesh(4)
        u = project(lambda x: x[..., 0], m, 1)
        with pytest.raises(ValueError):
            filter_point_1d(u, build_kernel(3), 0.0, 1.0)

    @settings(max_examples=20, deadline=None)
    @given(st.floats(-0.5, 0.5), st.floats(0.05, 0.12), st.integers(0, 3))
    def test_polynomial_reproduction_property(self, x, h, p):
        # degree <= r data is reproduced exactly wherever the footprint stays inside
        m = uniform_interval_mesh(16, (-1.0, 1.0), periodic=False)
        coef = np.arange(1, p + 2) / (p + 1.0)
        f = lambda y: np.polyval(coef, y[..., 0])
        u = project(f, m, p)
        assert np.isclose(filter_point_1d(u, build_kernel(p), x, h), np.polyval(coef, x), atol=1e-11)


class TestLineFilter:
    def test_linear_reproduction(self):
        m = uniform_quad_mesh(10)
        u = project(lambda x: x[..., 0] + x[..., 1], m, 1)
        k = build_kernel(1)
        pt = np.array([0.43, 0.52])
        assert np.isclose(filter_point_line(u, k, pt, 0.1, np.pi / 4), pt.sum(), atol=1e-11)

    def test_theta_zero_matches_1d(self):
        m2 = uniform_quad_mesh(8)
        m1 = uniform_interval_mesh(8, (0.0, 1.0))
        g = lambda x: np.sin(2 * np.pi * x)
        u2 = project(lambda x: g(x[..., 0]), m2, 2)
        u1 = project(lambda x: g(x[..., 0]), m1, 2)
        k = build_kernel(2)
        for x in (0.1, 0.47, 0.93):
            a = filter_point_line(u2, k, np.array([x, 0.3]), 0.125, 0.0)
            b = filter_point_1d(u1, k, x, 0.125)
            assert np.isclose(a, b, atol=1e-12)

    def test_constant_preserved(self):
        m = uniform_quad_mesh(6)
        u = project(lambda x: np.full(x.shape[:-1], -1.5), m, 2)
        pts = np.random.default_rng(0).random((15, 2))
        vals = filter_points(u, build_kernel(2), pts, MaxEdge(np.sqrt(2)), np.pi / 4)
        assert np.allclose(vals, -1.5, atol=1e-12)


class TestScaling:
    def test_graded_extremes(self):
        m = graded_quad_mesh(16, 100.0)
        pt = np.array([[0.5, 0.5]])
        ratio = scaling_value(MaxEdge(), m, pt)[0] / scaling_value(MinEdge(), m, pt)[0]
        assert 95 <= ratio <= 105

    def test_uniform_strategies_agree(self):
        m = uniform_quad_mesh(4)
        pts = np.random.default_rng(0).random((10, 2))
        vals = [s.values(m, pts) for s in (Constant(0.25), MaxEdge(), MinEdge(), Adaptive())]
        for v in vals[1:]:
            assert np.allclose(v, vals[0], atol=1e-12)

    def test_constant_positive(self):
        with pytest.raises(ValueError):
            Constant(0.0).values(uniform_quad_mesh(2), np.zeros((1, 2)))

    def test_adaptive_between_extremes(self):
        m = graded_quad_mesh(8, 10.0)
        pts = np.random.default_rng(1).random((30, 2))
        h = Adaptive().values(m, pts)
        assert np.all(h >= MinEdge().values(m, pts) - 1e-12)
        assert np.all(h <= MaxEdge().values(m, pts) + 1e-12)
