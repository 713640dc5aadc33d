from __future__ import annotations

import numpy as np
import pytest
from hypothesis import given, settings, strategies as st

from siacmra.field import (
    DGField,
    element_quadrature,
    elementwise_l2_error,
    l2_error,
    linf_error,
    project,
    read_field,
    sine,
    steady_residual,
    transfer_through,
    transfer_to_children,
    write_field,
)
from siacmra.mesh import (
    perturbed_delaunay_mesh,
    perturbed_quad_mesh,
    refine_all,
    refine_marked,
    uniform_interval_mesh,
    uniform_quad_mesh,
)

MESHES_2D = {
    "quad": lambda: uniform_quad_mesh(4),
    "perturbed": lambda: perturbed_quad_mesh(4, p_scale=0.3, seed=1),
    "delaunay": lambda: perturbed_delaunay_mesh(4, p_scale=0.3, seed=1),
}


def poly2(x):
    return 1.0 + 2.0 * x[..., 0] - x[..., 1] + 0.5 * x[..., 0] * x[..., 1]


class TestProjection:
    def test_linear_on_reference_interval(self):
        m = uniform_interval_mesh(1, (-1.0, 1.0), periodic=False)
        u = project(lambda x: x[..., 0], m, 1)
        assert np.isclose(u.coeffs[0, 1], np.sqrt(2.0 / 3.0), atol=1e-14)
        assert abs(u.coeffs[0, 0]) < 1e-14

    @pytest.mark.parametrize("name", list(MESHES_2D))
    def test_polynomial_reproduction(self, name):
        mesh = MESHES_2D[name]()
        # bilinear maps of perturbed quads keep only affine functions in the physical span
        f = poly2 if name != "perturbed" else (lambda x: 1.0 + 2.0 * x[..., 0] - x[..., 1])
        u = project(f, mesh, 2)
        pts = np.random.default_rng(0).random((40, 2))
        assert np.allclose(u(pts), f(pts), atol=1e-12)

    @pytest.mark.parametrize("name", list(MESHES_2D))
    def test_galerkin_orthogonality(self, name):
        mesh = MESHES_2D[name]()
        f = lambda x: np.sin(3 * x[..., 0]) * np.cos(2 * x[..., 1])
        p = 1
        u = project(f, mesh, p, n_quad=8)
        q = element_quadrature(mesh, 8)
        idx = np.repeat(np.arange(mesh.n_elements)[:, None], len(q.xi), axis=1)
        resid = f(q.x) - u.eval_ref(idx, np.broadcast_to(q.xi, idx.shape + (2,)))
        phi = u.basis.eval(q.xi)
        assert np.allclose(np.einsum("eq,qk->ek", q.w * resid, phi), 0.0, atol=1e-12)

    def test_first_order_convergence(self):
        f = sine(1.0)
        errs = [l2_error(project(f, uniform_interval_mesh(n, (0.0, 1.0)), 0), f) for n in (16, 32)]
        assert 1.8 <= errs[0] / errs[1] <= 2.2

    def test_nonfinite_values_rejected(self):
        m = uniform_interval_mesh(4)
        with pytest.raises(FloatingPointError):
            project(lambda x: np.full(x.shape[:-1], np.nan), m, 1)

    def test_shape_checked(self):
        with pytest.raises(ValueError):
            DGField(uniform_interval_mesh(4), 1, np.zeros((4, 3)))


class TestTransfer:
    @settings(max_examples=10, deadline=None)
    @given(st.integers(0, 3), st.integers(0, 1000))
    def test_transfer_pointwise_1d(self, p, seed):
        rng = np.random.default_rng(seed)
        m = uniform_interval_mesh(5)
        u = DGField(m, p, rng.normal(size=(5, p + 1)))
        fine = refine_marked(m, rng.random(5) < 0.5)
        v = transfer_through(u, fine)
        pts = rng.uniform(-0.99, 0.99, size=(20, 1))
        assert np.allclose(u(pts), v(pts), atol=1e-13)

    @pytest.mark.parametrize("name", ["quad", "delaunay"])
    def test_transfer_pointwise_2d(self, name):
        rng = np.random.default_rng(3)
        m = MESHES_2D[name]()
        u = DGField(m, 2, rng.normal(size=(m.n_elements, u_modes(m, 2))))
        fine = refine_all(m)
        v = transfer_to_children(u, fine)
        pts = rng.random((20, 2))
        assert np.allclose(u(pts), v(pts), atol=1e-13)
        assert np.isclose(u.l2_norm(), v.l2_norm(), rtol=1e-13)

    def test_transfer_chain(self):
        m = uniform_quad_mesh(3)
        u = project(poly2, m, 1)
        r1 = refine_marked(m, [4])
        r2 = refine_marked(r1, [0])
        v = transfer_through(u, r2)
        pts = np.random.default_rng(2).random((10, 2))
        assert np.allclose(u(pts), v(pts), atol=1e-13)

    def test_transfer_wrong_mesh(self):
        u = project(poly2, uniform_quad_mesh(3), 1)
        with pytest.raises(ValueError):
            transfer_to_children(u, refine_all(uniform_quad_mesh(3)))


def u_modes(mesh, p):
    return project(lambda x: np.zeros(x.shape[:-1]), mesh, p).n_modes


class TestErrors:
    def test_exact_field_zero_error(self):
        m = uniform_quad_mesh(3)
        u = project(poly2, m, 2)
        assert l2_error(u, poly2) < 1e-12
        assert linf_error(u, poly2) < 1e-12

    def test_elementwise_sums_to_global(self):
        f = sine(1.0)
        u = project(f, uniform_quad_mesh(4), 1)
        e = elementwise_l2_error(u, f)
        assert np.isclose(np.sqrt(np.sum(e**2)), l2_error(u, f), rtol=1e-14)

    def test_norm_matches_quadrature(self):
        m = perturbed_quad_mesh(3, p_scale=0.3, seed=2)
        u = DGField(m, 2, np.random.default_rng(0).normal(size=(m.n_elements, 9)))
        zero = lambda x: np.zeros(x.shape[:-1])
        assert np.isclose(u.l2_norm(), l2_error(u, zero), rtol=1e-12)

    def test_steady_residual(self):
        m = uniform_interval_mesh(3)
        a = DGField(m, 1, np.zeros((3, 2)))
        b = a.with_coeffs(np.ones((3, 2)))
        assert steady_residual(a, b) == 6.0


def test_field_roundtrip(tmp_path):
    m = uniform_quad_mesh(3)
    u = project(poly2, m, 1)
    write_field(tmp_path / "u.txt", u)
    v = read_field(tmp_path / "u.txt", m)
    assert np.array_equal(u.coeffs, v.coeffs)
    with pytest.raises(ValueError):
        read_field(tmp_path / "u.txt", uniform_quad_mesh(4))
