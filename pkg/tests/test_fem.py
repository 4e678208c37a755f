"""
求積、參考元素、空間與組裝測試
"""

from math import factorial

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from src.data_models import ElementFamily, ValueKind
from src.fem import (
    Field, QuadratureContext, UnsupportedSpaceError, assemble_divdiv, assemble_mass,
    assemble_mixed_curl, assemble_stiffness, build_space, interpolate, l2_error, reference_element,
    simplex_rule,
)
from src.mesh import generate_unit_square_mesh
from src.mesh.mesh import barycentric

LAGRANGE = ElementFamily.LAGRANGE
RT = ElementFamily.RAVIART_THOMAS
NEDELEC = ElementFamily.NEDELEC


# =============================================================================
# 求積
# =============================================================================

class TestQuadrature:

    @given(a=st.integers(0, 5), b=st.integers(0, 5))
    def test_triangle_monomials_exact(self, a, b):
        rule = simplex_rule(2, a + b)
        value = np.sum(rule.weights * rule.points[:, 0] ** a * rule.points[:, 1] ** b)
        exact = factorial(a) * factorial(b) / factorial(a + b + 2)
        assert value == pytest.approx(exact, rel=1e-12)

    @given(a=st.integers(0, 4), b=st.integers(0, 4), c=st.integers(0, 4))
    def test_tetrahedron_monomials_exact(self, a, b, c):
        rule = simplex_rule(3, a + b + c)
        p = rule.points
        value = np.sum(rule.weights * p[:, 0] ** a * p[:, 1] ** b * p[:, 2] ** c)
        exact = factorial(a) * factorial(b) * factorial(c) / factorial(a + b + c + 3)
        assert value == pytest.approx(exact, rel=1e-12)

    @pytest.mark.parametrize("dim", [1, 2, 3])
    def test_points_inside_reference(self, dim):
        rule = simplex_rule(dim, 7)
        assert np.all(rule.points >= 0)
        assert np.all(rule.points.sum(axis=1) <= 1 + 1e-14)
        assert rule.weights.sum() == pytest.approx(rule.reference_volume)

    def test_unsupported_dimension(self):
        with pytest.raises(ValueError):
            simplex_rule(4, 2)


# =============================================================================
# 參考元素
# =============================================================================

class TestReferenceElements:

    @pytest.mark.parametrize("family,order,dim,n_dofs", [
        (LAGRANGE, 1, 2, 3), (LAGRANGE, 2, 2, 6), (LAGRANGE, 3, 2, 10), (LAGRANGE, 1, 3, 4),
        (RT, 1, 2, 8), (RT, 2, 2, 15), (RT, 0, 3, 4), (NEDELEC, 0, 3, 6),
    ])
    def test_dimensions(self, family, order, dim, n_dofs):
        assert reference_element(family, order, dim).n_dofs == n_dofs

    @pytest.mark.parametrize("family,order,dim", [(LAGRANGE, 4, 2), (RT, 0, 2), (NEDELEC, 1, 3), (NEDELEC, 0, 2)])
    def test_unsupported(self, family, order, dim):
        with pytest.raises(UnsupportedSpaceError):
            reference_element(family, order, dim)

    @pytest.mark.parametrize("family,order,dim", [
        (LAGRANGE, 2, 2), (LAGRANGE, 3, 2), (RT, 1, 2), (RT, 2, 2), (RT, 0, 3), (NEDELEC, 0, 3),
    ])
    def test_dual_basis(self, family, order, dim):
        el = reference_element(family, order, dim)
        D = np.array([[np.sum(ell.weights * el.tabulate(ell.points)[:, j, :]) for j in range(el.n_dofs)]
                      for ell in el.functionals])
        np.testing.assert_allclose(D, np.eye(el.n_dofs), atol=1e-10)

    @settings(max_examples=50)
    @given(x=st.floats(0, 1), y=st.floats(0, 1), order=st.sampled_from([1, 2, 3]))
    def test_lagrange_partition_of_unity(self, x, y, order):
        if x + y > 1:
            x, y = 1 - x, 1 - y
        el = reference_element(LAGRANGE, order, 2)
        values = el.tabulate(np.array([[x, y]]))[0, :, 0]
        assert values.sum() == pytest.approx(1.0, abs=1e-10)
        grads = el.tabulate_grads(np.array([[x, y]]))[0, :, 0, :]
        np.testing.assert_allclose(grads.sum(axis=0), 0.0, atol=1e-9)


# =============================================================================
# 空間與插值
# =============================================================================

class TestSpaces:

    @pytest.mark.parametrize("order", [1, 2, 3])
    def test_lagrange_reproduces_polynomials(self, square_mesh, order):
        space = build_space(square_mesh, LAGRANGE, order)

        def poly(x):
            return (1 + x[..., 0]) ** order - 2 * x[..., 1] ** order + x[..., 0] * x[..., 1] ** (order - 1)

        assert l2_error(interpolate(space, poly), poly) < 1e-12

    @pytest.mark.parametrize("order", [1, 2])
    def test_rt_reproduces_polynomials(self, square_mesh, order):
        space = build_space(square_mesh, RT, order)

        def field(x):
            return np.stack([1 + x[..., 0] ** order, x[..., 0] - 2 * x[..., 1] ** order], axis=-1)

        def div(x):
            return order * x[..., 0] ** (order - 1) - 2 * order * x[..., 1] ** (order - 1)

        uh = interpolate(space, field)
        assert l2_error(uh, field) < 1e-11
        assert l2_error(uh, div, kind='div') < 1e-10

    def test_nedelec_reproduces_rigid_fields(self, cube_mesh):
        space = build_space(cube_mesh, NEDELEC, 0)
        a, b = np.array([1.0, -2.0, 0.5]), np.array([0.3, 0.7, -1.1])

        def field(x):
            return a + np.cross(b, x)

        uh = interpolate(space, field)
        assert l2_error(uh, field) < 1e-12
        assert l2_error(uh, lambda x: np.broadcast_to(2 * b, x.shape), kind='curl') < 1e-11

    def test_lagrange_convergence_rate(self):
        errors = []
        for M in (4, 8):
            space = build_space(generate_unit_square_mesh(M), LAGRANGE, 1)
            fn = lambda x: np.sin(np.pi * x[..., 0]) * np.cos(np.pi * x[..., 1])
            errors.append(l2_error(interpolate(space, fn), fn))
        assert 3.5 < errors[0] / errors[1] < 4.5

    def test_boundary_dofs(self, square_mesh):
        assert len(build_space(square_mesh, LAGRANGE, 1).boundary_dofs) == 16
        assert len(build_space(square_mesh, LAGRANGE, 2).boundary_dofs) == 32
        # RT1：每條邊兩個法向矩
        assert len(build_space(square_mesh, RT, 1).boundary_dofs) == 32

    def test_complex_interpolation(self, square_mesh):
        space = build_space(square_mesh, LAGRANGE, 1, ValueKind.COMPLEX_SCALAR)
        uh = interpolate(space, lambda x: np.exp(1j * x[..., 0]))
        assert np.iscomplexobj(uh.coeffs)
        assert space.is_complex

    def test_eval_basis_keys(self, square_mesh):
        ref = np.array([0.2, 0.3])
        assert set(build_space(square_mesh, LAGRANGE, 1).eval_basis(0, ref)) == {'value', 'grad'}
        assert set(build_space(square_mesh, RT, 1).eval_basis(0, ref)) == {'value', 'div'}


def _interior_facet_pairs(mesh):
    rows, cols = np.nonzero(np.isin(mesh.cell_facets, np.flatnonzero(mesh.facet_cell_count == 2)))
    order = np.argsort(mesh.cell_facets[rows, cols], kind='stable')
    rows = rows[order].reshape(-1, 2)
    facets = mesh.cell_facets[rows[:, 0], cols[order].reshape(-1, 2)[:, 0]]
    return facets, rows


class TestConformity:

    @pytest.mark.parametrize("family,order,continuity", [
        (LAGRANGE, 2, 'value'), (RT, 1, 'normal'), (RT, 2, 'normal'),
    ])
    def test_2d_continuity_across_edges(self, square_mesh, family, order, continuity):
        mesh = square_mesh
        space = build_space(mesh, family, order)
        rng = np.random.default_rng(3)
        uh = Field(space, rng.standard_normal(space.ndofs))
        facets, pairs = _interior_facet_pairs(mesh)
        x = mesh.vertices[mesh.facets[facets]]
        point = x[:, 0] + 0.3 * (x[:, 1] - x[:, 0])
        left = uh.evaluate_at(pairs[:, 0], barycentric(mesh, pairs[:, 0], point))
        right = uh.evaluate_at(pairs[:, 1], barycentric(mesh, pairs[:, 1], point))
        if continuity == 'normal':
            n = mesh.facet_normals[facets]
            left, right = np.einsum('ni,ni->n', left, n), np.einsum('ni,ni->n', right, n)
        np.testing.assert_allclose(left, right, atol=1e-10)

    @pytest.mark.parametrize("family,continuity", [(RT, 'normal'), (NEDELEC, 'tangential')])
    def test_3d_continuity_across_faces(self, cube_mesh, family, continuity):
        mesh = cube_mesh
        space = build_space(mesh, family, 0)
        rng = np.random.default_rng(5)
        uh = Field(space, rng.standard_normal(space.ndofs))
        facets, pairs = _interior_facet_pairs(mesh)
        x = mesh.vertices[mesh.facets[facets]]
        point = 0.5 * x[:, 0] + 0.3 * x[:, 1] + 0.2 * x[:, 2]
        left = uh.evaluate_at(pairs[:, 0], barycentric(mesh, pairs[:, 0], point))
        right = uh.evaluate_at(pairs[:, 1], barycentric(mesh, pairs[:, 1], point))
        n = mesh.facet_normals[facets]
        if continuity == 'normal':
            np.testing.assert_allclose(np.einsum('ni,ni->n', left, n), np.einsum('ni,ni->n', right, n), atol=1e-10)
        else:
            np.testing.assert_allclose(np.cross(left, n), np.cross(right, n), atol=1e-10)


# =============================================================================
# 組裝
# =============================================================================

class TestAssembly:

    def test_mass_and_stiffness_identities(self, square_mesh):
        space = build_space(square_mesh, LAGRANGE, 2)
        ones = np.ones(space.ndofs)
        M = assemble_mass(space)
        K = assemble_stiffness(space)
        assert ones @ M @ ones == pytest.approx(1.0)
        np.testing.assert_allclose(K @ ones, 0.0, atol=1e-12)
        assert abs(M - M.T).max() < 1e-14
        assert abs(K - K.T).max() < 1e-14

    def test_rt_mass_and_divdiv(self, square_mesh):
        space = build_space(square_mesh, RT, 1)
        uh = interpolate(space, lambda x: np.stack([x[..., 0], x[..., 1]], axis=-1))
        D = assemble_divdiv(space)
        M = assemble_mass(space)
        # div(x, y) = 2，∫ 4 = 4；∫ |x|² = 2/3
        assert uh.coeffs @ D @ uh.coeffs == pytest.approx(4.0)
        assert uh.coeffs @ M @ uh.coeffs == pytest.approx(2.0 / 3.0)

    def test_curl_of_constant_is_zero(self, square_mesh):
        gamma = build_space(square_mesh, LAGRANGE, 2)
        A = build_space(square_mesh, RT, 1)
        C = assemble_mixed_curl(gamma, A)
        assert C.shape == (gamma.ndofs, A.ndofs)
        np.testing.assert_allclose(np.ones(gamma.ndofs) @ C, 0.0, atol=1e-12)

    def test_mixed_curl_against_quadrature(self, square_mesh):
        gamma = build_space(square_mesh, LAGRANGE, 2)
        A = build_space(square_mesh, RT, 1)
        chi = interpolate(gamma, lambda x: x[..., 0] * x[..., 1])
        v = interpolate(A, lambda x: np.stack([np.ones_like(x[..., 0]), np.zeros_like(x[..., 0])], axis=-1))
        C = assemble_mixed_curl(gamma, A)
        # curl(xy) = (x, −y)，與 (1, 0) 的積分為 1/2
        assert chi.coeffs @ C @ v.coeffs == pytest.approx(0.5)

    def test_quadrature_context_shapes(self, square_mesh):
        ctx = QuadratureContext(square_mesh, 4)
        space = build_space(square_mesh, RT, 1)
        uh = Field.zeros(space)
        assert ctx.x.shape == (ctx.n_cells, ctx.n_points, 2)
        assert ctx.evaluate(uh).shape == (ctx.n_cells, ctx.n_points, 2)
        assert ctx.evaluate(uh, 'div').shape == (ctx.n_cells, ctx.n_points)
        assert ctx.integrate(np.ones((ctx.n_cells, ctx.n_points))) == pytest.approx(1.0)

    def test_cell_average_of_constant(self, square_mesh):
        space = build_space(square_mesh, LAGRANGE, 1)
        np.testing.assert_allclose(Field.constant(space, 2.5).cell_average(), 2.5)

    def test_coefficient_length_checked(self, square_mesh):
        space = build_space(square_mesh, LAGRANGE, 1)
        with pytest.raises(ValueError):
            Field(space, np.zeros(space.ndofs + 1))
