import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ldgpflow.femspace import (
    Field,
    Kind,
    evaluate,
    evaluate_gradient,
    face_quadrature_rule,
    inner,
    integrate,
    interpolate,
    l2_project,
    make_space,
    mass_matrix,
    orthonormal_basis,
    prolongate,
    quadrature_rule,
)
from ldgpflow.mesh import Mesh, generate_square_mesh, red_refine


@pytest.fixture(scope="module")
def mesh4():
    return generate_square_mesh(4)


def single_cell():
    return Mesh(np.array([[0.0, 0.0], [1.0, 0.0], [0.0, 1.0]]), np.array([[0, 1, 2]]))


def test_dof_counts(mesh4):
    assert make_space(mesh4, Kind.BrokenVector, 1).dof_count == 192
    assert make_space(mesh4, Kind.ContinuousScalar, 1).dof_count == mesh4.n_vertices
    assert make_space(mesh4, Kind.BrokenTensor, 0).dof_count == 4 * mesh4.n_cells
    assert make_space(mesh4, "scalar", 2).dof_count == 6 * mesh4.n_cells


def test_triangle_rule_monomial():
    r = quadrature_rule(2)
    xi = r.ref_points
    assert np.sum(r.weights * xi[:, 0] * xi[:, 1]) == pytest.approx(1 / 24, rel=1e-14)
    assert r.weights.sum() == pytest.approx(0.5, rel=1e-15)


@pytest.mark.parametrize("deg", [1, 4, 8, 12])
def test_triangle_rule_exactness(deg):
    # int_T x^a y^b = a! b! / (a + b + 2)!
    from math import factorial

    r = quadrature_rule(deg)
    xi = r.ref_points
    for a in range(deg + 1):
        for b in range(deg + 1 - a):
            exact = factorial(a) * factorial(b) / factorial(a + b + 2)
            assert np.sum(r.weights * xi[:, 0] ** a * xi[:, 1] ** b) == pytest.approx(exact, rel=1e-12)


def test_face_rule():
    r = face_quadrature_rule(5)
    assert np.sum(r.weights * r.points**5) == pytest.approx(1 / 6, rel=1e-14)
    assert r.weights.sum() == pytest.approx(1.0)


@pytest.mark.parametrize("k", [0, 1, 2])
def test_orthonormal_basis(k):
    r = quadrature_rule(2 * k + 2)
    phi, _ = orthonormal_basis(k, r.ref_points)
    G = np.einsum("q,qi,qj->ij", r.weights, phi, phi)
    np.testing.assert_allclose(G, np.eye(len(G)), atol=1e-13)
    np.testing.assert_allclose(phi[:, 0], np.sqrt(2))


def test_projection_reproduces_linear(mesh4):
    V = make_space(mesh4, Kind.BrokenScalar, 1)
    f = l2_project(lambda x: x[..., 0], V)
    x = np.array([[0.2, 0.3], [0.0, 0.0], [1 / 3, 1 / 3]])
    phys = V.geometry.to_physical(x)
    np.testing.assert_allclose(f.values_at(x), phys[..., 0], atol=1e-14)


def test_constant_projection_is_mean():
    V = make_space(single_cell(), Kind.BrokenScalar, 0)
    f = l2_project(lambda x: x[..., 0] ** 2, V)
    # mean of x^2 over the unit right triangle is (1/12) / (1/2)
    assert evaluate(f, 0, [0.3, 0.3]) == pytest.approx(1 / 6, rel=1e-13)


def test_projection_orthogonality(mesh4, rng):
    V = make_space(mesh4, Kind.BrokenVector, 1)
    a = rng.normal(size=4)

    def f(x):
        return np.stack([np.sin(a[0] * x[..., 0]) * np.exp(a[1] * x[..., 1]), np.cos(a[2] * x[..., 0] * x[..., 1])], -1)

    Pf = l2_project(f, V, degree=14)
    for j in range(0, V.dof_count, 7):
        e = np.zeros(V.dof_count)
        e[j] = 1.0
        z = Field(V, e)
        assert abs(inner(Pf, z, degree=14) - _inner_callable(mesh4, f, z)) <= 1e-12


def _inner_callable(mesh, f, z, degree=14):
    r = quadrature_rule(degree)
    x = z.space.geometry.to_physical(r.ref_points)
    w = z.space.geometry.det[:, None] * r.weights
    return float(np.sum(w * np.einsum("kqc,kqc->kq", f(x), z.values_at(r.ref_points))))


def test_p1_nodal_basis_is_barycentric():
    Q = make_space(single_cell(), Kind.ContinuousScalar, 1)
    f = Field(Q, np.array([1.0, 0.0, 0.0]))
    assert evaluate(f, 0, [0.2, 0.3]) == pytest.approx(0.5)


def test_constant_and_linear_evaluation(mesh4, rng):
    V = make_space(mesh4, Kind.BrokenScalar, 1)
    c = l2_project(lambda x: np.full(x.shape[:-1], 3.5), V)
    for cell in rng.integers(0, mesh4.n_cells, 5):
        assert evaluate(c, cell, rng.uniform(0, 0.5, 2)) == pytest.approx(3.5)
    lin = l2_project(lambda x: 2 * x[..., 0] - 5 * x[..., 1], V)
    np.testing.assert_allclose(evaluate_gradient(lin, 3, [0.1, 0.1]), [2.0, -5.0], atol=1e-13)
    with pytest.raises(IndexError):
        evaluate(c, mesh4.n_cells, [0.1, 0.1])


def test_integrate_area(mesh4):
    assert integrate(mesh4, lambda x: np.ones(x.shape[:-1])) == pytest.approx(4.0)


def test_continuous_projection_and_interpolation(mesh4):
    Q = make_space(mesh4, Kind.ContinuousScalar, 1)
    f = lambda x: 1 + x[..., 0] - 3 * x[..., 1]  # noqa: E731
    np.testing.assert_allclose(l2_project(f, Q).coeffs, interpolate(f, Q).coeffs, atol=1e-12)
    M = mass_matrix(Q)
    assert M.sum() == pytest.approx(4.0)


@given(st.integers(0, 2))
def test_prolongation_is_exact_for_broken_fields(k):
    coarse = generate_square_mesh(2)
    fine = red_refine(coarse)
    rng = np.random.default_rng(k)
    Vc = make_space(coarse, Kind.BrokenVector, k)
    Vf = make_space(fine, Kind.BrokenVector, k)
    u = Field(Vc, rng.normal(size=Vc.dof_count))
    uf = prolongate(u, Vf)
    xi = np.array([[0.1, 0.2], [0.5, 0.25]])
    xf = Vf.geometry.to_physical(xi)
    # locate the coarse parent and compare values
    parent = fine.parent
    ref = Vc.geometry.to_reference(xf, parent)
    direct = np.stack([u.values_at(ref[c], cells=[parent[c]])[0] for c in range(fine.n_cells)])
    np.testing.assert_allclose(uf.values_at(xi), direct, atol=1e-12)


def test_field_shape_validation(mesh4):
    V = make_space(mesh4, Kind.BrokenVector, 1)
    with pytest.raises(ValueError):
        Field(V, np.zeros(5))
