import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st

from ldgpflow.dgops import (
    DGContext,
    dg_divergence,
    dg_gradient,
    dg_norm,
    face_average,
    face_jump_tensor,
    jump_modular,
    jump_seminorm,
    jumps,
    lift_jumps,
    lifted_norm,
    lifting,
    sym_dg_gradient,
    sym_dg_norm,
)
from ldgpflow.femspace import Field, Kind, l2_project, make_space
from ldgpflow.mesh import Mesh, generate_square_mesh
from ldgpflow.nfunctions import NFunctionParams, ShiftedNFunction, shifted_phi_eval
from ldgpflow.properties import (
    check_conforming_gradient,
    check_divergence_by_parts,
    check_lifting_adjoint,
    check_projection,
)

# ---------------------------------------------------------------------------
# brute-force lifting on two triangles: monomial basis, collapsed Gauss rule,
# hand-listed faces with outward normals, dense solves


def _tri_rule(X, n=10):
    g, w = np.polynomial.legendre.leggauss(n)
    g, w = 0.5 * (g + 1), 0.5 * w
    U, V = np.meshgrid(g, g, indexing="ij")
    W = np.outer(w, w) * (1 - U)
    xi, eta = U.ravel(), (V * (1 - U)).ravel()
    x = X[0] + np.outer(xi, X[1] - X[0]) + np.outer(eta, X[2] - X[0])
    e1, e2 = X[1] - X[0], X[2] - X[0]
    area2 = abs(e1[0] * e2[1] - e1[1] * e2[0])
    return x, W.ravel() * area2


def _seg_rule(a, b, n=10):
    g, w = np.polynomial.legendre.leggauss(n)
    t = 0.5 * (g + 1)
    return a + np.outer(t, b - a), 0.5 * w * np.linalg.norm(b - a)


def _monomials(k, x):
    return np.stack([x[:, 0] ** i * x[:, 1] ** j for i in range(k + 1) for j in range(k + 1 - i)], axis=1)


V2 = np.array([[0.0, 0.0], [1.0, 0.0], [1.0, 1.0], [0.0, 1.0]])
CELLS2 = np.array([[0, 1, 2], [0, 2, 3]])
# (cell, other cell or -1, endpoints, outward normal of cell)
FACES2 = [
    (0, -1, (0, 1), (0.0, -1.0)),
    (0, -1, (1, 2), (1.0, 0.0)),
    (0, 1, (0, 2), (-1 / np.sqrt(2), 1 / np.sqrt(2))),
    (1, 0, (0, 2), (1 / np.sqrt(2), -1 / np.sqrt(2))),
    (1, -1, (2, 3), (0.0, 1.0)),
    (1, -1, (3, 0), (-1.0, 0.0)),
]


def brute_force_lifting(k, wfun, x_eval):
    """R w at points x_eval[c] of each cell c; wfun(c, x) is w on cell c."""
    out = []
    for c in range(2):
        X = V2[CELLS2[c]]
        xq, wq = _tri_rule(X)
        B = _monomials(k, xq)
        M = B.T @ (wq[:, None] * B)
        rhs = np.zeros((B.shape[1], 2, 2))
        for cell, other, (a, b), n in FACES2:
            if cell != c:
                continue
            xs, ws = _seg_rule(V2[a], V2[b])
            n = np.array(n)
            jump = np.einsum("qr,s->qrs", wfun(c, xs), n)
            weight = 1.0
            if other >= 0:
                jump += np.einsum("qr,s->qrs", wfun(other, xs), -n)
                weight = 0.5
            rhs += weight * np.einsum("q,qi,qrs->irs", ws, _monomials(k, xs), jump)
        coef = np.linalg.solve(M, rhs.reshape(len(M), 4)).reshape(-1, 2, 2)
        out.append(np.einsum("qi,irs->qrs", _monomials(k, x_eval[c]), coef))
    return out


@pytest.mark.parametrize("k", [1, 2, 3])
@pytest.mark.parametrize("case", ["unit jump", "affine"])
def test_lifting_against_two_cell_oracle(k, case):
    mesh = Mesh(V2, CELLS2)
    ctx = DGContext(mesh, k=k)
    if case == "unit jump":
        vals = [lambda x: np.tile([1.0, 0.0], (len(x), 1)), lambda x: np.zeros((len(x), 2))]
    else:
        rng = np.random.default_rng(3)
        A = rng.normal(size=(2, 2, 3))
        vals = [lambda x, a=A[0]: a[:, :1].T + x @ a[:, 1:].T, lambda x, a=A[1]: a[:, :1].T + x @ a[:, 1:].T]

    def piecewise(x):
        return np.stack([vals[c](x[c].reshape(-1, 2)).reshape(x[c].shape) for c in range(2)])

    w = l2_project(piecewise, make_space(mesh, Kind.BrokenVector, k), degree=8)
    R = lifting(ctx, w)
    xi = np.array([[1 / 3, 1 / 3], [0.1, 0.7], [0.6, 0.2]])
    xphys = ctx.geo.to_physical(xi)
    oracle = brute_force_lifting(k, lambda c, x: vals[c](x), xphys)
    got = R.values_at(xi)
    for c in range(2):
        np.testing.assert_allclose(got[c], oracle[c], atol=1e-12)


# ---------------------------------------------------------------------------


@pytest.fixture(scope="module")
def ctx4():
    return DGContext(generate_square_mesh(4), k=1)


def project(ctx, f):
    return l2_project(f, ctx.vector_space, degree=8)


def rotation(x):
    return np.stack([x[..., 1], -x[..., 0]], -1)


def test_continuous_field_has_no_interior_jumps(ctx4):
    w = project(ctx4, lambda x: np.stack([1 + 2 * x[..., 0], x[..., 0] - x[..., 1]], -1))
    J = jumps(ctx4, w)
    assert np.abs(J[ctx4.interior]).max() < 1e-13
    f = int(np.flatnonzero(ctx4.interior)[0])
    x = ctx4.xf[f, 0]
    np.testing.assert_allclose(face_average(ctx4, w, f, 0), [1 + 2 * x[0], x[0] - x[1]], atol=1e-13)
    np.testing.assert_allclose(face_jump_tensor(ctx4, w, f, 0), 0.0, atol=1e-13)


def test_jump_tensor_is_label_symmetric(ctx4, rng):
    w = Field(ctx4.vector_space, rng.normal(size=ctx4.vector_space.dof_count))
    minus, plus = ctx4.phi_minus, ctx4.phi_plus
    f = int(np.flatnonzero(ctx4.interior)[2])
    loc = w.local()
    wm = loc[ctx4.faces.minus[f]] @ minus[f, 1]
    wp = loc[ctx4.faces.plus[f]] @ plus[f, 1]
    n = ctx4.faces.normals[f]
    swapped = np.outer(wp, -n) + np.outer(wm, n)
    np.testing.assert_allclose(face_jump_tensor(ctx4, w, f, 1), swapped, atol=1e-14)
    np.testing.assert_allclose(face_average(ctx4, w, f, 1), 0.5 * (wp + wm), atol=1e-14)


def test_boundary_jump_definition():
    mesh = Mesh(V2, CELLS2)
    ctx = DGContext(mesh, k=1)
    w = project(ctx, lambda x: np.ones(x.shape[:-1] + (2,)))
    f = int(np.flatnonzero(ctx.boundary)[0])
    np.testing.assert_allclose(face_jump_tensor(ctx, w, f, 0), np.outer([1.0, 1.0], ctx.faces.normals[f]))


def test_lifting_zero_trace_continuous_is_zero():
    ctx = DGContext(generate_square_mesh(4), k=2)

    # piecewise bilinear, so P_2 on every triangle; continuous with zero trace
    def tent(x):
        t = (1 - np.abs(x[..., 0])) * (1 - np.abs(x[..., 1]))
        return np.stack([t, t], -1)

    w = l2_project(tent, ctx.vector_space, degree=8)
    assert np.abs(lifting(ctx, w).coeffs).max() < 1e-12


def test_rotation_lifting_lives_on_boundary_cells(ctx4):
    w = project(ctx4, rotation)
    R = lifting(ctx4, w).local()
    touches = np.zeros(ctx4.mesh.n_cells, bool)
    touches[ctx4.faces.minus[ctx4.boundary]] = True
    assert np.abs(R[~touches]).max() < 1e-13
    assert np.abs(R[touches]).max() > 0.1
    # D w = 0, so sym G = -sym R exactly
    Dg = sym_dg_gradient(ctx4, w)
    Rq = ctx4.at_quadrature(R).reshape(Dg.shape)
    np.testing.assert_allclose(Dg, -0.5 * (Rq + np.swapaxes(Rq, -1, -2)), atol=1e-13)
    # on a boundary cell, R is the orthonormal-basis solve of the cell's boundary face terms
    f = int(np.flatnonzero(ctx4.boundary)[0])
    K = ctx4.faces.minus[f]
    own = np.flatnonzero(ctx4.boundary & (ctx4.faces.minus == K))
    ref = sum(
        np.einsum("q,qi,qr,s->rsi", ctx4.wf[g], ctx4.phi_minus[g], rotation(ctx4.xf[g]), ctx4.faces.normals[g])
        for g in own
    ) / ctx4.geo.det[K]
    np.testing.assert_allclose(R[K].reshape(2, 2, -1), ref, atol=1e-13)


def test_divergence_of_identity_map(ctx4):
    w = project(ctx4, lambda x: x.copy())
    div = dg_divergence(ctx4, w)
    R = ctx4.at_quadrature(lifting(ctx4, w).local()).reshape(div.shape + (2, 2))
    np.testing.assert_allclose(div, 2.0 - np.trace(R, axis1=-2, axis2=-1), atol=1e-13)
    # integral of Div_h w vanishes for continuous w: int div w = int_bdry w.n
    assert abs(np.sum(ctx4.wq * div)) < 1e-12


def test_property_checks_small():
    rng = np.random.default_rng(1)
    assert check_lifting_adjoint(rng, n_fields=10).passed
    assert check_conforming_gradient(rng).passed
    assert check_divergence_by_parts(rng).passed
    assert all(r.passed for r in check_projection(rng))


def test_tuple_input_matches_field(ctx4):
    def fun(x):
        return np.stack([x[..., 0] * x[..., 1], x[..., 1]], -1)

    def grad(x):
        z = np.zeros(x.shape[:-1])
        return np.stack([np.stack([x[..., 1], x[..., 0]], -1), np.stack([z, z + 1], -1)], -2)

    ctx = DGContext(generate_square_mesh(4), k=2)
    w = l2_project(fun, ctx.vector_space, degree=8)
    np.testing.assert_allclose(dg_gradient(ctx, (fun, grad)), dg_gradient(ctx, w), atol=1e-12)


def test_norms_basic(ctx4, rng):
    zero = Field(ctx4.vector_space, np.zeros(ctx4.vector_space.dof_count))
    assert dg_norm(ctx4, zero, 2.5) == 0.0
    w = Field(ctx4.vector_space, rng.normal(size=ctx4.vector_space.dof_count))
    for lam in (-3.0, 0.5):
        scaled = Field(ctx4.vector_space, lam * w.coeffs)
        assert dg_norm(ctx4, scaled, 2.5) == pytest.approx(abs(lam) * dg_norm(ctx4, w, 2.5), rel=1e-12)
        assert sym_dg_norm(ctx4, scaled, 3.0) == pytest.approx(abs(lam) * sym_dg_norm(ctx4, w, 3.0), rel=1e-12)
    assert lifted_norm(ctx4, w, 2.5) > 0
    assert sym_dg_norm(ctx4, w, 2.5) <= dg_norm(ctx4, w, 2.5) + 1e-12


def test_dg_norm_of_zero_trace_polynomial():
    ctx = DGContext(generate_square_mesh(4), k=2)

    def fun(x):
        b = (1 - x[..., 0] ** 2)
        return np.stack([b, 0 * b], -1)

    w = l2_project(fun, ctx.vector_space, degree=8)
    # || d/dx (1 - x^2) ||_2 over the square = sqrt(int 4 x^2) = sqrt(16/3)
    assert dg_norm(ctx, w, 2.0) - jump_seminorm(ctx, w, 2.0) == pytest.approx(np.sqrt(16 / 3), rel=1e-12)
    # the trace is nonzero only on y = +-1, where it equals 1 - x^2
    bnd = np.sqrt(2 * 16 / 15) / np.sqrt(ctx.h)
    assert jump_seminorm(ctx, w, 2.0) == pytest.approx(bnd, rel=1e-12)


def test_jump_modular_zero_and_quadratic(ctx4, rng):
    zero = np.zeros(ctx4.xf.shape)
    assert jump_modular(ctx4, zero, 0.3, 2.5, 1e-4) == 0.0
    w = Field(ctx4.vector_space, rng.normal(size=ctx4.vector_space.dof_count))
    J = jumps(ctx4, w)
    h = ctx4.h
    expect = 0.5 * h * np.sum(ctx4.wf * np.sum(J**2, axis=-1)) / h**2
    for a in (0.0, 2.0):
        assert jump_modular(ctx4, w, a, 2.0, 0.0) == pytest.approx(expect, rel=1e-13)


@given(st.floats(0.0, 3.0), st.floats(0.01, 5.0), st.floats(1.5, 3.5))
def test_jump_modular_single_face(a, Jmag, p):
    mesh = Mesh(V2, CELLS2)
    ctx = DGContext(mesh, k=1)
    f = int(np.flatnonzero(ctx.boundary)[0])
    J = np.zeros(ctx.xf.shape)
    J[f, :, 0] = Jmag
    length = ctx.faces.lengths[f]
    h = ctx.h
    expect = h * length * shifted_phi_eval(ShiftedNFunction(NFunctionParams(p, 1e-4), a), Jmag / h)
    assert jump_modular(ctx, J, a, p, 1e-4) == pytest.approx(expect, rel=1e-12)


def test_jump_modular_rejects_negative_shift(ctx4):
    with pytest.raises(ValueError):
        jump_modular(ctx4, np.zeros(ctx4.xf.shape), -1.0, 2.5, 0.0)


def test_lift_jumps_is_linear(ctx4, rng):
    J1, J2 = rng.normal(size=(2,) + ctx4.xf.shape)
    a = lift_jumps(ctx4, J1 + 2 * J2).coeffs
    b = lift_jumps(ctx4, J1).coeffs + 2 * lift_jumps(ctx4, J2).coeffs
    np.testing.assert_allclose(a, b, atol=1e-12)
