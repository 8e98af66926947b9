"""Face traces, lifting operators and DG differential operators.

Conventions
-----------
For an interior face with cells K- (lower index) and K+ and the stored
normal n = n- (pointing from K- to K+):

    {w}       = (w- + w+) / 2
    [[w (x) n]] = w- (x) n- + w+ (x) n+ = (w- - w+) (x) n

On boundary faces {w} = w and [[w (x) n]] = w (x) n with the outward normal.
The lifting R w in the broken tensor space X_h^k satisfies

    (R w, X) = < [[w (x) n]], {X} >   for all X in X_h^k,

and the DG gradient is G w = grad_h w - R w.

The class :class:`DGContext` caches the geometric data of one mesh and one
polynomial degree and exposes the lifted gradient of a broken P_k velocity
as small dense per-cell matrices acting on "patch" coefficients: the cell's
own coefficients followed by those of its three face neighbours.
"""
from __future__ import annotations

from functools import cached_property

import numpy as np

from .constitutive import sym
from .femspace import (
    Field,
    Kind,
    Space,
    _geometry,
    default_quadrature_degree,
    face_quadrature_rule,
    make_space,
    n_local,
    orthonormal_basis,
    quadrature_rule,
)
from .mesh import Mesh, build_faces
from .nfunctions import NFunctionParams, phi_eval_shifts


class DGContext:
    """Quadrature, traces and lifting data for broken P_k on one mesh."""

    def __init__(self, mesh: Mesh, k: int = 1, quad_degree: int | None = None,
                 face_degree: int | None = None):
        if k < 1:
            raise ValueError("the LDG velocity space needs k >= 1")
        self.mesh = mesh
        self.k = k
        self.nb = n_local(k)
        self.faces = build_faces(mesh)
        self.geo = _geometry(mesh)
        self.h = mesh.h
        qd = default_quadrature_degree(k) if quad_degree is None else quad_degree
        fd = default_quadrature_degree(k) if face_degree is None else face_degree
        self.rule = quadrature_rule(qd)
        self.face_rule = face_quadrature_rule(fd)

        m = mesh.n_cells
        self.phi, ref_grad = orthonormal_basis(k, self.rule.ref_points)  # (nq, nb)
        self.grad_phi = self.geo.physical_gradients(ref_grad)  # (m, nq, nb, 2)
        self.xq = self.geo.to_physical(self.rule.ref_points)  # (m, nq, 2)
        self.wq = self.geo.det[:, None] * self.rule.weights[None, :]  # physical weights

        f = self.faces
        xa = mesh.vertices[f.vertices[:, 0]]
        xb = mesh.vertices[f.vertices[:, 1]]
        t = self.face_rule.points
        self.xf = xa[:, None, :] + t[None, :, None] * (xb - xa)[:, None, :]  # (F, nqf, 2)
        self.wf = f.lengths[:, None] * self.face_rule.weights[None, :]
        self.boundary = f.is_boundary
        self.interior = ~self.boundary
        self.phi_minus = self._face_basis(f.minus)
        plus = np.where(self.boundary, f.minus, f.plus)
        self.phi_plus = self._face_basis(plus)
        self.phi_plus[self.boundary] = 0.0
        self.plus_or_minus = plus

        # cell-wise view of the faces
        cf = f.cell_faces  # (m, 3)
        self.cell_face = cf
        is_minus = f.minus[cf] == np.arange(m)[:, None]
        self.cell_normal = np.where(is_minus[..., None], f.normals[cf], -f.normals[cf])
        self.cell_face_weight = np.where(self.boundary[cf], 1.0, 0.5)
        self.neighbor = np.where(is_minus, f.plus[cf], f.minus[cf])
        self.neighbor[self.boundary[cf]] = -1
        self.phi_self = np.where(is_minus[..., None, None], self.phi_minus[cf], self.phi_plus[cf])
        self.phi_nbr = np.where(is_minus[..., None, None], self.phi_plus[cf], self.phi_minus[cf])

    def _face_basis(self, cells):
        xi = self.geo.to_reference(self.xf, cells)
        nf, nq = xi.shape[:2]
        val, _ = orthonormal_basis(self.k, xi.reshape(-1, 2))
        return val.reshape(nf, nq, self.nb)

    # ------------------------------------------------------------------
    # spaces

    @cached_property
    def vector_space(self) -> Space:
        return make_space(self.mesh, Kind.BrokenVector, self.k)

    @cached_property
    def tensor_space(self) -> Space:
        return make_space(self.mesh, Kind.BrokenTensor, self.k)

    @cached_property
    def scalar_space(self) -> Space:
        return make_space(self.mesh, Kind.BrokenScalar, self.k)

    # ------------------------------------------------------------------
    # patch matrices for the lifted gradient of a P_k velocity

    @cached_property
    def patch_dofs(self) -> np.ndarray:
        """(m, 8 nb) velocity dofs of the cell and its three neighbours.

        Missing neighbours (boundary) repeat the cell's own dofs; the
        corresponding matrix columns are zero."""
        d = self.vector_space.cell_dofs
        nbr = np.where(self.neighbor >= 0, self.neighbor, np.arange(self.mesh.n_cells)[:, None])
        return np.hstack([d, d[nbr[:, 0]], d[nbr[:, 1]], d[nbr[:, 2]]])

    @cached_property
    def gradient_patch(self) -> np.ndarray:
        """(m, 4 nb, 8 nb): tensor coefficients of G_h v on each cell.

        Row (2r+s)*nb + i, column block*2nb + r'*nb + l."""
        m, nb = self.mesh.n_cells, self.nb
        w = self.rule.weights
        grad = np.einsum("q,kqls,qi->ksil", w, self.grad_phi, self.phi)
        inv = 1.0 / self.geo.det
        c = self.cell_face_weight  # (m, 3)
        ws = self.wf[self.cell_face]  # (m, 3, nqf)
        n = self.cell_normal  # (m, 3, 2)
        lift_self = np.einsum("k,kj,kjq,kjqi,kjs,kjql->ksil", inv, c, ws, self.phi_self, n, self.phi_self)
        lift_nbr = np.einsum("k,kj,kjq,kjqi,kjs,kjql->kjsil", inv, c, ws, self.phi_self, n, self.phi_nbr)
        lift_nbr[self.neighbor < 0] = 0.0

        G = np.zeros((m, 2, 2, nb, 4, 2, nb))
        own = grad - lift_self
        for r in range(2):
            G[:, r, :, :, 0, r, :] = own
            for j in range(3):
                G[:, r, :, :, 1 + j, r, :] = lift_nbr[:, j]
        return G.reshape(m, 4 * nb, 8 * nb)

    def boundary_lift(self, g) -> np.ndarray:
        """Tensor coefficients (m, 4, nb) of R applied to boundary data only.

        ``g`` is a callable or an array of values at boundary face points,
        shape (F, nqf, 2) (entries of interior faces are ignored)."""
        vals = g(self.xf) if callable(g) else np.asarray(g)
        vals = np.where(self.boundary[:, None, None], vals, 0.0)
        f = self.faces
        out = np.zeros((self.mesh.n_cells, 2, 2, self.nb))
        contrib = np.einsum("fq,fqi,fs,fqr->frsi", self.wf, self.phi_minus, f.normals, vals)
        np.add.at(out, f.minus, contrib / self.geo.det[f.minus, None, None, None])
        return out.reshape(self.mesh.n_cells, 4, self.nb)

    def lifted_gradient(self, v: np.ndarray, boundary_values=None) -> np.ndarray:
        """Tensor coefficients (m, 4, nb) of G_h v (+ R of boundary data)."""
        L = np.einsum("kab,kb->ka", self.gradient_patch, v[self.patch_dofs])
        L = L.reshape(self.mesh.n_cells, 4, self.nb)
        if boundary_values is not None:
            L = L + self.boundary_lift(boundary_values)
        return L

    def at_quadrature(self, coeffs: np.ndarray) -> np.ndarray:
        """Evaluate per-cell coefficients (m, c, nb) at the volume points."""
        return np.einsum("kci,qi->kqc", coeffs, self.phi)

    # ------------------------------------------------------------------
    # face-local jump matrices for velocity fields

    @cached_property
    def face_dofs(self) -> np.ndarray:
        """(F, 4 nb): minus-cell dofs then plus-cell dofs (minus repeated on ∂Ω)."""
        d = self.vector_space.cell_dofs
        return np.hstack([d[self.faces.minus], d[self.plus_or_minus]])

    @cached_property
    def jump_matrix(self) -> np.ndarray:
        """(F, nqf, 2, 4 nb): vector jump v- - v+ (v on ∂Ω) at face points."""
        F, nq, nb = self.faces.n_faces, len(self.face_rule.weights), self.nb
        J = np.zeros((F, nq, 2, 2, 2, nb))
        for r in range(2):
            J[:, :, r, 0, r, :] = self.phi_minus
            J[:, :, r, 1, r, :] = -self.phi_plus
        return J.reshape(F, nq, 2, 4 * nb)

    def vector_jumps(self, v: np.ndarray) -> np.ndarray:
        return np.einsum("fqra,fa->fqr", self.jump_matrix, v[self.face_dofs])

    def cell_means_sym(self, L: np.ndarray) -> np.ndarray:
        """Cell means of sym(L) for tensor coefficients L (m, 4, nb)."""
        c0 = L[:, :, 0].reshape(-1, 2, 2) * np.sqrt(2.0)
        return sym(c0)

    def face_shift(self, L: np.ndarray) -> np.ndarray:
        """Per-face average of |Pi^0 L_sym| (one-sided on the boundary)."""
        mags = np.linalg.norm(self.cell_means_sym(L).reshape(-1, 4), axis=1)
        f = self.faces
        return np.where(self.boundary, mags[f.minus], 0.5 * (mags[f.minus] + mags[self.plus_or_minus]))


# ----------------------------------------------------------------------
# traces of general fields

def _traces(ctx: DGContext, w):
    """One-sided values (F, nqf, 2) of a Field or callable at face points."""
    if isinstance(w, Field):
        loc = w.local()
        minus = np.einsum("fci,fqi->fqc", loc[ctx.faces.minus], ctx.phi_minus)
        plus = np.einsum("fci,fqi->fqc", loc[ctx.plus_or_minus], ctx.phi_plus)
        plus[ctx.boundary] = np.nan
        return minus, plus
    vals = np.asarray(w(ctx.xf), dtype=float)
    plus = vals.copy()
    plus[ctx.boundary] = np.nan
    return vals, plus


def face_average(ctx: DGContext, w, face: int, point: int):
    """{w} at face quadrature point index ``point``."""
    minus, plus = _traces(ctx, w)
    if ctx.boundary[face]:
        return minus[face, point]
    return 0.5 * (minus[face, point] + plus[face, point])


def face_jump_tensor(ctx: DGContext, w, face: int, point: int):
    """[[w (x) n]] at face quadrature point index ``point``."""
    minus, plus = _traces(ctx, w)
    n = ctx.faces.normals[face]
    if ctx.boundary[face]:
        return np.outer(minus[face, point], n)
    return np.outer(minus[face, point], n) + np.outer(plus[face, point], -n)


def jumps(ctx: DGContext, w, boundary_data=None) -> np.ndarray:
    """Vector jumps (F, nqf, 2): w- - w+ inside, w - g on ∂Ω (g = 0 by default)."""
    minus, plus = _traces(ctx, w)
    J = np.where(ctx.boundary[:, None, None], minus, minus - np.nan_to_num(plus))
    if boundary_data is not None:
        g = boundary_data(ctx.xf) if callable(boundary_data) else boundary_data
        J = J - np.where(ctx.boundary[:, None, None], g, 0.0)
    return J


def lift_jumps(ctx: DGContext, J: np.ndarray) -> Field:
    """Lifting of face jump data J (F, nqf, 2), interpreted as J (x) n-."""
    f = ctx.faces
    m, nb = ctx.mesh.n_cells, ctx.nb
    out = np.zeros((m, 2, 2, nb))
    c = np.where(ctx.boundary, 1.0, 0.5)
    cm = np.einsum("f,fq,fqi,fs,fqr->frsi", c, ctx.wf, ctx.phi_minus, f.normals, J)
    np.add.at(out, f.minus, cm / ctx.geo.det[f.minus, None, None, None])
    inner = ctx.interior
    cp = np.einsum("fq,fqi,fs,fqr->frsi", 0.5 * ctx.wf[inner], ctx.phi_plus[inner], f.normals[inner], J[inner])
    np.add.at(out, f.plus[inner], cp / ctx.geo.det[f.plus[inner], None, None, None])
    return Field(ctx.tensor_space, out.ravel())


def lifting(ctx: DGContext, w) -> Field:
    """R_h^k w for a broken vector Field or a (continuous) callable."""
    return lift_jumps(ctx, jumps(ctx, w))


def _broken_gradient_at_quadrature(ctx: DGContext, w) -> np.ndarray:
    if isinstance(w, Field):
        return w.gradients_at(ctx.rule.ref_points)
    fun, grad = w
    return np.asarray(grad(ctx.xq), dtype=float)


def _as_evaluator(w):
    return w if isinstance(w, Field) else w[0]


def dg_gradient(ctx: DGContext, w) -> np.ndarray:
    """G_h^k w at volume quadrature points, (m, nq, 2, 2).

    ``w`` is a broken vector Field or a pair (value, gradient) of callables."""
    R = lifting(ctx, _as_evaluator(w))
    Rq = ctx.at_quadrature(R.local()).reshape(ctx.mesh.n_cells, -1, 2, 2)
    return _broken_gradient_at_quadrature(ctx, w) - Rq


def sym_dg_gradient(ctx: DGContext, w) -> np.ndarray:
    return sym(dg_gradient(ctx, w))


def dg_divergence(ctx: DGContext, w) -> np.ndarray:
    return np.trace(sym_dg_gradient(ctx, w), axis1=-2, axis2=-1)


def _lp_volume(ctx: DGContext, A, p) -> float:
    A = np.asarray(A)
    mag = np.sqrt((A * A).reshape(A.shape[:2] + (-1,)).sum(axis=-1))
    return float(np.sum(ctx.wq * mag**p) ** (1.0 / p))


def jump_seminorm(ctx: DGContext, w, p: float, h: float | None = None, boundary_data=None) -> float:
    """h^{1/p} || h^{-1} [[w (x) n]] ||_{p, Gamma_h}."""
    h = ctx.h if h is None else h
    J = jumps(ctx, _as_evaluator(w), boundary_data)
    mag = np.linalg.norm(J, axis=-1) / h
    return float(h ** (1.0 / p) * np.sum(ctx.wf * mag**p) ** (1.0 / p))


def dg_norm(ctx: DGContext, w, p: float, h: float | None = None, boundary_data=None) -> float:
    gh = _broken_gradient_at_quadrature(ctx, w)
    return _lp_volume(ctx, gh, p) + jump_seminorm(ctx, w, p, h, boundary_data)


def sym_dg_norm(ctx: DGContext, w, p: float, h: float | None = None) -> float:
    gh = sym(_broken_gradient_at_quadrature(ctx, w))
    return _lp_volume(ctx, gh, p) + jump_seminorm(ctx, w, p, h)


def lifted_norm(ctx: DGContext, w, p: float, h: float | None = None, symmetric: bool = False) -> float:
    """||G w||_p + jump part (or with D w when ``symmetric``)."""
    G = sym_dg_gradient(ctx, w) if symmetric else dg_gradient(ctx, w)
    return _lp_volume(ctx, G, p) + jump_seminorm(ctx, w, p, h)


def lifting_norm(ctx: DGContext, w, p: float) -> float:
    R = lifting(ctx, _as_evaluator(w))
    Rq = ctx.at_quadrature(R.local()).reshape(ctx.mesh.n_cells, -1, 2, 2)
    return _lp_volume(ctx, Rq, p)


def jump_modular(ctx: DGContext, w, shift, p: float, delta: float, h: float | None = None,
                 boundary_data=None) -> float:
    """h * sum_faces int_face phi_{a_face}(h^{-1} |[[w (x) n]]|) ds.

    ``shift`` holds one non-negative value per face (or a scalar)."""
    h = ctx.h if h is None else h
    a = np.broadcast_to(np.asarray(shift, dtype=float), (ctx.faces.n_faces,))
    if np.any(a < 0):
        raise ValueError("face shifts must be non-negative")
    if isinstance(w, np.ndarray) and w.shape == ctx.xf.shape:
        J = w
    else:
        J = jumps(ctx, _as_evaluator(w), boundary_data)
    t = np.linalg.norm(J, axis=-1) / h
    vals = phi_eval_shifts(NFunctionParams(p, delta), a[:, None], t)
    return float(h * np.sum(ctx.wf * vals))
