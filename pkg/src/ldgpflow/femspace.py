"""Broken and continuous polynomial spaces on triangles.

Broken spaces use a basis orthonormal on the reference triangle
{(0,0), (1,0), (0,1)}; on a physical cell K the local mass matrix is
therefore ``2|K| I`` and local L2 projections reduce to weighted sums.
The continuous scalar space is nodal Lagrange of degree 1 or 2.
"""
from __future__ import annotations

import enum
from dataclasses import dataclass
from functools import lru_cache
from math import factorial

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .mesh import Mesh, build_faces

MAX_TRIANGLE_DEGREE = 30
MAX_FACE_DEGREE = 61


class Kind(enum.Enum):
    BrokenScalar = "scalar"
    BrokenVector = "vector"
    BrokenTensor = "tensor"
    ContinuousScalar = "continuous"

    @property
    def ncomp(self) -> int:
        return {"scalar": 1, "vector": 2, "tensor": 4, "continuous": 1}[self.value]

    @property
    def value_shape(self) -> tuple:
        return {"scalar": (), "vector": (2,), "tensor": (2, 2), "continuous": ()}[self.value]


# --------------------------------------------------------------------------
# quadrature

@dataclass(frozen=True)
class QuadratureRule:
    points: np.ndarray  # barycentric (n, 3) for triangles, (n,) in [0, 1] for faces
    weights: np.ndarray
    degree: int

    @property
    def ref_points(self) -> np.ndarray:
        """Cartesian reference coordinates (n, 2) of a triangle rule."""
        return self.points[:, 1:]


@lru_cache(maxsize=None)
def quadrature_rule(degree: int) -> QuadratureRule:
    """Symmetric Xiao-Gimbutas rule on the reference triangle (weights sum 1/2)."""
    import modepy

    if degree < 0 or degree > MAX_TRIANGLE_DEGREE:
        raise ValueError(f"unsupported triangle quadrature degree {degree}")
    q = modepy.XiaoGimbutasSimplexQuadrature(max(degree, 1), 2)
    rs = (np.asarray(q.nodes).T + 1.0) / 2.0
    bary = np.column_stack([1.0 - rs.sum(axis=1), rs])
    w = np.asarray(q.weights) / 4.0
    w *= 0.5 / w.sum()
    return QuadratureRule(bary, w, int(q.exact_to))


@lru_cache(maxsize=None)
def face_quadrature_rule(degree: int) -> QuadratureRule:
    """Gauss-Legendre on [0, 1] (weights sum 1)."""
    if degree < 0 or degree > MAX_FACE_DEGREE:
        raise ValueError(f"unsupported face quadrature degree {degree}")
    n = degree // 2 + 1
    x, w = np.polynomial.legendre.leggauss(n)
    return QuadratureRule(0.5 * (x + 1.0), 0.5 * w, 2 * n - 1)


# --------------------------------------------------------------------------
# reference bases

def _exponents(k: int):
    return [(d - j, j) for d in range(k + 1) for j in range(d + 1)]


@lru_cache(maxsize=None)
def _orthonormal_coefficients(k: int) -> np.ndarray:
    ex = _exponents(k)
    n = len(ex)
    gram = np.empty((n, n))
    for a, (i1, j1) in enumerate(ex):
        for b, (i2, j2) in enumerate(ex):
            i, j = i1 + i2, j1 + j2
            gram[a, b] = factorial(i) * factorial(j) / factorial(i + j + 2)
    L = np.linalg.cholesky(gram)
    return np.linalg.inv(L)  # phi = C @ monomials


def n_local(k: int) -> int:
    return (k + 1) * (k + 2) // 2


def orthonormal_basis(k: int, xi: np.ndarray):
    """Values (n, nb) and reference gradients (n, nb, 2) at points ``xi`` (n, 2)."""
    xi = np.atleast_2d(xi)
    ex = _exponents(k)
    C = _orthonormal_coefficients(k)
    x, y = xi[:, 0], xi[:, 1]
    mono = np.stack([x**i * y**j for i, j in ex], axis=1)
    dx = np.stack([i * x ** max(i - 1, 0) * y**j if i else 0 * x for i, j in ex], axis=1)
    dy = np.stack([j * x**i * y ** max(j - 1, 0) if j else 0 * x for i, j in ex], axis=1)
    val = mono @ C.T
    grad = np.stack([dx @ C.T, dy @ C.T], axis=-1)
    return val, grad


def lagrange_basis(k: int, xi: np.ndarray):
    """Nodal P1/P2 basis; local node order: vertices, then edge midpoints
    opposite vertex 0, 1, 2."""
    xi = np.atleast_2d(xi)
    l1, l2 = xi[:, 0], xi[:, 1]
    l0 = 1.0 - l1 - l2
    lam = np.stack([l0, l1, l2], axis=1)
    dlam = np.array([[-1.0, -1.0], [1.0, 0.0], [0.0, 1.0]])
    if k == 1:
        return lam, np.broadcast_to(dlam, (len(xi), 3, 2)).copy()
    if k == 2:
        val = np.empty((len(xi), 6))
        grad = np.empty((len(xi), 6, 2))
        for i in range(3):
            val[:, i] = lam[:, i] * (2 * lam[:, i] - 1)
            grad[:, i] = (4 * lam[:, i] - 1)[:, None] * dlam[i]
        for e, (a, b) in enumerate([(1, 2), (2, 0), (0, 1)]):
            val[:, 3 + e] = 4 * lam[:, a] * lam[:, b]
            grad[:, 3 + e] = 4 * (lam[:, a, None] * dlam[b] + lam[:, b, None] * dlam[a])
        return val, grad
    raise ValueError(f"continuous degree {k} not supported (1 or 2)")


# --------------------------------------------------------------------------
# geometry

@dataclass(frozen=True)
class CellGeometry:
    origin: np.ndarray  # (m, 2)
    jac: np.ndarray  # (m, 2, 2), columns x1 - x0, x2 - x0
    jac_inv: np.ndarray
    det: np.ndarray  # 2 |K|

    @classmethod
    def of(cls, mesh: Mesh) -> "CellGeometry":
        x = mesh.corners()
        jac = np.stack([x[:, 1] - x[:, 0], x[:, 2] - x[:, 0]], axis=2)
        det = jac[:, 0, 0] * jac[:, 1, 1] - jac[:, 0, 1] * jac[:, 1, 0]
        return cls(x[:, 0], jac, np.linalg.inv(jac), det)

    def to_physical(self, xi: np.ndarray, cells=None) -> np.ndarray:
        """Map reference points (n, 2) to physical points (m, n, 2)."""
        o = self.origin if cells is None else self.origin[cells]
        J = self.jac if cells is None else self.jac[cells]
        return o[:, None, :] + np.einsum("kab,qb->kqa", J, np.atleast_2d(xi))

    def to_reference(self, x: np.ndarray, cells) -> np.ndarray:
        """Inverse map of points x (..., n, 2) located in ``cells`` (...)."""
        return np.einsum("...ab,...qb->...qa", self.jac_inv[cells], x - self.origin[cells][..., None, :])

    def physical_gradients(self, ref_grad: np.ndarray, cells=None) -> np.ndarray:
        """(n, nb, 2) reference gradients -> (m, n, nb, 2) physical gradients."""
        Ji = self.jac_inv if cells is None else self.jac_inv[cells]
        return np.einsum("kba,qib->kqia", Ji, ref_grad)


# --------------------------------------------------------------------------
# spaces and fields

@dataclass(frozen=True, eq=False)
class Space:
    mesh: Mesh
    kind: Kind
    degree: int
    dof_count: int
    cell_dofs: np.ndarray  # (m, ndof_local)

    @property
    def n_basis(self) -> int:
        """Scalar basis functions per cell."""
        return n_local(self.degree)

    @property
    def is_broken(self) -> bool:
        return self.kind is not Kind.ContinuousScalar

    def basis(self, xi):
        if self.is_broken:
            return orthonormal_basis(self.degree, xi)
        return lagrange_basis(self.degree, xi)

    @property
    def geometry(self) -> CellGeometry:
        return _geometry(self.mesh)


@lru_cache(maxsize=8)
def _geometry(mesh: Mesh) -> CellGeometry:
    return CellGeometry.of(mesh)


def make_space(mesh: Mesh, kind: Kind | str, k: int) -> Space:
    kind = Kind(kind) if not isinstance(kind, Kind) else kind
    if k < 0:
        raise ValueError("polynomial degree must be >= 0")
    m = mesh.n_cells
    if kind is Kind.ContinuousScalar:
        if k == 1:
            return Space(mesh, kind, 1, mesh.n_vertices, mesh.cells.copy())
        if k == 2:
            faces = build_faces(mesh)
            dofs = np.hstack([mesh.cells, mesh.n_vertices + faces.cell_faces])
            return Space(mesh, kind, 2, mesh.n_vertices + faces.n_faces, dofs)
        raise ValueError(f"ContinuousScalar requires degree 1 or 2, got {k}")
    nloc = kind.ncomp * n_local(k)
    dofs = np.arange(m * nloc).reshape(m, nloc)
    return Space(mesh, kind, k, m * nloc, dofs)


@dataclass
class Field:
    space: Space
    coeffs: np.ndarray

    def __post_init__(self):
        self.coeffs = np.asarray(self.coeffs, dtype=float)
        if self.coeffs.shape != (self.space.dof_count,):
            raise ValueError(
                f"coefficient length {self.coeffs.shape} != dof count {self.space.dof_count}"
            )

    def local(self) -> np.ndarray:
        """Per-cell coefficients, (m, ncomp, nb) for broken spaces, (m, nloc) otherwise."""
        s = self.space
        if s.is_broken:
            return self.coeffs.reshape(s.mesh.n_cells, s.kind.ncomp, s.n_basis)
        return self.coeffs[s.cell_dofs]

    def values_at(self, xi: np.ndarray, cells=None) -> np.ndarray:
        """Values at reference points in every cell: (m, n, *value_shape)."""
        s = self.space
        val, _ = s.basis(np.atleast_2d(xi))
        loc = self.local() if cells is None else self.local()[cells]
        if s.is_broken:
            out = np.einsum("kci,qi->kqc", loc, val)
            return out.reshape(out.shape[:2] + s.kind.value_shape)
        return np.einsum("ki,qi->kq", loc, val)

    def gradients_at(self, xi: np.ndarray, cells=None) -> np.ndarray:
        """Physical gradients (m, n, *value_shape, 2)."""
        s = self.space
        _, g = s.basis(np.atleast_2d(xi))
        pg = s.geometry.physical_gradients(g, cells)
        loc = self.local() if cells is None else self.local()[cells]
        if s.is_broken:
            out = np.einsum("kci,kqid->kqcd", loc, pg)
            return out.reshape(out.shape[:2] + s.kind.value_shape + (2,))
        return np.einsum("ki,kqid->kqd", loc, pg)


def zero_field(space: Space) -> Field:
    return Field(space, np.zeros(space.dof_count))


def evaluate(field: Field, cell: int, reference_point) -> np.ndarray:
    if not 0 <= cell < field.space.mesh.n_cells:
        raise IndexError(f"cell {cell} out of range")
    return field.values_at(np.asarray(reference_point, float)[None, :], cells=[cell])[0, 0]


def evaluate_gradient(field: Field, cell: int, reference_point) -> np.ndarray:
    if not 0 <= cell < field.space.mesh.n_cells:
        raise IndexError(f"cell {cell} out of range")
    return field.gradients_at(np.asarray(reference_point, float)[None, :], cells=[cell])[0, 0]


def default_quadrature_degree(k: int) -> int:
    return 2 * k + 6


def cell_quadrature(space_or_mesh, degree: int):
    """Physical points (m, nq, 2) and weights (m, nq) of a cell rule."""
    mesh = space_or_mesh.mesh if isinstance(space_or_mesh, Space) else space_or_mesh
    rule = quadrature_rule(degree)
    geo = _geometry(mesh)
    x = geo.to_physical(rule.ref_points)
    w = geo.det[:, None] * rule.weights[None, :]
    return x, w, rule


def integrate(mesh: Mesh, f, degree: int = 8) -> float:
    """Quadrature of a callable f(x) over the whole mesh."""
    x, w, _ = cell_quadrature(mesh, degree)
    vals = np.asarray(f(x))
    return float(np.einsum("kq,kq...->...", w, vals).sum())


def _sample(f, space: Space, x, rule):
    if isinstance(f, Field):
        if f.space.mesh is not space.mesh:
            raise ValueError("field lives on a different mesh")
        return f.values_at(rule.ref_points)
    return np.asarray(f(x), dtype=float)


def l2_project(f, target: Space, degree: int | None = None) -> Field:
    """L2 projection of a callable ``f(x)`` (x of shape (..., 2)) or a Field."""
    if degree is None:
        degree = default_quadrature_degree(target.degree)
    if isinstance(f, Field):
        degree = max(degree, f.space.degree + target.degree)
    x, w, rule = cell_quadrature(target, degree)
    vals = _sample(f, target, x, rule)
    m = target.mesh.n_cells
    vals = vals.reshape(m, len(rule.weights), -1)
    if vals.shape[2] != target.kind.ncomp:
        raise ValueError("value shape does not match the target space")
    phi, _ = target.basis(rule.ref_points)
    if target.is_broken:
        c = np.einsum("q,kqc,qi->kci", rule.weights, vals, phi)
        return Field(target, c.ravel())
    M = mass_matrix(target)
    rhs = np.zeros(target.dof_count)
    np.add.at(rhs, target.cell_dofs, np.einsum("kq,kq,qi->ki", w, vals[..., 0], phi))
    return Field(target, spla.spsolve(M.tocsc(), rhs))


def interpolate(f, target: Space) -> Field:
    """Nodal interpolation into the continuous scalar space."""
    if target.is_broken:
        raise ValueError("nodal interpolation is only defined for ContinuousScalar")
    nodes = _lagrange_nodes(target)
    return Field(target, np.asarray(f(nodes), dtype=float).reshape(-1))


def _lagrange_nodes(space: Space) -> np.ndarray:
    mesh = space.mesh
    if space.degree == 1:
        return mesh.vertices.copy()
    faces = build_faces(mesh)
    mids = 0.5 * (mesh.vertices[faces.vertices[:, 0]] + mesh.vertices[faces.vertices[:, 1]])
    return np.vstack([mesh.vertices, mids])


def mass_matrix(space: Space, degree: int | None = None) -> sp.csr_matrix:
    if degree is None:
        degree = 2 * space.degree
    rule = quadrature_rule(degree)
    geo = space.geometry
    phi, _ = space.basis(rule.ref_points)
    loc = np.einsum("q,qi,qj->ij", rule.weights, phi, phi)
    if space.is_broken:
        # orthonormal reference basis: local mass is 2|K| I
        return sp.diags(np.repeat(geo.det, space.kind.ncomp * space.n_basis), format="csr")
    return _assemble_blocks(space, loc, geo.det)


def _assemble_blocks(space: Space, loc, det):
    d = space.cell_dofs
    n = d.shape[1]
    if space.is_broken and space.kind.ncomp > 1:
        loc = np.kron(np.eye(space.kind.ncomp), loc)
    vals = det[:, None, None] * loc[None]
    rows = np.repeat(d, n, axis=1).ravel()
    cols = np.tile(d, (1, n)).ravel()
    return sp.csr_matrix((vals.ravel(), (rows, cols)), shape=(space.dof_count,) * 2)


def inner(f: Field, g: Field, degree: int | None = None) -> float:
    """L2 inner product of two fields on the same mesh."""
    if degree is None:
        degree = f.space.degree + g.space.degree
    rule = quadrature_rule(degree)
    fv = f.values_at(rule.ref_points)
    gv = g.values_at(rule.ref_points)
    w = f.space.geometry.det[:, None] * rule.weights[None]
    prod = (fv * gv).reshape(w.shape + (-1,)).sum(axis=-1)
    return float(np.sum(w * prod))


def prolongate(field: Field, fine: Space) -> Field:
    """Transfer a field on a coarse mesh to its red refinement."""
    parent = fine.mesh.parent
    if parent is None:
        raise ValueError("target mesh carries no parent map")
    coarse_geo = field.space.geometry
    if fine.is_broken:
        rule = quadrature_rule(2 * fine.degree)
        x = fine.geometry.to_physical(rule.ref_points)
        xi = coarse_geo.to_reference(x, parent)
        vals = _values_in_cells(field, parent, xi)
        phi, _ = fine.basis(rule.ref_points)
        m = fine.mesh.n_cells
        vals = vals.reshape(m, len(rule.weights), -1)
        c = np.einsum("q,kqc,qi->kci", rule.weights, vals, phi)
        return Field(fine, c.ravel())
    nodes = _lagrange_nodes(fine)
    # locate each fine node in one child cell and evaluate through its parent
    owner = np.empty(len(nodes), dtype=np.int64)
    owner[fine.cell_dofs.ravel()] = np.repeat(np.arange(fine.mesh.n_cells), fine.cell_dofs.shape[1])
    xi = coarse_geo.to_reference(nodes[:, None, :], parent[owner])
    vals = _values_in_cells(field, parent[owner], xi)
    return Field(fine, vals.reshape(-1))


def _values_in_cells(field: Field, cells, xi):
    """Evaluate at per-cell reference points xi (len(cells), n, 2)."""
    s = field.space
    n = xi.shape[1]
    val, _ = s.basis(xi.reshape(-1, 2))
    val = val.reshape(len(cells), n, -1)
    loc = field.local()[cells]
    if s.is_broken:
        return np.einsum("kci,kqi->kqc", loc, val)
    return np.einsum("ki,kqi->kq", loc, val)
