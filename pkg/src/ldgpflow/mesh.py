"""Conforming triangulations of the square (-1, 1)^2.

Meshes are immutable containers of numpy arrays. Faces are extracted once
with :func:`build_faces`; interior faces store the normal pointing from the
lower-indexed ("minus") cell to the higher-indexed ("plus") cell, boundary
faces store the outward normal and ``plus == -1``.
"""
from __future__ import annotations

import os
import tempfile
from dataclasses import dataclass, field

import numpy as np

BOUNDARY = -1


class MeshError(ValueError):
    pass


@dataclass(frozen=True, eq=False)
class Mesh:
    vertices: np.ndarray
    cells: np.ndarray
    level: int = 0
    parent: np.ndarray | None = field(default=None, repr=False, compare=False)

    def __post_init__(self):
        v = np.ascontiguousarray(self.vertices, dtype=float)
        c = np.ascontiguousarray(self.cells, dtype=np.int64)
        if v.ndim != 2 or v.shape[1] != 2:
            raise MeshError("vertices must have shape (n, 2)")
        if c.ndim != 2 or c.shape[1] != 3:
            raise MeshError("cells must have shape (m, 3)")
        if c.size and (c.min() < 0 or c.max() >= len(v)):
            raise MeshError("cell references a vertex that does not exist")
        v.setflags(write=False)
        c.setflags(write=False)
        object.__setattr__(self, "vertices", v)
        object.__setattr__(self, "cells", c)
        if np.any(self.signed_areas() <= 0):
            bad = int(np.argmin(self.signed_areas()))
            raise MeshError(f"cell {bad} has non-positive signed area")

    @property
    def n_cells(self) -> int:
        return len(self.cells)

    @property
    def n_vertices(self) -> int:
        return len(self.vertices)

    def corners(self) -> np.ndarray:
        """Cell vertex coordinates, shape (m, 3, 2)."""
        return self.vertices[self.cells]

    def signed_areas(self) -> np.ndarray:
        x = self.vertices[self.cells]
        e1 = x[:, 1] - x[:, 0]
        e2 = x[:, 2] - x[:, 0]
        return 0.5 * (e1[:, 0] * e2[:, 1] - e1[:, 1] * e2[:, 0])

    @property
    def h(self) -> float:
        return float(cell_diameters(self).max())


@dataclass(frozen=True, eq=False)
class FaceSet:
    """Edge topology. ``local_minus``/``local_plus`` give the local edge index
    (edge j is opposite vertex j) inside the adjacent cells."""

    vertices: np.ndarray  # (F, 2) vertex indices, sorted ascending
    minus: np.ndarray
    plus: np.ndarray
    local_minus: np.ndarray
    local_plus: np.ndarray
    normals: np.ndarray
    lengths: np.ndarray
    cell_faces: np.ndarray  # (m, 3) face index of local edge j

    @property
    def n_faces(self) -> int:
        return len(self.minus)

    @property
    def is_boundary(self) -> np.ndarray:
        return self.plus == BOUNDARY

    @property
    def n_interior(self) -> int:
        return int(np.sum(~self.is_boundary))

    @property
    def n_boundary(self) -> int:
        return int(np.sum(self.is_boundary))


MESH_PATTERNS = ("uniform", "alternating")


def generate_square_mesh(n0: int = 4, pattern: str = "uniform") -> Mesh:
    """n0 x n0 squares on (-1, 1)^2, each cut by one diagonal.

    ``uniform`` cuts every square along the same (south-west to north-east)
    diagonal. ``alternating`` flips the diagonal with the parity of the
    square, so that for even n0 all diagonals adjacent to a grid vertex with
    even indices meet there. Either way the origin is a vertex for even n0.
    """
    if not isinstance(n0, (int, np.integer)) or n0 < 2 or n0 % 2:
        raise MeshError(f"n0 must be an even integer >= 2, got {n0!r}")
    if pattern not in MESH_PATTERNS:
        raise MeshError(f"unknown mesh pattern {pattern!r}; expected one of {MESH_PATTERNS}")
    xs = np.linspace(-1.0, 1.0, n0 + 1)
    X, Y = np.meshgrid(xs, xs, indexing="xy")
    vertices = np.column_stack([X.ravel(), Y.ravel()])

    def vid(i, j):
        return j * (n0 + 1) + i

    cells = []
    for j in range(n0):
        for i in range(n0):
            a, b = vid(i, j), vid(i + 1, j)
            c, d = vid(i + 1, j + 1), vid(i, j + 1)
            if pattern == "uniform" or (i + j) % 2 == 0:
                cells += [(a, b, c), (a, c, d)]
            else:
                cells += [(a, b, d), (b, c, d)]
    return Mesh(vertices, np.array(cells), level=0)


def red_refine(mesh: Mesh) -> Mesh:
    """Split every triangle into four congruent children via edge midpoints."""
    cells = mesh.cells
    m, nv = len(cells), mesh.n_vertices
    # edges opposite vertex j: (1,2), (2,0), (0,1)
    e = np.stack(
        [cells[:, [1, 2]], cells[:, [2, 0]], cells[:, [0, 1]]], axis=1
    ).reshape(-1, 2)
    key = np.sort(e, axis=1)
    uniq, inv = np.unique(key, axis=0, return_inverse=True)
    inv = inv.reshape(m, 3)
    mids = 0.5 * (mesh.vertices[uniq[:, 0]] + mesh.vertices[uniq[:, 1]])
    vertices = np.vstack([mesh.vertices, mids])
    m0, m1, m2 = (nv + inv[:, j] for j in range(3))
    v0, v1, v2 = cells[:, 0], cells[:, 1], cells[:, 2]
    children = np.stack(
        [
            np.column_stack([v0, m2, m1]),
            np.column_stack([m2, v1, m0]),
            np.column_stack([m1, m0, v2]),
            np.column_stack([m0, m1, m2]),
        ],
        axis=1,
    ).reshape(-1, 3)
    parent = np.repeat(np.arange(m), 4)
    return Mesh(vertices, children, level=mesh.level + 1, parent=parent)


def build_faces(mesh: Mesh) -> FaceSet:
    cells = mesh.cells
    m = len(cells)
    local_pairs = np.array([[1, 2], [2, 0], [0, 1]])
    e = cells[:, local_pairs].reshape(-1, 2)
    key = np.sort(e, axis=1)
    owner = np.repeat(np.arange(m), 3)
    local = np.tile(np.arange(3), m)
    order = np.lexsort((owner, key[:, 1], key[:, 0]))
    key, owner, local = key[order], owner[order], local[order]
    uniq, start, counts = np.unique(key, axis=0, return_index=True, return_counts=True)
    if np.any(counts > 2):
        bad = uniq[np.argmax(counts > 2)]
        raise MeshError(f"edge {tuple(bad)} is shared by more than two cells")
    minus = owner[start]
    local_minus = local[start]
    interior = counts == 2
    plus = np.full(len(uniq), BOUNDARY)
    local_plus = np.full(len(uniq), -1)
    plus[interior] = owner[start[interior] + 1]
    local_plus[interior] = local[start[interior] + 1]

    xa = mesh.vertices[uniq[:, 0]]
    xb = mesh.vertices[uniq[:, 1]]
    t = xb - xa
    lengths = np.hypot(t[:, 0], t[:, 1])
    normals = np.column_stack([t[:, 1], -t[:, 0]]) / lengths[:, None]
    # orient outward from the minus cell
    opposite = mesh.vertices[cells[minus, local_minus]]
    flip = np.einsum("ij,ij->i", normals, xa - opposite) < 0
    normals[flip] *= -1

    cell_faces = np.empty((m, 3), dtype=np.int64)
    cell_faces[minus, local_minus] = np.arange(len(uniq))
    cell_faces[plus[interior], local_plus[interior]] = np.nonzero(interior)[0]
    _check_conforming(mesh, uniq, interior)
    return FaceSet(uniq, minus, plus, local_minus, local_plus, normals, lengths, cell_faces)


def _check_conforming(mesh: Mesh, edges: np.ndarray, interior: np.ndarray):
    # a hanging node shows up as a vertex lying strictly inside a boundary-marked edge
    bnd = edges[~interior]
    xa, xb = mesh.vertices[bnd[:, 0]], mesh.vertices[bnd[:, 1]]
    lo = np.minimum(xa, xb) - 1e-14
    hi = np.maximum(xa, xb) + 1e-14
    on_hull = (
        (np.abs(np.abs(xa[:, 0]) - 1) < 1e-12) & (np.abs(xa[:, 0] - xb[:, 0]) < 1e-12)
    ) | ((np.abs(np.abs(xa[:, 1]) - 1) < 1e-12) & (np.abs(xa[:, 1] - xb[:, 1]) < 1e-12))
    if np.all(on_hull):
        return
    for k in np.nonzero(~on_hull)[0]:
        pts = mesh.vertices
        inside = np.all((pts >= lo[k]) & (pts <= hi[k]), axis=1)
        d = xb[k] - xa[k]
        cross = np.abs(d[0] * (pts[:, 1] - xa[k, 1]) - d[1] * (pts[:, 0] - xa[k, 0]))
        hits = np.nonzero(inside & (cross < 1e-12))[0]
        hits = hits[(hits != bnd[k, 0]) & (hits != bnd[k, 1])]
        if len(hits):
            raise MeshError(f"non-conforming edge {tuple(bnd[k])}: hanging vertex {hits[0]}")


def cell_diameters(mesh: Mesh) -> np.ndarray:
    x = mesh.corners()
    lens = np.stack(
        [np.linalg.norm(x[:, 1] - x[:, 2], axis=1),
         np.linalg.norm(x[:, 2] - x[:, 0], axis=1),
         np.linalg.norm(x[:, 0] - x[:, 1], axis=1)],
        axis=1,
    )
    return lens.max(axis=1)


def mesh_metrics(mesh: Mesh) -> dict:
    x = mesh.corners()
    lens = np.stack(
        [np.linalg.norm(x[:, 1] - x[:, 2], axis=1),
         np.linalg.norm(x[:, 2] - x[:, 0], axis=1),
         np.linalg.norm(x[:, 0] - x[:, 1], axis=1)],
        axis=1,
    )
    area = mesh.signed_areas()
    if np.any(area <= 1e-300):
        raise MeshError("degenerate cell")
    h_K = lens.max(axis=1)
    rho_K = area / (0.5 * lens.sum(axis=1))  # inradius
    return {
        "h": float(h_K.max()),
        "h_K": h_K,
        "rho_K": rho_K,
        "chunkiness": float(np.max(h_K / rho_K)),
    }


MESH_HEADER = "ldgmesh v1"


def write_mesh(mesh: Mesh, path) -> None:
    lines = [MESH_HEADER, str(mesh.n_vertices)]
    lines += [f"{x!r} {y!r}" for x, y in mesh.vertices.tolist()]
    lines.append(str(mesh.n_cells))
    lines += [f"{i} {j} {k}" for i, j, k in mesh.cells.tolist()]
    _atomic_write_text(path, "\n".join(lines) + "\n")


def read_mesh(path) -> Mesh:
    with open(path) as fh:
        rows = [ln.strip() for ln in fh if ln.strip()]
    if not rows or rows[0] != MESH_HEADER:
        raise MeshError(f"{path}: missing '{MESH_HEADER}' header")
    try:
        nv = int(rows[1])
        verts = np.array([[float(s) for s in r.split()] for r in rows[2 : 2 + nv]])
        nc = int(rows[2 + nv])
        cells = np.array([[int(s) for s in r.split()] for r in rows[3 + nv : 3 + nv + nc]])
    except (IndexError, ValueError) as exc:
        raise MeshError(f"{path}: malformed mesh file ({exc})") from None
    if len(verts) != nv or len(cells) != nc or len(rows) != 3 + nv + nc:
        raise MeshError(f"{path}: counts do not match content")
    mesh = Mesh(verts.reshape(nv, 2), cells.reshape(nc, 3))
    build_faces(mesh)
    return mesh


def _atomic_write_text(path, text: str) -> None:
    path = os.fspath(path)
    d = os.path.dirname(os.path.abspath(path))
    fd, tmp = tempfile.mkstemp(dir=d, prefix=".tmp-")
    try:
        with os.fdopen(fd, "w") as fh:
            fh.write(text)
        os.replace(tmp, path)
    except BaseException:
        if os.path.exists(tmp):
            os.unlink(tmp)
        raise
