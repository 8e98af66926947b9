"""Assembly and Newton solution of the discrete LDG system.

Unknowns are the broken P_k velocity v_h, the continuous P_k pressure q_h
and one Lagrange multiplier for the zero-mean pressure condition. With
L = G_h v + R_h v* the momentum residual tested with z in V_h^k is

    (S(L_sym) - 1/2 v (x) v - G, G_h z) + (z, grad q) - (bfg, z)
        + 1/2 ((L - g I) v, z) + alpha <S_a(h^-1 [[(v - v*) (x) n]]), [[z (x) n]]>

(the convective groups are dropped for the p-Stokes model). The divergence
row is (Div_h v - g + tr R_h v*, psi) and is assembled in the equivalent
form -(v, grad psi) - (g, psi) + <v*.n, psi>_boundary, exact for continuous psi.
"""
from __future__ import annotations

import enum
import logging
import os
import time
from dataclasses import dataclass, field
from typing import Callable

import numpy as np
import scipy.sparse as sp
import scipy.sparse.linalg as spla

from .constitutive import (
    StressLaw,
    shifted_stress,
    stress,
    stress_shift_derivative,
    stress_tangent,
    sym,
)
from .dgops import DGContext
from .femspace import Field, Kind, Space, l2_project, lagrange_basis, make_space
from .mesh import Mesh
from .nfunctions import NFunctionParams

log = logging.getLogger(__name__)

Evaluator = Callable[[np.ndarray], np.ndarray]


class Model(enum.Enum):
    PStokes = "PStokes"
    PNavierStokes = "PNavierStokes"


class AssemblyError(RuntimeError):
    pass


class SolverError(RuntimeError):
    pass


class NonConvergenceError(SolverError):
    def __init__(self, message: str, history: list[float]):
        super().__init__(message)
        self.history = history


def _zero_vector(x):
    return np.zeros(x.shape[:-1] + (2,))


def _zero_tensor(x):
    return np.zeros(x.shape[:-1] + (2, 2))


def _zero_scalar(x):
    return np.zeros(x.shape[:-1])


@dataclass(frozen=True, eq=False)
class ProblemData:
    params: NFunctionParams
    alpha: float = 2.5
    model: Model = Model.PNavierStokes
    body_force: Evaluator = _zero_vector
    tensor_force: Evaluator = _zero_tensor
    divergence: Evaluator = _zero_scalar
    boundary_value: Evaluator = _zero_vector
    boundary_gradient: Evaluator | None = None
    # "average": penalty shifted by the face average of |cell mean of L_sym|
    # "none":    plain S_delta in the penalty
    penalty_shift: str = "none"

    def __post_init__(self):
        if not self.alpha > 0:
            raise ValueError(f"alpha must be > 0, got {self.alpha}")
        object.__setattr__(self, "model", Model(self.model))
        if self.penalty_shift not in ("average", "none"):
            raise ValueError(f"unknown penalty_shift {self.penalty_shift!r}")

    @property
    def law(self) -> StressLaw:
        return StressLaw(self.params)

    @property
    def convective(self) -> bool:
        return self.model is Model.PNavierStokes


@dataclass
class DiscreteSolution:
    velocity: Field
    pressure: Field
    multiplier: float = 0.0

    @property
    def vector(self) -> np.ndarray:
        return np.concatenate([self.velocity.coeffs, self.pressure.coeffs, [self.multiplier]])


@dataclass
class AuxiliaryFields:
    L: Field
    S: Field
    K: Field


class DiscreteSpaces:
    """Velocity/pressure spaces on one mesh with cached quadrature data."""

    def __init__(self, mesh: Mesh, k: int = 1, quad_degree: int | None = None):
        self.mesh = mesh
        self.k = k
        self.ctx = DGContext(mesh, k, quad_degree, quad_degree)
        self.velocity = self.ctx.vector_space
        self.pressure = make_space(mesh, Kind.ContinuousScalar, k)
        self.nv = self.velocity.dof_count
        self.nq = self.pressure.dof_count
        self.size = self.nv + self.nq + 1
        self._linear_cache: dict = {}

        ctx = self.ctx
        psi, dpsi = lagrange_basis(k, ctx.rule.ref_points)
        self.psi = psi
        self.grad_psi = ctx.geo.physical_gradients(dpsi)  # (m, nq, nl, 2)
        f = ctx.faces
        xi = ctx.geo.to_reference(ctx.xf, f.minus)
        val, _ = lagrange_basis(k, xi.reshape(-1, 2))
        self.psi_face = val.reshape(xi.shape[0], xi.shape[1], -1)  # minus-side traces

    def split(self, x: np.ndarray):
        return x[: self.nv], x[self.nv : self.nv + self.nq], float(x[-1])

    def solution(self, x: np.ndarray) -> DiscreteSolution:
        v, q, lam = self.split(x)
        return DiscreteSolution(Field(self.velocity, v.copy()), Field(self.pressure, q.copy()), lam)

    def zero_solution(self) -> DiscreteSolution:
        return self.solution(np.zeros(self.size))

    # ------------------------------------------------------------------
    # state-independent pieces

    @property
    def divergence_matrix(self) -> sp.csr_matrix:
        """B with B_ij = -(phi_j, grad psi_i) = (Div_h phi_j, psi_i) for continuous psi."""
        if "B" not in self._linear_cache:
            ctx = self.ctx
            loc = -np.einsum("kq,kqar,qi->kari", ctx.wq, self.grad_psi, ctx.phi)
            m, nl = loc.shape[:2]
            loc = loc.reshape(m, nl, -1)
            rows = np.repeat(self.pressure.cell_dofs, loc.shape[2], axis=1).ravel()
            cols = np.tile(self.velocity.cell_dofs, (1, nl)).ravel()
            self._linear_cache["B"] = sp.csr_matrix((loc.ravel(), (rows, cols)), shape=(self.nq, self.nv))
        return self._linear_cache["B"]

    @property
    def mean_weights(self) -> np.ndarray:
        """Integrals of the pressure basis functions."""
        if "mean" not in self._linear_cache:
            loc = np.einsum("kq,qi->ki", self.ctx.wq, self.psi)
            mw = np.zeros(self.nq)
            np.add.at(mw, self.pressure.cell_dofs, loc)
            self._linear_cache["mean"] = mw
        return self._linear_cache["mean"]

    @property
    def area(self) -> float:
        return float(self.ctx.wq.sum())


class _DataCache:
    """Data evaluated at quadrature points for one (spaces, data) pair."""

    def __init__(self, spaces: DiscreteSpaces, data: ProblemData):
        ctx = spaces.ctx
        self.G = np.asarray(data.tensor_force(ctx.xq), dtype=float)
        self.bfg = np.asarray(data.body_force(ctx.xq), dtype=float)
        self.g = np.asarray(data.divergence(ctx.xq), dtype=float)
        vstar = np.asarray(data.boundary_value(ctx.xf), dtype=float)
        self.vstar_face = np.where(ctx.boundary[:, None, None], vstar, 0.0)
        self.lift_vstar = ctx.boundary_lift(self.vstar_face)
        # Div row right-hand side: (g, psi) - <v*.n, psi>_boundary
        f = ctx.faces
        rhs = np.zeros(spaces.nq)
        np.add.at(rhs, spaces.pressure.cell_dofs, np.einsum("kq,kq,qi->ki", ctx.wq, self.g, spaces.psi))
        vn = np.einsum("fqr,fr->fq", self.vstar_face, f.normals)
        bl = np.einsum("fq,fq,fqi->fi", ctx.wf, vn, spaces.psi_face)
        np.add.at(rhs, spaces.pressure.cell_dofs[f.minus], -bl)
        self.div_rhs = rhs
        for name in ("G", "bfg", "g", "vstar_face"):
            arr = getattr(self, name)
            if not np.all(np.isfinite(arr)):
                bad = np.argwhere(~np.isfinite(arr))[0]
                raise AssemblyError(f"non-finite problem data {name!r} at index {tuple(bad)}")


def _data_cache(spaces: DiscreteSpaces, data: ProblemData) -> _DataCache:
    key = ("data", id(data))
    hit = spaces._linear_cache.get(key)
    if hit is None or hit[0] is not data:
        hit = (data, _DataCache(spaces, data))
        spaces._linear_cache[key] = hit
    return hit[1]


def _check_finite(arr, term: str, cell_axis_len: int | None = None):
    if np.all(np.isfinite(arr)):
        return
    bad = np.argwhere(~np.isfinite(arr))[0]
    where = "cell" if cell_axis_len is None else "face"
    raise AssemblyError(f"non-finite value in term {term!r} at {where} {bad[0]}")


def _state_vector(state, spaces: DiscreteSpaces) -> np.ndarray:
    if isinstance(state, DiscreteSolution):
        if state.velocity.space.mesh is not spaces.mesh or state.pressure.space.mesh is not spaces.mesh:
            raise AssemblyError("solution fields live on a different mesh than the spaces")
        return state.vector
    x = np.asarray(state, dtype=float)
    if x.shape != (spaces.size,):
        raise AssemblyError(f"state has length {x.shape}, expected {spaces.size}")
    return x


def _evaluate(spaces: DiscreteSpaces, data: ProblemData, x: np.ndarray, jacobian: bool):
    ctx = spaces.ctx
    dc = _data_cache(spaces, data)
    law = data.law
    m, nb = spaces.mesh.n_cells, ctx.nb
    nv, nq = spaces.nv, spaces.nq
    v, q, lam = spaces.split(x)
    Gp = ctx.gradient_patch  # (m, 4nb, 8nb)
    pd = ctx.patch_dofs
    W = ctx.wq
    phi = ctx.phi

    Lc = np.einsum("kab,kb->ka", Gp, v[pd]).reshape(m, 4, nb) + dc.lift_vstar
    L = np.einsum("kci,qi->kqc", Lc, phi).reshape(m, -1, 2, 2)
    vq = np.einsum("kci,qi->kqc", v.reshape(m, 2, nb), phi)
    S = stress(law, L)
    _check_finite(S, "viscous stress")
    T = S - dc.G
    if data.convective:
        T = T - 0.5 * vq[..., :, None] * vq[..., None, :]
        fvec = -dc.bfg + 0.5 * (np.einsum("kqrs,kqs->kqr", L, vq) - dc.g[..., None] * vq)
    else:
        fvec = -dc.bfg
    tens_mom = np.einsum("kq,kqc,qi->kci", W, T.reshape(m, -1, 4), phi).reshape(m, 4 * nb)
    vec_mom = np.einsum("kq,kqr,qi->kri", W, fvec, phi).reshape(m, 2 * nb)
    cell_res = np.einsum("kab,ka->kb", Gp, tens_mom)
    cell_res[:, : 2 * nb] += vec_mom
    _check_finite(cell_res, "cell residual")

    Rv = np.zeros(nv)
    np.add.at(Rv, pd, cell_res)

    # penalty on faces
    Jm = ctx.jump_matrix  # (F, nqf, 2, 4nb)
    fd = ctx.face_dofs
    f = ctx.faces
    h = ctx.h
    J = np.einsum("fqra,fa->fqr", Jm, v[fd]) - dc.vstar_face
    A = J[..., :, None] * f.normals[:, None, None, :] / h
    if data.penalty_shift == "average":
        shift = ctx.face_shift(Lc)
    else:
        shift = np.zeros(f.n_faces)
    a_q = np.broadcast_to(shift[:, None], J.shape[:2])
    P = shifted_stress(law, a_q, A)
    Pn = np.einsum("fqrs,fs->fqr", P, f.normals)
    face_res = data.alpha * np.einsum("fq,fqra,fqr->fa", ctx.wf, Jm, Pn)
    _check_finite(face_res, "penalty", f.n_faces)
    np.add.at(Rv, fd, face_res)

    B = spaces.divergence_matrix
    mw = spaces.mean_weights
    Rv -= B.T @ q
    Rq = B @ v - dc.div_rhs + lam * mw
    Rl = mw @ q
    res = np.concatenate([Rv, Rq, [Rl]])
    if not jacobian:
        return res, None

    rows, cols, vals = [], [], []
    # viscous + convective tensor part, tested with G_h z
    Tan = stress_tangent(law, L)  # (m, nq, 4, 4)
    Kt = np.einsum("kq,kqab,qi,qj->kaibj", W, Tan, phi, phi).reshape(m, 4 * nb, 4 * nb)
    cell_K = np.einsum("kab,kbc,kcd->kad", Gp.transpose(0, 2, 1), Kt, Gp)
    if data.convective:
        eye = np.eye(2)
        # d(v (x) v)_{rs} / dv_t = delta_rt v_s + v_r delta_st
        dvv = eye[None, None, :, None, :] * vq[:, :, None, :, None] + vq[:, :, :, None, None] * eye[None, None, None, :, :]
        Kc = -0.5 * np.einsum("kq,kqrst,qi,qj->krsitj", W, dvv, phi, phi).reshape(m, 4 * nb, 2 * nb)
        cell_K[:, :, : 2 * nb] += np.einsum("kab,kbc->kac", Gp.transpose(0, 2, 1), Kc)
        # 1/2 (dL v, z): own test rows, full patch columns
        Kf1 = 0.5 * np.einsum("kq,qi,qj,rt,kqs->kritsj", W, phi, phi, eye, vq).reshape(m, 2 * nb, 4 * nb)
        cell_K[:, : 2 * nb, :] += np.einsum("kab,kbc->kac", Kf1, Gp)
        # 1/2 ((L - g I) dv, z)
        Lg = L - dc.g[..., None, None] * eye
        Kf2 = 0.5 * np.einsum("kq,qi,qj,kqrs->krisj", W, phi, phi, Lg).reshape(m, 2 * nb, 2 * nb)
        cell_K[:, : 2 * nb, : 2 * nb] += Kf2
    _check_finite(cell_K, "cell jacobian")
    n8 = 8 * nb
    rows.append(np.repeat(pd, n8, axis=1).ravel())
    cols.append(np.tile(pd, (1, n8)).ravel())
    vals.append(cell_K.ravel())

    # penalty tangent
    TanF = stress_tangent(law, A, a_q)  # (F, nqf, 4, 4)
    n = f.normals
    M = np.einsum("fs,fqrstu,fu->fqrt", n, TanF.reshape(TanF.shape[:2] + (2, 2, 2, 2)), n) / h
    face_K = data.alpha * np.einsum("fq,fqra,fqrt,fqtb->fab", ctx.wf, Jm, M, Jm)
    n4 = 4 * nb
    rows.append(np.repeat(fd, n4, axis=1).ravel())
    cols.append(np.tile(fd, (1, n4)).ravel())
    vals.append(face_K.ravel())

    if data.penalty_shift == "average":
        dP = stress_shift_derivative(law, a_q, A)
        u = data.alpha * np.einsum("fq,fqra,fqrs,fs->fa", ctx.wf, Jm, dP, n)
        mean = ctx.cell_means_sym(Lc).reshape(m, 4)
        mag = np.linalg.norm(mean, axis=1)
        unit = np.where(mag[:, None] > 0, mean / np.where(mag > 0, mag, 1.0)[:, None], 0.0)
        gK = np.sqrt(2.0) * np.einsum("kc,kcb->kb", unit, Gp.reshape(m, 4, nb, n8)[:, :, 0, :])
        for side, cells in ((0, f.minus), (1, ctx.plus_or_minus)):
            weight = np.where(ctx.boundary, 1.0 if side == 0 else 0.0, 0.5)
            blk = weight[:, None, None] * u[:, :, None] * gK[cells][:, None, :]
            rows.append(np.repeat(fd, n8, axis=1).ravel())
            cols.append(np.tile(pd[cells], (1, n4)).ravel())
            vals.append(blk.ravel())

    Bc = B.tocoo()
    rows += [Bc.col, nv + Bc.row, np.full(nq, nv + nq), nv + np.arange(nq)]
    cols += [nv + Bc.row, Bc.col, nv + np.arange(nq), np.full(nq, nv + nq)]
    vals += [-Bc.data, Bc.data, mw, mw]
    size = spaces.size
    K = sp.csr_matrix(
        (np.concatenate(vals), (np.concatenate(rows), np.concatenate(cols))), shape=(size, size)
    )
    return res, K


def assemble_residual(state, data: ProblemData, spaces: DiscreteSpaces) -> np.ndarray:
    res, _ = _evaluate(spaces, data, _state_vector(state, spaces), False)
    return res


def assemble_jacobian(state, data: ProblemData, spaces: DiscreteSpaces) -> sp.csr_matrix:
    _, K = _evaluate(spaces, data, _state_vector(state, spaces), True)
    return K


def assemble(state, data: ProblemData, spaces: DiscreteSpaces):
    """Residual and Jacobian in one pass."""
    return _evaluate(spaces, data, _state_vector(state, spaces), True)


def _locate_mkl_runtime() -> str | None:
    """Path of the MKL runtime shipped by the ``mkl`` wheel, if any."""
    try:
        from importlib.metadata import PackageNotFoundError, files
    except ImportError:  # pragma: no cover
        return None
    try:
        entries = files("mkl") or []
    except PackageNotFoundError:
        return None
    for entry in entries:
        if "libmkl_rt" in entry.name or entry.name.startswith("mkl_rt"):
            return str(entry.locate())
    return None


_PARDISO = None


def _pardiso_module():
    """Import pypardiso lazily; returns None when MKL is unavailable."""
    global _PARDISO
    if _PARDISO is None:
        if "PYPARDISO_MKL_RT" not in os.environ:
            path = _locate_mkl_runtime()
            if path:
                os.environ["PYPARDISO_MKL_RT"] = path
        try:
            import pypardiso  # noqa: F401

            _PARDISO = pypardiso
        except (ImportError, OSError):
            _PARDISO = False
    return _PARDISO or None


# iparm (1-based): user settings, METIS ordering, no internal refinement,
# pivot perturbation 1e-8 (regularizes the zero pressure block); weighted
# matching is left off, it produced poor factors on these saddle systems
_PARDISO_IPARM = {1: 1, 2: 2, 8: 0, 10: 8, 11: 0, 13: 0}


class _Factorization:
    """Approximate inverse of a sparse matrix by direct factorization."""

    def __init__(self, A: sp.csr_matrix, backend: str):
        self.A = A
        self.backend = backend
        self.perturbed = 0
        if backend == "pardiso":
            pp = _pardiso_module()
            self._solver = pp.PyPardisoSolver(mtype=11)
            for i, v in _PARDISO_IPARM.items():
                self._solver.set_iparm(i, v)
            try:
                self._solver.factorize(A)
            except pp.PyPardisoError as exc:
                raise SolverError(f"PARDISO factorization failed: {exc}") from exc
            self.perturbed = int(self._solver.get_iparm(14))
        else:
            try:
                self._lu = spla.splu(A.tocsc(), permc_spec="COLAMD")
            except RuntimeError as exc:
                raise SolverError(f"sparse LU failed: {exc}") from exc
            udiag = np.abs(self._lu.U.diagonal())
            k = int(np.argmin(udiag))
            if udiag[k] == 0.0 or udiag[k] < 1e-15 * udiag.max():
                raise SolverError(
                    f"numerically singular matrix: pivot {k} = {udiag[k]:.3e} (max {udiag.max():.3e})"
                )

    def solve(self, b: np.ndarray) -> np.ndarray:
        b = np.ascontiguousarray(b, dtype=float)
        if self.backend == "pardiso":
            return self._solver.solve(self.A, b)
        return self._lu.solve(b)

    def free(self):
        if self.backend == "pardiso":
            self._solver.free_memory(everything=True)


def available_backends() -> list[str]:
    return (["pardiso"] if _pardiso_module() else []) + ["superlu"]


def linear_solve(matrix, rhs, rtol: float = 1e-11, backend: str | None = None) -> np.ndarray:
    """Solve A x = b to relative residual ``rtol``.

    A direct factorization (PARDISO when MKL is present, SuperLU otherwise)
    is applied and, if its answer misses the contract, used as the
    preconditioner of restarted GMRES."""
    A = sp.csr_matrix(matrix, dtype=float)
    A.sort_indices()
    b = np.asarray(rhs, dtype=float)
    if A.shape[0] != A.shape[1] or A.shape[0] != b.shape[0]:
        raise SolverError(f"shape mismatch: matrix {A.shape}, rhs {b.shape}")
    backend = backend or available_backends()[0]
    if backend not in available_backends():
        raise SolverError(f"linear solver backend {backend!r} is not available")
    bnorm = np.linalg.norm(b)
    if bnorm == 0.0:
        return np.zeros_like(b)
    fact = _Factorization(A, backend)
    try:
        x = fact.solve(b)
        r = np.linalg.norm(b - A @ x)
        if np.isfinite(r) and r <= rtol * bnorm:
            return x
        M = spla.LinearOperator(A.shape, matvec=fact.solve, dtype=float)
        x0 = x if np.all(np.isfinite(x)) else None
        x, _ = spla.gmres(A, b, x0=x0, M=M, rtol=0.1 * rtol, atol=0.0, restart=60, maxiter=10)
        r = np.linalg.norm(b - A @ x)
    finally:
        fact.free()
    if not np.isfinite(r) or r > rtol * bnorm:
        raise SolverError(
            f"relative residual {r / bnorm:.3e} above {rtol:.1e} "
            f"({backend}, {fact.perturbed} perturbed pivots); matrix numerically singular?"
        )
    return x


@dataclass
class NewtonOptions:
    tau_abs: float = 1e-8
    tau_rel: float = 1e-10
    max_iter: int = 50
    line_search: bool = False
    debug_jacobian: bool = False


@dataclass
class NewtonResult:
    solution: DiscreteSolution
    residuals: list[float] = field(default_factory=list)
    seconds: float = 0.0

    @property
    def iterations(self) -> int:
        return len(self.residuals) - 1


def _fd_check(spaces, data, x, K, rng=None, tol=1e-6):
    """Compare K d with central differences of the residual.

    Near |L_sym| = 0 the stress has large higher derivatives (delta^(p-3)),
    so the truncation error at a fixed step can exceed ``tol`` even for an
    exact Jacobian; shrinking steps are tried before declaring a mismatch."""
    rng = rng or np.random.default_rng(0)
    d = rng.standard_normal(x.size)
    jd = K @ d
    errs = []
    for eps in (1e-6, 1e-7, 1e-8):
        fp = assemble_residual(x + eps * d, data, spaces)
        fm = assemble_residual(x - eps * d, data, spaces)
        err = np.linalg.norm((fp - fm) / (2 * eps) - jd) / max(np.linalg.norm(jd), 1e-300)
        if err <= tol:
            return err
        errs.append(err)
    raise AssemblyError("Jacobian/finite-difference mismatch " + ", ".join(f"{e:.2e}" for e in errs))


def newton_solve(initial, data: ProblemData, spaces: DiscreteSpaces,
                 opts: NewtonOptions | None = None) -> NewtonResult:
    opts = opts or NewtonOptions()
    t0 = time.perf_counter()
    x = _state_vector(initial, spaces).copy()
    res, K = assemble(x, data, spaces)
    norms = [float(np.linalg.norm(res))]
    tol = max(opts.tau_abs, opts.tau_rel * norms[0])
    log.debug("newton 0: |F| = %.3e (tol %.1e)", norms[0], tol)
    while norms[-1] > tol:
        if len(norms) > opts.max_iter:
            raise NonConvergenceError(
                f"Newton did not converge in {opts.max_iter} iterations (|F| = {norms[-1]:.3e})", norms
            )
        if opts.debug_jacobian:
            _fd_check(spaces, data, x, K)
        dx = linear_solve(K, -res)
        step = 1.0
        while True:
            trial = x + step * dx
            res_t, K_t = assemble(trial, data, spaces)
            nt = float(np.linalg.norm(res_t))
            # Armijo on |F|: accept sufficient decrease or give up halving
            if not opts.line_search or nt <= (1 - 1e-4 * step) * norms[-1] or step < 1e-4:
                break
            step *= 0.5
        if not np.isfinite(nt):
            raise NonConvergenceError("Newton produced a non-finite residual", norms + [nt])
        x, res, K = trial, res_t, K_t
        norms.append(nt)
        log.debug("newton %d: |F| = %.3e (step %.3g)", len(norms) - 1, nt, step)
    return NewtonResult(spaces.solution(x), norms, time.perf_counter() - t0)


def reconstruct_auxiliary(solution: DiscreteSolution, data: ProblemData,
                          spaces: DiscreteSpaces) -> AuxiliaryFields:
    ctx = spaces.ctx
    dc = _data_cache(spaces, data)
    v = solution.velocity.coeffs
    Lc = ctx.lifted_gradient(v) + dc.lift_vstar
    tspace = ctx.tensor_space
    Lf = Field(tspace, Lc.ravel())
    m = spaces.mesh.n_cells
    law = data.law
    Lq = ctx.at_quadrature(Lc).reshape(m, -1, 2, 2)
    vq = solution.velocity.values_at(ctx.rule.ref_points)
    Sq = stress(law, sym(Lq))
    Kq = vq[..., :, None] * vq[..., None, :]
    S = _project_samples(ctx, tspace, Sq)
    K = _project_samples(ctx, tspace, Kq)
    return AuxiliaryFields(Lf, S, K)


def _project_samples(ctx: DGContext, space: Space, vals: np.ndarray) -> Field:
    """Broken L2 projection of values sampled at the context's volume points."""
    m = ctx.mesh.n_cells
    c = np.einsum("q,kqc,qi->kci", ctx.rule.weights, vals.reshape(m, len(ctx.rule.weights), -1), ctx.phi)
    return Field(space, c.ravel())
