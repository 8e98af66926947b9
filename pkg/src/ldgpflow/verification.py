"""Manufactured singular solutions, error quantities and convergence studies.

The test family on (-1, 1)^2 is

    v(x) = |x|^beta (x2, -x1),    q(x) = |x|^gamma - <|.|^gamma>,
    beta = 2 (rho - 1) / p,        gamma = rho - 2 / p',

with data G = S(Dv) - q I, bfg = [grad v] v (zero for p-Stokes), g = 0 and
boundary extension v* = v. The natural-distance errors are expected to
decay like h^(rho p' / 2).
"""
from __future__ import annotations

import logging
import math
import warnings
from dataclasses import dataclass, field, replace
from functools import lru_cache

import numpy as np
from scipy import integrate as sci_integrate

from .constitutive import StressLaw, conjugate_transform_Fstar, natural_transform_F, stress, sym
from .dgops import dg_norm, jump_modular
from .femspace import Field, interpolate, l2_project, prolongate
from .mesh import generate_square_mesh, red_refine
from .nfunctions import NFunctionParams
from .system import (
    AuxiliaryFields,
    DiscreteSolution,
    DiscreteSpaces,
    Model,
    NewtonOptions,
    NonConvergenceError,
    ProblemData,
    assemble_residual,
    newton_solve,
    reconstruct_auxiliary,
)

log = logging.getLogger(__name__)


@lru_cache(maxsize=64)
def radial_power_mean(gamma: float) -> float:
    """Mean of |x|^gamma over (-1, 1)^2, gamma > -2.

    By symmetry the square splits into 8 triangles 0 <= theta <= pi/4,
    r <= 1 / cos(theta), leaving a smooth 1D integral."""
    if not gamma > -2.0:
        raise ValueError("|x|^gamma is not integrable for gamma <= -2")
    val, err = sci_integrate.quad(
        lambda t: math.cos(t) ** (-(gamma + 2.0)), 0.0, math.pi / 4, epsabs=0.0, epsrel=1e-13
    )
    return 8.0 * val / (gamma + 2.0) / 4.0


@dataclass(frozen=True)
class ManufacturedSolution:
    p: float
    delta: float
    rho: float

    @property
    def beta(self) -> float:
        return 2.0 * (self.rho - 1.0) / self.p

    @property
    def gamma(self) -> float:
        pc = self.p / (self.p - 1.0)
        return self.rho - 2.0 / pc

    @property
    def pressure_offset(self) -> float:
        return radial_power_mean(self.gamma)

    @property
    def rate(self) -> float:
        """Expected convergence rate rho p' / 2."""
        return self.rho * self.p / (self.p - 1.0) / 2.0

    @property
    def law(self) -> StressLaw:
        return StressLaw(NFunctionParams(self.p, self.delta))

    def velocity(self, x):
        x = np.asarray(x, dtype=float)
        r = np.hypot(x[..., 0], x[..., 1])
        with np.errstate(divide="ignore", invalid="ignore"):
            s = np.where(r > 0, r ** self.beta, 0.0) if self.beta < 0 else r ** self.beta
        return np.stack([s * x[..., 1], -s * x[..., 0]], axis=-1)

    def gradient(self, x):
        """(grad v)_{rs} = d v_r / d x_s."""
        x = np.asarray(x, dtype=float)
        x1, x2 = x[..., 0], x[..., 1]
        r2 = x1 * x1 + x2 * x2
        b = self.beta
        rb = r2 ** (0.5 * b)
        c = b * r2 ** (0.5 * b - 1.0)
        out = np.empty(x.shape[:-1] + (2, 2))
        out[..., 0, 0] = c * x1 * x2
        out[..., 0, 1] = c * x2 * x2 + rb
        out[..., 1, 0] = -c * x1 * x1 - rb
        out[..., 1, 1] = -c * x1 * x2
        return out

    def sym_gradient(self, x):
        return sym(self.gradient(x))

    def pressure(self, x):
        x = np.asarray(x, dtype=float)
        r = np.hypot(x[..., 0], x[..., 1])
        return r**self.gamma - self.pressure_offset

    def problem_data(self, alpha: float = 2.5, model: Model | str = Model.PNavierStokes,
                     penalty_shift: str = "none") -> ProblemData:
        law = self.law
        model = Model(model)

        def tensor_force(x):
            return stress(law, self.gradient(x)) - self.pressure(x)[..., None, None] * np.eye(2)

        def body_force(x):
            return np.einsum("...rs,...s->...r", self.gradient(x), self.velocity(x))

        kwargs = {}
        if model is Model.PNavierStokes:
            kwargs["body_force"] = body_force
        return ProblemData(
            law.params,
            alpha,
            model,
            tensor_force=tensor_force,
            boundary_value=self.velocity,
            boundary_gradient=self.gradient,
            penalty_shift=penalty_shift,
            **kwargs,
        )


def make_manufactured(p: float, delta: float, rho: float, alpha: float = 2.5,
                      model: Model | str = Model.PNavierStokes, penalty_shift: str = "none"):
    if not 0.0 < rho <= 1.0:
        raise ValueError(f"rho must lie in (0, 1], got {rho}")
    model = Model(model)
    if model is Model.PNavierStokes and p <= 2.0:
        warnings.warn("p <= 2 with the convective model is outside the convergence theory", stacklevel=2)
    exact = ManufacturedSolution(p, delta, rho)
    return exact, exact.problem_data(alpha, model, penalty_shift)


@dataclass
class ErrorRecord:
    level: int
    h: float
    ndof_v: int
    ndof_q: int
    e_L: float
    e_S: float
    e_jump: float
    e_q: float
    newton_iterations: int = 0

    def __post_init__(self):
        for name in ("e_L", "e_S", "e_jump", "e_q"):
            val = getattr(self, name)
            if not (np.isfinite(val) and val >= 0):
                raise ValueError(f"{name} must be finite and non-negative, got {val}")


ERROR_NAMES = ("e_L", "e_S", "e_jump", "e_q")


def eoc(errors, hs) -> list[float]:
    """EOC_i = log(e_i / e_{i-1}) / log(h_i / h_{i-1}), i >= 1."""
    e = np.asarray(errors, dtype=float)
    h = np.asarray(hs, dtype=float)
    with np.errstate(divide="ignore", invalid="ignore"):
        return list(np.log(e[1:] / e[:-1]) / np.log(h[1:] / h[:-1]))


def compute_errors(solution: DiscreteSolution, aux: AuxiliaryFields, exact: ManufacturedSolution,
                   spaces: DiscreteSpaces, level: int = 0, newton_iterations: int = 0,
                   shift_mode: str = "average") -> ErrorRecord:
    ctx = spaces.ctx
    law = exact.law
    m = spaces.mesh.n_cells
    W = ctx.wq
    pts = ctx.rule.ref_points
    Dv = exact.sym_gradient(ctx.xq)

    Lq = aux.L.values_at(pts)
    dF = natural_transform_F(law, sym(Lq)) - natural_transform_F(law, Dv)
    e_L = math.sqrt(np.sum(W * np.einsum("kqij,kqij->kq", dF, dF)))

    Sq = aux.S.values_at(pts)
    dFs = conjugate_transform_Fstar(law, Sq) - conjugate_transform_Fstar(law, stress(law, Dv))
    e_S = math.sqrt(np.sum(W * np.einsum("kqij,kqij->kq", dFs, dFs)))

    if shift_mode == "average":
        shift = ctx.face_shift(aux.L.local())
    else:
        shift = 0.0
    mod = jump_modular(ctx, solution.velocity, shift, exact.p, exact.delta, boundary_data=exact.velocity)
    e_jump = math.sqrt(mod)

    pc = exact.p / (exact.p - 1.0)
    dq = solution.pressure.values_at(pts) - exact.pressure(ctx.xq)
    e_q = math.sqrt(np.sum(W * np.abs(dq) ** pc))
    return ErrorRecord(level, spaces.mesh.h, spaces.nv, spaces.nq, e_L, e_S, e_jump, e_q, newton_iterations)


@dataclass
class StudyConfig:
    p: float
    rho: float
    delta: float = 1e-4
    alpha: float = 2.5
    k: int = 1
    model: Model = Model.PNavierStokes
    n0: int = 4
    levels: int = 5
    quad_degree: int | None = None
    warm_start: bool = True
    penalty_shift: str = "none"
    mesh_pattern: str = "uniform"
    newton: NewtonOptions = field(default_factory=NewtonOptions)

    def __post_init__(self):
        self.model = Model(self.model)
        if self.levels < 2:
            raise ValueError("a convergence study needs levels >= 2")
        if not self.p > 1:
            raise ValueError("p must be > 1")


@dataclass
class LevelResult:
    record: ErrorRecord
    solution: DiscreteSolution
    aux: AuxiliaryFields
    spaces: DiscreteSpaces
    residuals: list[float]
    divergence_residual: float
    pressure_mean: float
    velocity_norm: float = math.nan
    pressure_norm: float = math.nan


@dataclass
class StudyReport:
    config: StudyConfig
    records: list[ErrorRecord]
    eocs: dict[str, list[float]]
    reference_rate: float
    levels: list[LevelResult] = field(default_factory=list, repr=False)

    def eoc_at(self, name: str, level: int) -> float:
        return self.eocs[name][level - 1]


class StudyError(RuntimeError):
    def __init__(self, level: int, cause: Exception):
        super().__init__(f"level {level}: {cause}")
        self.level = level
        self.cause = cause


def initial_guess(spaces: DiscreteSpaces, data: ProblemData) -> DiscreteSolution:
    """Solution of the linear Stokes problem (p = 2, delta = 0) with the same data."""
    linear = replace(data, params=NFunctionParams(2.0, 0.0), model=Model.PStokes, penalty_shift="none")
    return newton_solve(spaces.zero_solution(), linear, spaces).solution


def solve_level(spaces: DiscreteSpaces, data: ProblemData, start: DiscreteSolution | None,
                opts: NewtonOptions):
    if start is None:
        start = initial_guess(spaces, data)
    return newton_solve(start, data, spaces, opts)


def run_convergence_study(config: StudyConfig, keep_levels: bool = False) -> StudyReport:
    exact, data = make_manufactured(config.p, config.delta, config.rho, config.alpha,
                                    config.model, config.penalty_shift)
    mesh = generate_square_mesh(config.n0, config.mesh_pattern)
    records: list[ErrorRecord] = []
    results: list[LevelResult] = []
    prev: DiscreteSolution | None = None
    for level in range(config.levels + 1):
        if level > 0:
            mesh = red_refine(mesh)
        spaces = DiscreteSpaces(mesh, config.k, config.quad_degree)
        start = None
        if config.warm_start and prev is not None:
            start = DiscreteSolution(prolongate(prev.velocity, spaces.velocity),
                                     prolongate(prev.pressure, spaces.pressure), prev.multiplier)
        try:
            res = solve_level(spaces, data, start, config.newton)
        except NonConvergenceError as exc:
            raise StudyError(level, exc) from exc
        sol = res.solution
        aux = reconstruct_auxiliary(sol, data, spaces)
        rec = compute_errors(sol, aux, exact, spaces, level, res.iterations)
        log.info("level %d: h=%.4g e_L=%.4e e_S=%.4e e_jump=%.4e e_q=%.4e newton=%d (%.1fs)",
                 level, rec.h, rec.e_L, rec.e_S, rec.e_jump, rec.e_q, rec.newton_iterations, res.seconds)
        records.append(rec)
        div_res, mean = solver_invariants(sol, data, spaces)
        vnorm, qnorm = stability_norms(sol, spaces, data)
        kept = (sol, aux, spaces) if keep_levels else (None, None, None)
        results.append(LevelResult(rec, *kept, res.residuals, div_res, mean, vnorm, qnorm))
        prev = sol
    hs = [r.h for r in records]
    eocs = {name: eoc([getattr(r, name) for r in records], hs) for name in ERROR_NAMES}
    return StudyReport(config, records, eocs, exact.rate, results)


def solver_invariants(solution: DiscreteSolution, data: ProblemData, spaces: DiscreteSpaces):
    """Max-norm of the divergence rows and the pressure mean at a solution."""
    from .system import _data_cache

    dc = _data_cache(spaces, data)
    div = spaces.divergence_matrix @ solution.velocity.coeffs - dc.div_rhs
    mean = float(spaces.mean_weights @ solution.pressure.coeffs) / spaces.area
    return float(np.max(np.abs(div))), mean


def stability_norms(solution: DiscreteSolution, spaces: DiscreteSpaces, data: ProblemData):
    """(||v_h||_{grad,p,h}, ||q_h||_{p'}).

    Boundary jumps are taken against the Dirichlet data, so the velocity
    norm is that of v_h - v* on the boundary faces; measured against zero
    it would grow like h^(1/p - 1) for nonzero boundary values.
    """
    ctx = spaces.ctx
    p = data.params.p
    vnorm = dg_norm(ctx, solution.velocity, p, boundary_data=data.boundary_value)
    pc = p / (p - 1.0)
    qq = solution.pressure.local() @ spaces.psi.T  # (m, nq)
    qnorm = float(np.sum(ctx.wq * np.abs(qq) ** pc) ** (1.0 / pc))
    return vnorm, qnorm


@dataclass
class PatchTestResult:
    residual_at_interpolant: float
    velocity_error: float
    pressure_error: float
    newton_iterations: int
    seconds: float

    @property
    def solution_error(self) -> float:
        return max(self.velocity_error, self.pressure_error)


def patch_test(n0: int = 4, levels: int = 1, k: int = 1, alpha: float = 2.5) -> PatchTestResult:
    """Linear Stokes (p = 2, delta = 0) with an affine solenoidal velocity and a linear pressure.

    Both lie in the discrete spaces, so the scheme must reproduce them."""
    import time

    t0 = time.perf_counter()
    A = np.array([[0.5, 1.0], [-2.0, -0.5]])  # trace free
    b = np.array([1.0, 2.0])
    c = np.array([1.0, 2.0])  # q = c.x has zero mean on the symmetric square

    def velocity(x):
        return b + x @ A.T

    def pressure(x):
        return x @ c

    law = StressLaw(NFunctionParams(2.0, 0.0))

    def tensor_force(x):
        return stress(law, np.broadcast_to(A, x.shape[:-1] + (2, 2))) - pressure(x)[..., None, None] * np.eye(2)

    data = ProblemData(law.params, alpha, Model.PStokes, tensor_force=tensor_force, boundary_value=velocity)
    mesh = generate_square_mesh(n0)
    for _ in range(levels):
        mesh = red_refine(mesh)
    spaces = DiscreteSpaces(mesh, k)
    exact = DiscreteSolution(l2_project(velocity, spaces.velocity), interpolate(pressure, spaces.pressure), 0.0)
    res0 = float(np.max(np.abs(assemble_residual(exact, data, spaces))))
    out = newton_solve(spaces.zero_solution(), data, spaces)
    sol = out.solution
    ev = float(np.max(np.abs(sol.velocity.coeffs - exact.velocity.coeffs)))
    eq = float(np.max(np.abs(sol.pressure.coeffs - exact.pressure.coeffs)))
    return PatchTestResult(res0, ev, eq, out.iterations, time.perf_counter() - t0)
