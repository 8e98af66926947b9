"""Executable property suites for the operators and the constitutive law.

Each check returns a :class:`CheckResult`; ``run_operator_suite`` and
``run_constitutive_suite`` bundle them for the ``check`` subcommand and the
acceptance tests.
"""
from __future__ import annotations

import time
from dataclasses import dataclass

import numpy as np

from .constitutive import StressLaw, ddot, stress, stress_jacobian
from .dgops import (
    DGContext,
    dg_divergence,
    dg_gradient,
    dg_norm,
    jumps,
    lifted_norm,
    lifting,
    sym_dg_norm,
)
from .femspace import (
    Field,
    Kind,
    cell_quadrature,
    default_quadrature_degree,
    inner,
    l2_project,
    make_space,
)
from .mesh import generate_square_mesh, red_refine
from .nfunctions import NFunctionParams, conjugate_eval, conjugate_prime, phi_eval, phi_prime


@dataclass
class CheckResult:
    name: str
    passed: bool
    value: float
    threshold: float
    detail: str = ""

    def line(self) -> str:
        status = "PASS" if self.passed else "FAIL"
        extra = f" ({self.detail})" if self.detail else ""
        return f"{status} {self.name}: {self.value:.3e} vs {self.threshold:.1e}{extra}"


def _meshes(n0: int, levels: int):
    mesh = generate_square_mesh(n0)
    out = [mesh]
    for _ in range(levels - 1):
        mesh = red_refine(mesh)
        out.append(mesh)
    return out


def _face_pairing(ctx: DGContext, w: Field, X: Field) -> float:
    """< [[w (x) n]], {X} > by face quadrature, computed without the lifting."""
    f = ctx.faces
    Xl = X.local()
    nq = len(ctx.face_rule.weights)
    Xm = np.einsum("fci,fqi->fqc", Xl[f.minus], ctx.phi_minus).reshape(-1, nq, 2, 2)
    Xp = np.einsum("fci,fqi->fqc", Xl[ctx.plus_or_minus], ctx.phi_plus).reshape(-1, nq, 2, 2)
    avg = np.where(ctx.boundary[:, None, None, None], Xm, 0.5 * (Xm + Xp))
    J = jumps(ctx, w)
    return float(np.einsum("fq,fqr,fs,fqrs->", ctx.wf, J, f.normals, avg))


def check_lifting_adjoint(rng, n_fields: int = 100, k: int = 1, n0: int = 2, levels: int = 2,
                          tol: float = 1e-11) -> CheckResult:
    worst = 0.0
    for mesh in _meshes(n0, levels):
        ctx = DGContext(mesh, k)
        for _ in range(n_fields):
            w = Field(ctx.vector_space, rng.standard_normal(ctx.vector_space.dof_count))
            X = Field(ctx.tensor_space, rng.standard_normal(ctx.tensor_space.dof_count))
            lhs = inner(lifting(ctx, w), X)
            rhs = _face_pairing(ctx, w, X)
            worst = max(worst, abs(lhs - rhs) / max(1.0, abs(rhs)))
    return CheckResult("lifting adjointness", worst <= tol, worst, tol, f"{n_fields} fields x {levels} levels")


def _random_conforming_zero_trace(rng, ctx: DGContext) -> list[Field]:
    """Two continuous P1 components vanishing on the boundary."""
    mesh = ctx.mesh
    cont = make_space(mesh, Kind.ContinuousScalar, 1)
    on_bdry = np.zeros(mesh.n_vertices, dtype=bool)
    on_bdry[ctx.faces.vertices[ctx.boundary].ravel()] = True
    comps = []
    for _ in range(2):
        c = rng.standard_normal(mesh.n_vertices)
        c[on_bdry] = 0.0
        comps.append(Field(cont, c))
    return comps


def check_conforming_gradient(rng, k: int = 1, n0: int = 4, tol: float = 1e-12) -> CheckResult:
    mesh = red_refine(generate_square_mesh(n0))
    ctx = DGContext(mesh, k)
    comps = _random_conforming_zero_trace(rng, ctx)
    # broken P_k copy of the continuous field (exact, since P1 is in P_k)
    pts = ctx.rule.ref_points
    vals = np.stack([c.values_at(pts) for c in comps], axis=-1)
    coeffs = np.einsum("q,kqc,qi->kci", ctx.rule.weights, vals, ctx.phi)
    w = Field(ctx.vector_space, coeffs.ravel())
    G = dg_gradient(ctx, w)
    grad = np.stack([c.gradients_at(pts) for c in comps], axis=-2)
    err = float(np.max(np.abs(G - grad)) / max(1.0, np.max(np.abs(grad))))
    return CheckResult("DG gradient of conforming zero-trace field", err <= tol, err, tol)


def check_divergence_by_parts(rng, k: int = 1, n0: int = 4, tol: float = 1e-12) -> CheckResult:
    mesh = red_refine(generate_square_mesh(n0))
    ctx = DGContext(mesh, k)
    w = Field(ctx.vector_space, rng.standard_normal(ctx.vector_space.dof_count))
    Q = make_space(mesh, Kind.ContinuousScalar, k)
    z = Field(Q, rng.standard_normal(Q.dof_count))
    pts = ctx.rule.ref_points
    div = dg_divergence(ctx, w)
    lhs = float(np.sum(ctx.wq * div * z.values_at(pts)))
    rhs = -float(np.sum(ctx.wq * np.einsum("kqr,kqr->kq", w.values_at(pts), z.gradients_at(pts))))
    err = abs(lhs - rhs) / max(1.0, abs(rhs))
    return CheckResult("divergence integration by parts", err <= tol, err, tol)


def norm_ratios(rng, mesh, p: float = 2.5, n_fields: int = 20, k: int = 1) -> dict:
    """Largest sampled Korn and norm-equivalence ratios on one mesh."""
    ctx = DGContext(mesh, k)
    korn = equiv = sym_equiv = 0.0
    for _ in range(n_fields):
        w = Field(ctx.vector_space, rng.standard_normal(ctx.vector_space.dof_count))
        full = dg_norm(ctx, w, p)
        symn = sym_dg_norm(ctx, w, p)
        korn = max(korn, full / symn)
        equiv = max(equiv, full / lifted_norm(ctx, w, p), lifted_norm(ctx, w, p) / full)
        ls = lifted_norm(ctx, w, p, symmetric=True)
        sym_equiv = max(sym_equiv, symn / ls, ls / symn)
    return {"korn": korn, "equivalence": equiv, "sym_equivalence": sym_equiv}


def check_norm_ratios(rng, n0: int = 2, levels: int = 3, growth: float = 1.1) -> list[CheckResult]:
    per_level = [norm_ratios(rng, mesh) for mesh in _meshes(n0, levels)]
    out = []
    for key in ("korn", "equivalence", "sym_equivalence"):
        vals = [r[key] for r in per_level]
        worst = max(b / a for a, b in zip(vals, vals[1:]))
        out.append(CheckResult(f"{key} ratio growth per level", worst <= growth, worst, growth,
                               "ratios " + ", ".join(f"{v:.3f}" for v in vals)))
    return out


def check_projection(rng, k: int = 1, n0: int = 4, tol: float = 1e-12) -> list[CheckResult]:
    mesh = generate_square_mesh(n0)
    V = make_space(mesh, Kind.BrokenVector, k)
    a, b = rng.standard_normal((2, 2, 3))

    def f(x):
        return np.stack([np.sin(a[0, 0] * x[..., 0] + a[0, 1] * x[..., 1] + a[0, 2]),
                         np.exp(0.3 * a[1, 0] * x[..., 0]) * x[..., 1] ** 2], axis=-1)

    def g(x):
        return np.stack([np.cos(b[0, 0] * x[..., 0] * x[..., 1] + b[0, 2]),
                         np.tanh(b[1, 1] * x[..., 1]) + x[..., 0]], axis=-1)

    Pf = l2_project(f, V)
    PPf = l2_project(Pf, V)
    idem = float(np.max(np.abs(PPf.coeffs - Pf.coeffs)) / max(1.0, np.max(np.abs(Pf.coeffs))))
    # self-adjointness in the discrete (quadrature) inner product
    x, w, rule = cell_quadrature(V, default_quadrature_degree(k))
    Pg = l2_project(g, V)
    lhs = float(np.sum(w[..., None] * Pf.values_at(rule.ref_points) * g(x)))
    rhs = float(np.sum(w[..., None] * f(x) * Pg.values_at(rule.ref_points)))
    sa = abs(lhs - rhs) / max(1.0, abs(lhs))
    return [
        CheckResult("projection idempotence", idem <= tol, idem, tol),
        CheckResult("projection self-adjointness", sa <= tol, sa, tol),
    ]


def run_operator_suite(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    t0 = time.perf_counter()
    out = [
        check_lifting_adjoint(rng),
        check_conforming_gradient(rng),
        check_divergence_by_parts(rng),
        *check_norm_ratios(rng),
        *check_projection(rng),
    ]
    elapsed = time.perf_counter() - t0
    out.append(CheckResult("operator suite runtime [s]", elapsed < 60.0, elapsed, 60.0))
    return out


# ----------------------------------------------------------------------
# constitutive law

CONSTITUTIVE_P = (1.5, 2.2, 2.5, 3.0, 3.5)
CONSTITUTIVE_DELTA = (0.0, 1e-4, 1.0)


def _random_tensors(rng, n):
    scale = 10.0 ** rng.uniform(-3, 2, size=(n, 1, 1))
    return scale * rng.standard_normal((n, 2, 2))


def check_monotonicity(rng, n_pairs: int = 10_000, tol: float = -1e-12) -> CheckResult:
    worst = np.inf
    for p in CONSTITUTIVE_P:
        for d in CONSTITUTIVE_DELTA:
            law = StressLaw(NFunctionParams(p, d))
            A, B = _random_tensors(rng, n_pairs), _random_tensors(rng, n_pairs)
            val = ddot(stress(law, A) - stress(law, B), A - B)
            worst = min(worst, float(val.min()))
    return CheckResult("stress monotonicity (min pairing)", worst >= tol, worst, tol,
                       f"{n_pairs} pairs x {len(CONSTITUTIVE_P) * len(CONSTITUTIVE_DELTA)} laws")


def check_jacobian_fd(rng, n_pairs: int = 1000, eps: float = 1e-6, tol: float = 1e-6) -> CheckResult:
    worst = 0.0
    for p in CONSTITUTIVE_P:
        for d in CONSTITUTIVE_DELTA:
            law = StressLaw(NFunctionParams(p, d))
            A = rng.standard_normal((n_pairs, 2, 2))
            B = rng.standard_normal((n_pairs, 2, 2))
            h = eps * np.linalg.norm(A.reshape(n_pairs, -1), axis=1)[:, None, None]
            fd = (stress(law, A + h * B) - stress(law, A - h * B)) / (2 * h)
            an = stress_jacobian(law, A, B)
            err = np.linalg.norm((fd - an).reshape(n_pairs, -1), axis=1) / np.maximum(
                np.linalg.norm(an.reshape(n_pairs, -1), axis=1), 1e-300
            )
            worst = max(worst, float(err.max()))
    return CheckResult("stress Jacobian vs central differences", worst <= tol, worst, tol)


def check_conjugate_roundtrip(rng, n: int = 2000, tol: float = 1e-10) -> CheckResult:
    worst = 0.0
    for p in CONSTITUTIVE_P:
        for d in CONSTITUTIVE_DELTA:
            P = NFunctionParams(p, d)
            t = 10.0 ** rng.uniform(-4, 3, size=n)
            back = conjugate_prime(P, phi_prime(P, t))
            worst = max(worst, float(np.max(np.abs(back - t) / t)))
            s = phi_prime(P, t)
            young = phi_eval(P, t) + conjugate_eval(P, s)
            worst = max(worst, float(np.max(np.abs(young - t * s) / (t * s))))
    return CheckResult("conjugate roundtrip and Young equality", worst <= tol, worst, tol)


def run_constitutive_suite(seed: int = 0) -> list[CheckResult]:
    rng = np.random.default_rng(seed)
    return [check_monotonicity(rng), check_jacobian_fd(rng), check_conjugate_roundtrip(rng)]
