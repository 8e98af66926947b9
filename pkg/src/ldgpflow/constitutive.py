"""Extra stress with (p, delta)-structure.

Tensors are numpy arrays with trailing shape (2, 2); every routine
broadcasts over leading axes. The law is

    S(A) = (delta + |A_sym|)^(p-2) A_sym

and the shifted law S_a has delta replaced by delta + a.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .nfunctions import NFunctionParams

# |A_sym| below this (times 1 + delta) counts as zero
SINGULAR_GUARD = 1e-14


def sym(A):
    A = np.asarray(A, dtype=float)
    return 0.5 * (A + np.swapaxes(A, -1, -2))


def frob(A):
    A = np.asarray(A, dtype=float)
    return np.sqrt(np.einsum("...ij,...ij->...", A, A))


def ddot(A, B):
    return np.einsum("...ij,...ij->...", A, B)


@dataclass(frozen=True)
class StressLaw:
    params: NFunctionParams
    mu: float = 1.0

    @property
    def p(self) -> float:
        return self.params.p

    @property
    def delta(self) -> float:
        return self.params.delta


def _scaled(A, base, exponent, delta):
    As = sym(A)
    n = frob(As)
    b = base + n
    with np.errstate(divide="ignore", invalid="ignore"):
        factor = np.where(b > 0, np.power(np.where(b > 0, b, 1.0), exponent), 0.0)
    tiny = n <= SINGULAR_GUARD * (1.0 + delta)
    factor = np.where(tiny, 0.0, factor)
    return factor[..., None, None] * As


def stress(law: StressLaw, A):
    return law.mu * _scaled(A, law.delta, law.p - 2.0, law.delta)


def shifted_stress(law: StressLaw, a, A):
    a = np.asarray(a, dtype=float)
    if np.any(a < 0):
        raise ValueError("shift must be non-negative")
    return law.mu * _scaled(A, law.delta + a, law.p - 2.0, law.delta)


def natural_transform_F(law: StressLaw, A):
    return _scaled(A, law.delta, 0.5 * (law.p - 2.0), law.delta)


def conjugate_transform_Fstar(law: StressLaw, A):
    pc = law.params.p_conj
    return _scaled(A, law.delta ** (law.p - 1.0), 0.5 * (pc - 2.0), law.delta)


def stress_tangent(law: StressLaw, A, a=0.0):
    """Derivative of the (shifted) stress as a 4x4 matrix on row-major vec(A).

    Returns ``T`` with ``vec(DS(A)[B]) = T @ vec(B)``, shape (..., 4, 4).
    """
    As = sym(A)
    n = frob(As)
    base = law.delta + np.asarray(a, dtype=float) + n
    p = law.p
    tiny = n <= SINGULAR_GUARD * (1.0 + law.delta)
    with np.errstate(divide="ignore", invalid="ignore"):
        c1 = np.where(base > 0, np.power(np.where(base > 0, base, 1.0), p - 2.0), 0.0)
        c2 = (p - 2.0) * np.power(np.where(base > 0, base, 1.0), p - 3.0) / np.where(tiny, 1.0, n)
    c2 = np.where(tiny, 0.0, c2)
    if p < 2:
        # 0^(p-2) limit at the origin with delta = 0; no finite tangent exists
        c1 = np.where(base > 0, c1, np.inf)
    elif p == 2:
        c1 = np.ones_like(c1)
    sym_proj = np.array(
        [[1.0, 0, 0, 0], [0, 0.5, 0.5, 0], [0, 0.5, 0.5, 0], [0, 0, 0, 1.0]]
    )
    av = As.reshape(As.shape[:-2] + (4,))
    T = c1[..., None, None] * sym_proj + c2[..., None, None] * av[..., :, None] * av[..., None, :]
    return law.mu * T


def stress_shift_derivative(law: StressLaw, a, A):
    """d/da of the shifted stress: (p-2) (delta+a+|A_sym|)^(p-3) A_sym."""
    As = sym(A)
    n = frob(As)
    base = law.delta + np.asarray(a, dtype=float) + n
    with np.errstate(divide="ignore", invalid="ignore"):
        f = (law.p - 2.0) * np.power(np.where(base > 0, base, 1.0), law.p - 3.0)
    f = np.where(n <= SINGULAR_GUARD * (1.0 + law.delta), 0.0, f)
    return law.mu * f[..., None, None] * As


def stress_jacobian(law: StressLaw, A, B):
    """Directional derivative d/de S(A + e B) at e = 0."""
    B = np.asarray(B, dtype=float)
    T = stress_tangent(law, A)
    bv = B.reshape(B.shape[:-2] + (4,))
    out = np.einsum("...ij,...j->...i", T, bv)
    return out.reshape(out.shape[:-1] + (2, 2))
