"""Scalar Orlicz machinery for the N-function phi_{p,delta}.

    phi'(t) = (delta + t)^(p-2) t,     phi(t) = int_0^t phi'(s) ds

Shifted functions satisfy (phi_{p,delta})_a = phi_{p,delta+a}, which is how
every ``shifted_*`` routine is evaluated. All routines accept scalars or
numpy arrays and return the same shape.
"""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

# below this ratio t/delta the closed antiderivative loses digits; use the series
_SERIES_SWITCH = 0.1
_SERIES_TERMS = 24
# above this ratio t/delta, d^p r^p may overflow
_FAR_SWITCH = 1e4


@dataclass(frozen=True)
class NFunctionParams:
    p: float
    delta: float = 0.0

    def __post_init__(self):
        if not self.p > 1.0:
            raise ValueError(f"p must be > 1, got {self.p}")
        if not self.delta >= 0.0:
            raise ValueError(f"delta must be >= 0, got {self.delta}")

    @property
    def p_conj(self) -> float:
        return self.p / (self.p - 1.0)


@dataclass(frozen=True)
class ShiftedNFunction:
    base: NFunctionParams
    shift: float = 0.0

    def __post_init__(self):
        if not self.shift >= 0.0:
            raise ValueError(f"shift must be >= 0, got {self.shift}")

    def as_params(self) -> NFunctionParams:
        """The shifted function is again of the same family with delta + a."""
        return NFunctionParams(self.base.p, self.base.delta + self.shift)


def _check_domain(t):
    t = np.asarray(t, dtype=float)
    if np.any(t < 0) or np.any(np.isnan(t)):
        raise ValueError("N-functions are only defined for t >= 0")
    return t


def _unwrap(x, like):
    return float(x) if np.ndim(like) == 0 else x


def phi_prime(params: NFunctionParams, t):
    t = _check_domain(t)
    base = params.delta + t
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.where(t > 0, np.power(np.where(base > 0, base, 1.0), params.p - 2.0) * t, 0.0)
    return _unwrap(val, t)


def phi_second(params: NFunctionParams, t):
    """Derivative of phi'; (delta+t)^(p-3) (delta + (p-1) t)."""
    t = _check_domain(t)
    base = params.delta + t
    with np.errstate(divide="ignore", invalid="ignore"):
        val = np.power(base, params.p - 3.0) * (params.delta + (params.p - 1.0) * t)
    val = np.where(base > 0, val, np.inf if params.p < 2 else (1.0 if params.p == 2 else 0.0))
    return _unwrap(val, t)


def _series_coefficients(p: float) -> np.ndarray:
    # phi(t) = delta^p * sum_{n>=2} c_n r^n,  r = t/delta,
    # c_n = (p-2)(p-3)...(p-n+1) (n-1) / n!
    c = np.zeros(_SERIES_TERMS + 1)
    falling = 1.0
    fact = 1.0
    for n in range(2, _SERIES_TERMS + 1):
        fact *= n
        if n > 2:
            falling *= p - n + 1.0
        c[n] = falling * (n - 1) / fact
    return c


def _phi_core(p: float, d, t):
    # d may be an array broadcasting against t
    d, t = np.broadcast_arrays(np.asarray(d, dtype=float), t)
    out = np.empty(t.shape)
    zero = d == 0.0
    out[zero] = np.power(t[zero], p) / p
    with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
        r = np.where(zero, np.inf, t / np.where(zero, 1.0, d))
    small = ~zero & (r < _SERIES_SWITCH)
    if np.any(small):
        rs = r[small]
        c = _series_coefficients(p)
        acc = np.zeros_like(rs)
        for n in range(_SERIES_TERMS, 1, -1):
            acc = (acc + c[n]) * rs
        out[small] = d[small] ** p * acc * rs
    mid = ~zero & ~small & (r <= _FAR_SWITCH)
    if np.any(mid):
        lr = np.log1p(r[mid])
        out[mid] = d[mid] ** p * (np.expm1(p * lr) / p - np.expm1((p - 1.0) * lr) / (p - 1.0))
    far = ~zero & (r > _FAR_SWITCH)
    if np.any(far):
        # delta << t: expanded form, no cancellation and no overflow of r^p
        df, b = d[far], d[far] + t[far]
        out[far] = b ** (p - 1.0) * (b / p - df / (p - 1.0)) + df**p / (p * (p - 1.0))
    return out


def phi_eval(params: NFunctionParams, t):
    t = _check_domain(t)
    return _unwrap(_phi_core(params.p, params.delta, t), t)


def phi_eval_shifts(params: NFunctionParams, shifts, t):
    """phi_{p, delta + a}(t) with an array of shifts broadcasting against t."""
    t = _check_domain(t)
    a = np.asarray(shifts, dtype=float)
    if np.any(a < 0):
        raise ValueError("shifts must be non-negative")
    return _phi_core(params.p, params.delta + a, t)


def shifted_phi_prime(shifted: ShiftedNFunction, t):
    return phi_prime(shifted.as_params(), t)


def shifted_phi_eval(shifted: ShiftedNFunction, t):
    return phi_eval(shifted.as_params(), t)


def conjugate_prime(params: NFunctionParams, t, rtol: float = 1e-13):
    """Inverse of phi' by bracketed Newton (closed form when delta == 0)."""
    t = _check_domain(t)
    p, d = params.p, params.delta
    if d == 0.0:
        return _unwrap(np.power(t, 1.0 / (p - 1.0)), t)

    t_arr = np.atleast_1d(t).astype(float)
    lo = np.zeros_like(t_arr)
    hi = np.maximum(1.0, np.power(t_arr, 1.0 / (p - 1.0)) * (1.0 + d))
    # widen until phi'(hi) >= t
    while True:
        short = phi_prime(params, hi) < t_arr
        if not np.any(short):
            break
        hi = np.where(short, 2.0 * hi, hi)
    # linear regime start: phi'(s) ~ delta^(p-2) s for small s
    with np.errstate(over="ignore", invalid="ignore"):
        guess = t_arr * np.power(d, 2.0 - p)
    s = np.clip(np.where(np.isfinite(guess), guess, hi), lo, hi)
    for _ in range(200):
        f = phi_prime(params, s) - t_arr
        lo = np.where(f < 0, s, lo)
        hi = np.where(f > 0, s, hi)
        with np.errstate(over="ignore", divide="ignore", invalid="ignore"):
            df = phi_second(params, s)
            step = np.where((df > 0) & np.isfinite(df), s - f / df, 0.5 * (lo + hi))
        outside = ~((step > lo) & (step < hi)) | ~np.isfinite(step)
        new = np.where(outside, 0.5 * (lo + hi), step)
        done = np.abs(new - s) <= rtol * np.maximum(np.abs(new), 1e-300)
        s = new
        if np.all(done | (t_arr == 0)):
            break
    s = np.where(t_arr == 0, 0.0, s)
    return float(s[0]) if np.ndim(t) == 0 else s.reshape(np.shape(t))


def conjugate_eval(params: NFunctionParams, t):
    """phi*(t) through Young's equality  phi*(t) = t s - phi(s),  s = (phi')^{-1}(t)."""
    t = _check_domain(t)
    p, d = params.p, params.delta
    if d == 0.0:
        pc = params.p_conj
        return _unwrap(np.power(t, pc) / pc, t)
    s = np.asarray(conjugate_prime(params, t))
    return _unwrap(t * s - np.asarray(phi_eval(params, s)), t)
