import math

import numpy as np
import pytest
from hypothesis import given
from hypothesis import strategies as st
from scipy import integrate

from ldgpflow.nfunctions import (
    NFunctionParams,
    ShiftedNFunction,
    conjugate_eval,
    conjugate_prime,
    phi_eval,
    phi_eval_shifts,
    phi_prime,
    phi_second,
    shifted_phi_eval,
    shifted_phi_prime,
)

# frozen from a 30-digit adaptive quadrature of (0.1 + s)^0.5 s on [0, 1]
PHI_25_01_AT_1 = 0.431554107691253803
# frozen from a brute-force Legendre sup over s in [0, 3] refined by root finding
PHI_STAR_25_02_AT_1 = 0.542488483301637925

ps = st.floats(1.2, 4.0)
deltas = st.floats(0.0, 2.0)
ts = st.floats(0.0, 50.0)


def P(p, d=0.0):
    return NFunctionParams(p, d)


@pytest.mark.parametrize("p,d,t,want", [(2, 0, 3, 3), (3, 1, 2, 6), (1.5, 0, 4, 2)])
def test_phi_prime_values(p, d, t, want):
    assert phi_prime(P(p, d), t) == pytest.approx(want, rel=1e-14)


@pytest.mark.parametrize("p,d,t,want", [(2, 0, 2, 2), (3, 0, 3, 9)])
def test_phi_eval_closed_forms(p, d, t, want):
    assert phi_eval(P(p, d), t) == pytest.approx(want, rel=1e-14)


def test_phi_eval_against_quadrature_oracle():
    assert phi_eval(P(2.5, 0.1), 1.0) == pytest.approx(PHI_25_01_AT_1, rel=1e-12)


@pytest.mark.parametrize("p,d,a,t,want", [(2, 0, 5, 3, 3), (3, 0, 1, 2, 6)])
def test_shifted_prime(p, d, a, t, want):
    assert shifted_phi_prime(ShiftedNFunction(P(p, d), a), t) == pytest.approx(want, rel=1e-14)


def test_shifted_eval_values():
    assert shifted_phi_eval(ShiftedNFunction(P(2, 0), 7.0), 2.0) == pytest.approx(2.0, rel=1e-14)
    assert shifted_phi_eval(ShiftedNFunction(P(3, 0), 1.0), 1.0) == pytest.approx(5 / 6, rel=1e-14)


@given(ps, deltas, ts)
def test_zero_shift_is_identity(p, d, t):
    s = ShiftedNFunction(P(p, d), 0.0)
    assert shifted_phi_prime(s, t) == pytest.approx(phi_prime(P(p, d), t), rel=1e-14)
    assert shifted_phi_eval(s, t) == pytest.approx(phi_eval(P(p, d), t), rel=1e-14)


@pytest.mark.parametrize("p,d,t,want", [(2, 0, 4, 4), (3, 0, 4, 2)])
def test_conjugate_prime_values(p, d, t, want):
    assert conjugate_prime(P(p, d), t) == pytest.approx(want, rel=1e-12)


def test_conjugate_eval_values():
    assert conjugate_eval(P(2, 0), 2.0) == pytest.approx(2.0, rel=1e-12)
    assert conjugate_eval(P(3, 0), 3.0) == pytest.approx(2 * math.sqrt(3), rel=1e-12)
    assert conjugate_eval(P(2.5, 0.2), 1.0) == pytest.approx(PHI_STAR_25_02_AT_1, rel=1e-10)


@given(ps, st.floats(0.0, 1.0), st.floats(1e-6, 1e3))
def test_conjugate_roundtrip(p, d, t):
    s = conjugate_prime(P(p, d), t)
    assert phi_prime(P(p, d), s) == pytest.approx(t, rel=1e-10)


@given(ps, st.floats(1e-4, 1.0), st.floats(1e-3, 20.0))
def test_phi_matches_numerical_antiderivative(p, d, t):
    ref, _ = integrate.quad(lambda s: (d + s) ** (p - 2) * s, 0.0, t, epsabs=0, epsrel=1e-13)
    assert phi_eval(P(p, d), t) == pytest.approx(ref, rel=1e-10)


@given(ps, st.floats(1e-3, 1.0), st.floats(0.0, 5.0))
def test_shift_identity_against_definition(p, d, a):
    # phi_a(t) = int_0^t phi'(a + s) s / (a + s) ds, compared with phi_{p, delta + a}
    t = 1.7
    base = P(p, d)
    ref, _ = integrate.quad(
        lambda s: phi_prime(base, a + s) * s / (a + s) if a + s > 0 else 0.0, 0.0, t, epsrel=1e-12
    )
    assert shifted_phi_eval(ShiftedNFunction(base, a), t) == pytest.approx(ref, rel=1e-9)


@given(ps, st.floats(0.0, 1.0), st.floats(1e-3, 10.0))
def test_second_derivative_by_differences(p, d, t):
    eps = 1e-6 * t
    fd = (phi_prime(P(p, d), t + eps) - phi_prime(P(p, d), t - eps)) / (2 * eps)
    assert phi_second(P(p, d), t) == pytest.approx(fd, rel=1e-6)


@given(ps, st.floats(0.0, 1.0), st.floats(0.0, 10.0), st.floats(0.0, 10.0))
def test_young_inequality(p, d, s, t):
    prm = P(p, d)
    assert s * t <= phi_eval(prm, s) + conjugate_eval(prm, t) + 1e-10 * (1 + s * t)


def test_series_branch_is_continuous():
    prm = P(2.5, 1.0)
    for switch in (0.1, 1e4):
        t = np.array([switch * (1 - 1e-9), switch * (1 + 1e-9)])
        v = phi_eval(prm, t)
        expected = phi_prime(prm, switch) * (t[1] - t[0])
        assert abs(v[1] - v[0] - expected) < 1e-13 * v[0]


@given(ps, st.floats(1e-300, 1e-40), st.floats(1e-3, 1e3))
def test_tiny_delta_approaches_power(p, d, t):
    # relative deviation is O((delta / t)^min(1, p - 1))
    assert phi_eval(P(p, d), t) == pytest.approx(t**p / p, rel=1e-8)


def test_vectorized_shapes_and_shifts():
    prm = P(2.5, 1e-4)
    t = np.linspace(0, 2, 12).reshape(3, 4)
    assert phi_eval(prm, t).shape == (3, 4)
    a = np.full((3, 4), 0.3)
    np.testing.assert_allclose(phi_eval_shifts(prm, a, t), phi_eval(P(2.5, 0.3 + 1e-4), t), rtol=1e-14)


@pytest.mark.parametrize("bad", [dict(p=1.0), dict(p=0.5), dict(p=2.0, delta=-1.0)])
def test_invalid_parameters(bad):
    with pytest.raises(ValueError):
        NFunctionParams(**bad)


def test_negative_argument_rejected():
    with pytest.raises(ValueError):
        phi_eval(P(2.5), -1.0)
    with pytest.raises(ValueError):
        ShiftedNFunction(P(2.5), -0.1)
    with pytest.raises(ValueError):
        phi_eval_shifts(P(2.5), np.array([-1.0]), np.array([1.0]))
