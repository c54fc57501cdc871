"""Certified bounds against an independently written evaluator.

The reference below computes the closed formula directly with Fractions and
mpmath logarithms, sharing no code with the package.
"""

import math
from fractions import Fraction

import mpmath
import pytest
from hypothesis import given, settings, strategies as st

from halpern_rates import bounds, moduli as mod
from halpern_rates.errors import DomainError, ModulusKindError, PreconditionError
from halpern_rates.moduli import ModulusFn, ModulusKind

mpmath.mp.dps = 80


def _ceil(q):
    q = Fraction(q)
    return -((-q.numerator) // q.denominator)


def _ceil_ln(q):
    x = mpmath.log(mpmath.mpf(q.numerator) / q.denominator)
    k = int(mpmath.ceil(x))
    assert abs(x - mpmath.nint(x)) > mpmath.mpf(10) ** -60  # never at a tie
    return k


def ref_phi(alpha, beta, theta, M, eps):
    eps = Fraction(eps)
    inner = beta(eps / (8 * M)) + 1 + _ceil_ln(8 * M / eps)
    return max(theta(inner), alpha(eps / (4 * M)))


harm_alpha = lambda q: _ceil(1 / q) + 1
harm_theta = lambda n: 4 ** n
isq_alpha = lambda q: _ceil(1 / (q * q)) + 1
isq_theta = lambda n: _ceil((Fraction(n, 2) + 1) ** 2)


def harmonic_moduli():
    return mod.moduli_of(mod.harmonic())


def isqrt_moduli():
    return mod.moduli_of(mod.inverse_sqrt())


def test_phi_general_harmonic_M3_eps1():
    a, b, t = harmonic_moduli()
    value = bounds.phi_general(a, b, t, 3, 1)
    assert value == 4 ** 30
    assert value == ref_phi(harm_alpha, harm_alpha, harm_theta, 3, 1)
    # hand pieces: beta(1/24) = 25, ceil(ln 24) = 4, alpha(1/12) = 13
    assert b(Fraction(1, 24)) == 25 and a(Fraction(1, 12)) == 13


def test_phi_general_inverse_sqrt_M3_quarter():
    a, b, t = isqrt_moduli()
    value = bounds.phi_general(a, b, t, 3, 0.25)
    # beta(1/96) = 9217, ceil(ln 96) = 5, theta(9223) = ceil((9223/2 + 1)^2)
    assert b(Fraction(1, 96)) == 9217
    assert value == _ceil((Fraction(9223, 2) + 1) ** 2) == 21_275_157
    assert value == ref_phi(isq_alpha, isq_alpha, isq_theta, 3, Fraction(1, 4))
    # the second term is alpha(1/48), far below the first
    assert a(Fraction(1, 48)) == 2305


@pytest.mark.parametrize("eps", [2, 2.5, 0, -1])
def test_eps_domain(eps):
    a, b, t = harmonic_moduli()
    with pytest.raises(DomainError):
        bounds.phi_general(a, b, t, 3, eps)
    with pytest.raises(DomainError):
        bounds.phi_harmonic(1, eps)


def test_M_domain():
    a, b, t = harmonic_moduli()
    with pytest.raises(DomainError):
        bounds.phi_general(a, b, t, 0, 1)


def test_kind_mismatch():
    a, b, t = harmonic_moduli()
    with pytest.raises(ModulusKindError):
        bounds.phi_general(t, b, a, 3, 1)
    with pytest.raises(ModulusKindError):
        bounds.phi_general(a, a, t, 3, 1)


def test_nonzero_limit_alpha_rejected():
    a, b, t = mod.moduli_of(mod.constant(0.5))
    with pytest.raises(ModulusKindError):
        bounds.phi_general(a, b, t, 3, 1)


def test_phi_bounded():
    a, b, t = harmonic_moduli()
    assert bounds.phi_bounded(a, b, t, 1, 1) == 4 ** 30
    assert bounds.phi_bounded(a, b, t, 0, 1) == 4 ** 13
    with pytest.raises(DomainError):
        bounds.phi_bounded(a, b, t, 1, 2.5)


def test_bound_M():
    assert bounds.bound_M(0) == 1
    assert bounds.bound_M(1) == 3
    assert bounds.bound_M(0.5) == 2
    with pytest.raises(DomainError):
        bounds.bound_M(-1)


def test_psi_decreasing_examples():
    a, _, t = harmonic_moduli()
    assert bounds.psi_decreasing(a, t, 3, 1) == 4 ** 30
    a, _, t = isqrt_moduli()
    assert bounds.psi_decreasing(a, t, 3, 0.25) == 21_275_157


def test_psi_rejects_non_decreasing_schedule():
    a, _, t = harmonic_moduli()
    s = mod.custom(lambda n: 0.5, decreasing=False)
    with pytest.raises(PreconditionError):
        bounds.psi_decreasing(a, t, 3, 1, schedule=s)


def test_phi_harmonic():
    assert bounds.phi_harmonic(1, 1) == 4 ** 51
    assert bounds.phi_harmonic(1, 1).log10_view == pytest.approx(30.7, abs=0.01)
    assert bounds.phi_harmonic(0, 1) == 4 ** 19


def test_h_liu_hand_instance():
    gamma = ModulusFn(ModulusKind.CAUCHY_MODULUS,
                      lambda q: max(1, _ceil_log2_inv(q)), "log2")
    delta = ModulusFn(ModulusKind.RATE_OF_DIVERGENCE, lambda n: 2 * n, "2n")
    assert bounds.h_liu(gamma, delta, 2, 0.5) == 12
    with pytest.raises(DomainError):
        bounds.h_liu(gamma, delta, 2, 2)


def _ceil_log2_inv(q):
    k = 0
    while Fraction(1, 2 ** k) > q:
        k += 1
    return k


def test_h_liu_zero_b_harmonic():
    gamma = ModulusFn(ModulusKind.CAUCHY_MODULUS, lambda q: 1, "1")
    delta = mod.moduli_of(mod.harmonic())[2]
    assert bounds.h_liu(gamma, delta, 1, 1) == 64


def test_certify_schedule_uses_psi_for_decreasing():
    assert bounds.certify_schedule(mod.inverse_sqrt(), 3, 0.25) == 21_275_157


_eps = st.fractions(min_value=Fraction(1, 1000), max_value=Fraction(1999, 1000))
_M = st.integers(min_value=1, max_value=30)


@settings(max_examples=50, deadline=None)
@given(_M, _eps)
def test_psi_equals_phi_with_beta_alpha(M, eps):
    a, b, t = isqrt_moduli()
    assert bounds.psi_decreasing(a, t, M, eps) == bounds.phi_general(a, b, t, M, eps)
    assert bounds.phi_general(a, b, t, M, eps) == ref_phi(isq_alpha, isq_alpha, isq_theta, M, eps)


@settings(max_examples=50, deadline=None)
@given(_M, _eps, _eps)
def test_phi_antitone_in_eps(M, e1, e2):
    lo, hi = sorted((e1, e2))
    a, b, t = isqrt_moduli()
    assert bounds.phi_general(a, b, t, M, hi) <= bounds.phi_general(a, b, t, M, lo)


@settings(max_examples=50, deadline=None)
@given(_M, _M, _eps)
def test_phi_monotone_in_M(M1, M2, eps):
    lo, hi = sorted((M1, M2))
    a, b, t = isqrt_moduli()
    assert bounds.phi_general(a, b, t, lo, eps) <= bounds.phi_general(a, b, t, hi, eps)


@pytest.mark.parametrize("d_C", [0, 1, 2, 5])
@pytest.mark.parametrize("eps", [1.5, 1, 0.5, 0.1])
def test_psi_dominated_by_harmonic_closed_form(d_C, eps):
    a, _, t = harmonic_moduli()
    M = max(1, 3 * math.ceil(d_C))
    assert bounds.psi_decreasing(a, t, M, eps) <= bounds.phi_harmonic(d_C, eps)
