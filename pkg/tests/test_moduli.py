import math

import numpy as np
import pytest

from halpern_rates import moduli as mod
from halpern_rates.errors import DomainError, MissingModulusError, ScheduleDomainError
from halpern_rates.moduli import ModulusFn, ModulusKind


@pytest.mark.parametrize("schedule, n, value", [
    (mod.harmonic(), 4, 0.25),
    (mod.constant(0.5), 17, 0.5),
    (mod.inverse_sqrt(), 16, 0.25),
    (mod.shifted_harmonic(), 3, 0.25),
])
def test_lambda_at(schedule, n, value):
    assert mod.lambda_at(schedule, n) == value


def test_lambda_index_starts_at_one():
    with pytest.raises(DomainError):
        mod.harmonic().lam(0)


def test_custom_out_of_range_is_a_domain_error():
    s = mod.custom(lambda n: 2.0)
    with pytest.raises(ScheduleDomainError):
        s.lam(1)
    with pytest.raises(ScheduleDomainError):
        s.lam_array(1, 5)


def test_constant_out_of_range():
    with pytest.raises(ScheduleDomainError):
        mod.constant(1.5)


def test_lam_array_agrees_with_scalar():
    for s in (mod.harmonic(), mod.shifted_harmonic(), mod.inverse_sqrt(), mod.constant(0.3)):
        arr = s.lam_array(1, 50)
        assert arr.tolist() == [s.lam(n) for n in range(1, 50)]


@pytest.mark.parametrize("schedule, eps, value", [
    (mod.harmonic(), 0.1, 11),
    (mod.constant(0), 0.37, 1),
    (mod.inverse_sqrt(), 0.1, 101),
])
def test_alpha_of(schedule, eps, value):
    assert mod.alpha_of(schedule, eps) == value


@pytest.mark.parametrize("schedule, eps, value", [
    (mod.harmonic(), 0.1, 11),
    (mod.constant(0.4), 0.01, 1),
    (mod.inverse_sqrt(), 0.01, 10001),
])
def test_beta_of(schedule, eps, value):
    assert mod.beta_of(schedule, eps) == value


@pytest.mark.parametrize("schedule, n, value", [
    (mod.harmonic(), 3, 64),
    (mod.constant(1), 7, 7),
    (mod.inverse_sqrt(), 4, 9),
])
def test_theta_of(schedule, n, value):
    assert mod.theta_of(schedule, n) == value


def test_inverse_sqrt_theta_example_by_direct_sum():
    assert math.fsum(i ** -0.5 for i in range(1, 10)) >= 4


def test_missing_moduli():
    s = mod.custom(lambda n: 1.0 / n)
    with pytest.raises(MissingModulusError):
        mod.alpha_of(s, 0.1)
    with pytest.raises(MissingModulusError):
        mod.beta_of(s, 0.1)
    with pytest.raises(MissingModulusError):
        mod.theta_of(s, 1)


def test_custom_with_decreasing_alpha_gets_beta():
    alpha = ModulusFn(ModulusKind.RATE_OF_CONVERGENCE, lambda q: 7, "7")
    s = mod.custom(lambda n: 1.0 / n, alpha=alpha, decreasing=True)
    assert mod.beta_of(s, 0.5) == 7


def test_modulus_domain_checks():
    a = mod.moduli_of(mod.harmonic())[0]
    with pytest.raises(DomainError):
        a(0)
    t = mod.moduli_of(mod.harmonic())[2]
    with pytest.raises(DomainError):
        t(0)
    with pytest.raises(DomainError):
        t(1.5)


def test_constant_alpha_carries_its_limit():
    alpha = mod.moduli_of(mod.constant(0.5))[0]
    assert alpha.limit == 0.5


def test_verify_harmonic_all_pass():
    rep = mod.verify_moduli(mod.harmonic(), 10 ** 6, (0.1, 0.01))
    assert rep.passed, rep.failures


def test_verify_inverse_sqrt_all_pass():
    rep = mod.verify_moduli(mod.inverse_sqrt(), 10 ** 6, (0.1,))
    assert rep.passed, rep.failures


def test_verify_shifted_harmonic_and_constant():
    for s in (mod.shifted_harmonic(), mod.constant(0.5)):
        rep = mod.verify_moduli(s, 10 ** 5, (0.1, 0.01, 0.001))
        assert rep.passed, rep.failures


def test_verify_catches_false_theta():
    theta = ModulusFn(ModulusKind.RATE_OF_DIVERGENCE, lambda n: n, "n")
    s = mod.constant(0.5).with_moduli(theta=theta)
    rep = mod.verify_moduli(s, 100, ())
    fails = [c for c in rep.failures if c.name == "rate_of_divergence"]
    assert fails and fails[0].detail["first_failure_n"] == 1


def test_verify_catches_false_alpha():
    alpha = ModulusFn(ModulusKind.RATE_OF_CONVERGENCE, lambda q: 2, "2")
    s = mod.harmonic().with_moduli(alpha=alpha)
    rep = mod.verify_moduli(s, 1000, (0.1,))
    assert not rep.passed


def test_verify_flags_non_decreasing_claim():
    s = mod.custom(lambda n: 0.5 + 0.25 * (n % 2), decreasing=True)
    rep = mod.verify_moduli(s, 100, ())
    assert any(c.name == "decreasing" for c in rep.failures)


def test_harmonic_divergence_reaches_n_9():
    rep = mod.verify_moduli(mod.harmonic(), 10 ** 6, ())
    div = [c for c in rep.checks if c.name == "rate_of_divergence"][0]
    assert div.passed and div.detail["n_checked"] == 9
    # sum of 1/i up to 4^9 really is at least 9
    assert math.fsum(1.0 / np.arange(1, 4 ** 9 + 1)) >= 9
