from fractions import Fraction

import numpy as np
import pytest

from halpern_rates import moduli as mod, operators as ops
from halpern_rates import oracle as orc
from halpern_rates.errors import PreconditionError


def half_instance():
    return orc.RecurrenceInstance(mod.constant(0.5), orc.geometric(1, 0.5), 1.0, 2)


def ref_recurrence(lam, b, a1, n):
    a = [a1]
    for k in range(1, n):
        a.append((1 - lam(k + 1)) * a[-1] + b(k))
    return a


def test_kill_and_hold():
    kill = orc.RecurrenceInstance(mod.constant(1), orc.zero(), 5.0, 5)
    assert orc.simulate_recurrence(kill, 4).tolist() == [5.0, 0.0, 0.0, 0.0]
    hold = orc.RecurrenceInstance(mod.constant(0), orc.zero(), 5.0, 5)
    assert orc.simulate_recurrence(hold, 4).tolist() == [5.0] * 4


def test_hand_recursion():
    a = orc.simulate_recurrence(half_instance(), 5)
    assert a.tolist() == [1.0, 1.0, 0.75, 0.5, 0.3125]
    ref = ref_recurrence(lambda k: Fraction(1, 2), lambda k: Fraction(1, 2 ** k), Fraction(1), 5)
    assert [float(v) for v in ref] == a.tolist()


def test_geometric_gamma():
    b = orc.geometric(1, 0.5)
    assert b.gamma(0.25) == 2
    assert b.gamma(1) == 1
    # spot-check the Cauchy property: tail sum beyond gamma(q) is at most q
    for q in (0.5, 0.1, 0.01, 1e-5):
        m = int(b.gamma(q))
        assert 2.0 ** -m <= q


def test_product_bound():
    inst = half_instance()
    assert orc.check_product_bound(inst, 1, 4).passed
    for n in range(1, 20):
        assert orc.check_product_bound(inst, n, 1).passed


def test_product_bound_preconditions():
    with pytest.raises(PreconditionError):
        orc.check_product_bound(half_instance(), 0, 1)


def test_h_bound_hand_instance():
    inst = half_instance()
    rep = orc.check_h_bound(inst, eps_grid=(0.5,), horizon=1000)
    assert rep.passed
    h = [c for c in rep.checks if c.name.startswith("h[")][0]
    assert h.detail["h"] == 12
    a = orc.simulate_recurrence(inst, 1000)
    assert np.all(a[4:] < 0.5)  # from n = 5 on; a_4 = 0.5 exactly
    assert a[3] == 0.5


def test_h_bound_trivial():
    inst = orc.RecurrenceInstance.with_bound(mod.constant(1), orc.zero(), 2.5)
    assert inst.D == 3
    assert orc.check_h_bound(inst, horizon=100).passed


def test_h_bound_catches_false_modulus():
    from halpern_rates.moduli import ModulusFn, ModulusKind
    lying = ModulusFn(ModulusKind.RATE_OF_DIVERGENCE, lambda n: 1, "1")
    inst = orc.RecurrenceInstance(mod.harmonic(), orc.geometric(1, 0.9), 1.0, 11)
    assert not orc.check_h_bound(inst, delta=lying, horizon=1000).passed


def test_sweep_passes():
    rep = orc.oracle_sweep(100, seed=0, horizon=10 ** 5)
    assert rep.passed, rep.failures[:3]


def test_random_instances_vary():
    rng = np.random.default_rng(1)
    kinds = {(orc.random_instance(rng).lam.kind, orc.random_instance(rng).b.kind) for _ in range(50)}
    assert len(kinds) >= 4


def test_cesaro_examples():
    x = np.array([0.3, -1.2])
    assert np.array_equal(orc.cesaro_oracle(ops.identity(2), x, 7), x)
    R180 = ops.rotation(2, [(0, 1, 180.0)])
    assert np.array_equal(orc.cesaro_oracle(R180, [1.0, 0.0], 1), [0.0, 0.0])


def test_cesaro_needs_linear():
    with pytest.raises(PreconditionError):
        orc.cesaro_oracle(ops.ball_projection([0.0], 1.0), [2.0], 3)
