"""Brute-force checks of the recurrence lemmas behind the bounds.

The recurrence ``a_{n+1} <= (1 - lambda_{n+1}) a_n + b_n`` is simulated at
equality, which is the extremal admissible sequence: any ``a_n >= eps`` past
``h_liu(gamma, delta, D, eps)`` is a hard failure.
"""

from __future__ import annotations

import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .bounds import h_liu
from .errors import DomainError, PreconditionError
from .exact import ceil_fraction, to_fraction
from .moduli import ModulusFn, ModulusKind, Schedule, constant, harmonic, inverse_sqrt, moduli_of
from .operators import NonexpansiveOp
from .report import CheckResult, VerificationReport

__all__ = [
    "BSequence",
    "RecurrenceInstance",
    "geometric",
    "eventually_zero",
    "zero",
    "simulate_recurrence",
    "check_product_bound",
    "check_h_bound",
    "cesaro_oracle",
    "cesaro_path",
    "random_instance",
    "oracle_sweep",
]


def _cauchy(rule, label) -> ModulusFn:
    return ModulusFn(ModulusKind.CAUCHY_MODULUS, rule, label, certified=True)


@dataclass(frozen=True)
class BSequence:
    """A nonnegative sequence (b_n)_{n>=1} with a known sum and Cauchy modulus."""

    kind: str
    values: Callable = field(compare=False, repr=False)  # (start, stop) -> array of b_start..b_{stop-1}
    gamma: ModulusFn = field(compare=False, repr=False)
    total: Fraction = Fraction(0)  # sum over all n, or an upper bound on it
    params: dict = field(default_factory=dict)


def geometric(c, r) -> BSequence:
    """b_n = c r^n for 0 < r < 1, c >= 0."""
    c, r = to_fraction(c), to_fraction(r)
    if not (0 < r < 1 and c >= 0):
        raise DomainError("geometric sequence needs 0 < r < 1 and c >= 0")
    cf, rf = float(c), float(r)

    def gamma(q: Fraction) -> int:
        # s_{m+k} - s_m < c r^{m+1} / (1 - r); find the least m >= 1 with c r^{m+1} <= q (1 - r)
        if c == 0:
            return 1
        target = q * (1 - r)
        guess = math.log(float(target) / cf) / math.log(rf) - 1 if float(target) > 0 else 1
        m = max(1, int(guess) if math.isfinite(guess) else 1)
        while c * r ** (m + 1) > target:
            m += 1
        while m > 1 and c * r ** m <= target:
            m -= 1
        return m

    def values(start, stop):
        n = np.arange(start, stop, dtype=np.float64)
        return cf * rf ** n

    return BSequence("geometric", values, _cauchy(gamma, f"geometric({cf:g},{rf:g})"),
                     c * r / (1 - r), {"c": cf, "r": rf})


def eventually_zero(c, K: int) -> BSequence:
    """b_n = c for n <= K and 0 afterwards."""
    c = to_fraction(c)
    K = int(K)
    if c < 0 or K < 0:
        raise DomainError("eventually-zero sequence needs c >= 0 and K >= 0")
    cf = float(c)

    def values(start, stop):
        n = np.arange(start, stop)
        return np.where(n <= K, cf, 0.0)

    return BSequence("eventually_zero", values, _cauchy(lambda q: max(1, K), f"max(1,{K})"),
                     c * K, {"c": cf, "K": K})


def zero() -> BSequence:
    return eventually_zero(0, 0)


@dataclass(frozen=True)
class RecurrenceInstance:
    """``a_1 = a1``, ``a_{n+1} = (1 - lambda_{n+1}) a_n + b_n`` with ``a_n <= D``."""

    lam: Schedule
    b: BSequence
    a1: float
    D: int

    @classmethod
    def with_bound(cls, lam: Schedule, b: BSequence, a1: float) -> "RecurrenceInstance":
        """Use D = ceil(a1 + sum b_n), the boundedness bound for such sequences."""
        D = max(1, ceil_fraction(to_fraction(a1) + b.total))
        return cls(lam, b, float(a1), D)

    def describe(self) -> dict:
        return {"lambda": self.lam.name, "b": {"kind": self.b.kind, **self.b.params},
                "a1": self.a1, "D": self.D}


def simulate_recurrence(inst: RecurrenceInstance, horizon: int, backend=None) -> np.ndarray:
    """``a_1 .. a_horizon``; entry i of the result is a_{i+1}."""
    horizon = int(horizon)
    if horizon < 1:
        raise PreconditionError("horizon must be >= 1")
    lam_next = inst.lam.lam_array(2, horizon + 1)
    b = inst.b.values(1, horizon)
    return _kernels.recurrence(lam_next, b, inst.a1, backend)


def check_product_bound(inst: RecurrenceInstance, n: int, m: int, tol: float = 1e-9,
                        a: Optional[np.ndarray] = None) -> CheckResult:
    """Test ``a_{n+m} <= prod_{j=n}^{n+m-1}(1 - lambda_{j+1}) a_n + sum_{j=n}^{n+m-1} b_j``."""
    n, m = int(n), int(m)
    if n < 1 or m < 1:
        raise PreconditionError("n and m must be >= 1")
    if a is None:
        a = simulate_recurrence(inst, n + m)
    if a.shape[0] < n + m:
        raise PreconditionError(f"simulation too short for n + m = {n + m}")
    factors = 1.0 - inst.lam.lam_array(n + 1, n + m + 1)
    prod = float(np.prod(factors))
    tail = math.fsum(inst.b.values(n, n + m).tolist())
    lhs = float(a[n + m - 1])
    rhs = prod * float(a[n - 1]) + tail
    return CheckResult(f"product_bound[n={n},m={m}]", lhs <= rhs + tol * (1.0 + abs(rhs)),
                       {"lhs": lhs, "rhs": rhs})


def check_h_bound(inst: RecurrenceInstance, gamma: Optional[ModulusFn] = None,
                  delta: Optional[ModulusFn] = None, eps_grid: Sequence = (1, 0.5, 0.1, 0.01),
                  horizon: int = 100_000, backend=None) -> VerificationReport:
    """For each eps with ``h = h_liu(gamma, delta, D, eps) <= horizon``, test a_n < eps on [h, horizon].

    ``gamma`` and ``delta`` default to the instance's own moduli.
    """
    gamma = gamma or inst.b.gamma
    if delta is None:
        delta = moduli_of(inst.lam)[2] if inst.lam.theta is None else inst.lam.theta
    a = simulate_recurrence(inst, horizon, backend)
    report = VerificationReport("h_bound")
    desc = inst.describe()
    bound = inst.a1 + float(inst.b.total)
    report.add("bounded_by_a1_plus_sum_b", bool(np.max(a) <= bound + 1e-9),
               max_a=float(np.max(a)), bound=bound, instance=desc)
    report.add("bounded_by_D", bool(np.max(a) <= inst.D + 1e-9), max_a=float(np.max(a)), D=inst.D)
    for eps in eps_grid:
        name = f"h[eps={float(eps):g}]"
        try:
            h = h_liu(gamma, delta, inst.D, eps)
        except DomainError as exc:
            report.add(name, False, error=str(exc), instance=desc)
            continue
        if h > horizon:
            report.add(name, True, truncated=True, h=h.decimal, log10_h=h.log10_view,
                       instance=desc)
            continue
        tail = a[h - 1:]
        k = int(np.argmax(tail))
        report.add(name, bool(tail[k] < float(eps)), h=int(h), max_index_checked=horizon,
                   worst_n=int(h) + k, worst_a=float(tail[k]), instance=desc)
    return report


def cesaro_path(op: NonexpansiveOp, x, n: int) -> np.ndarray:
    """Row k is (1/(k+1)) sum_{i<=k} T^i x, for k = 0..n.

    Powers come from repeated multiplication by the operator's matrix and
    are summed with compensated running sums per coordinate.
    """
    if not op.linear:
        raise PreconditionError(f"{op.label} is not linear; the Cesaro identity needs a linear map")
    A = op.matrix
    y = np.array(op._check(x), dtype=float)
    powers = np.empty((int(n) + 1, y.size))
    for i in range(int(n) + 1):
        powers[i] = y
        y = A @ y
    sums = np.column_stack([_kernels.prefix_sums(powers[:, j])[1:] for j in range(y.size)])
    return sums / np.arange(1, int(n) + 2, dtype=float)[:, None]


def cesaro_oracle(op: NonexpansiveOp, x, n: int) -> np.ndarray:
    return cesaro_path(op, x, n)[-1]


def random_instance(rng: np.random.Generator) -> RecurrenceInstance:
    """Draw lambda from {constant, harmonic, inverse_sqrt} and b from {geometric, eventually-zero}."""
    pick = int(rng.integers(3))
    if pick == 0:
        lam = constant(round(float(rng.uniform(0.05, 1.0)), 3))
    elif pick == 1:
        lam = harmonic()
    else:
        lam = inverse_sqrt()
    if rng.random() < 0.5:
        b = geometric(round(float(rng.uniform(0.0, 2.0)), 3), round(float(rng.uniform(0.05, 0.95)), 3))
    else:
        b = eventually_zero(round(float(rng.uniform(0.0, 0.5)), 3), int(rng.integers(0, 40)))
    return RecurrenceInstance.with_bound(lam, b, round(float(rng.uniform(0.0, 3.0)), 3))


def oracle_sweep(n_instances: int = 100, seed: int = 0, eps_grid=(1, 0.5, 0.1, 0.01),
                 horizon: int = 100_000, product_pairs: int = 5) -> VerificationReport:
    """Randomized h-bound and product-bound checks over seeded instances."""
    rng = np.random.default_rng(seed)
    report = VerificationReport(f"oracle_sweep[seed={seed},n={n_instances}]")
    for i in range(int(n_instances)):
        inst = random_instance(rng)
        rep = check_h_bound(inst, eps_grid=eps_grid, horizon=horizon)
        report.extend(rep, prefix=f"instance{i}")
        a = simulate_recurrence(inst, 2000)
        for _ in range(product_pairs):
            n = int(rng.integers(1, 1000))
            m = int(rng.integers(1, 1000))
            res = check_product_bound(inst, n, m, 1e-9, a)
            report.add(f"instance{i}/{res.name}", res.passed, **res.detail)
    return report
