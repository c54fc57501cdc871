"""Step-size schedules and their quantitative moduli.

Three kinds of modulus appear in the certified bounds:

* rate of convergence ``alpha``: ``|lambda_n - L| < eps`` for all ``n >= alpha(eps)``;
* Cauchy modulus ``beta`` of ``s_n = sum_{i<=n} |lambda_{i+1} - lambda_i|``:
  ``s_{beta(eps)+n} - s_{beta(eps)} < eps`` for all ``n >= 1``;
* rate of divergence ``theta``: ``sum_{i<=theta(n)} lambda_i >= n``.

Built-in schedules carry closed-form moduli evaluated in exact rational
arithmetic. Custom schedules must bring their own; :func:`verify_moduli`
scans the defining inequalities up to a finite horizon.
"""

from __future__ import annotations

import enum
import math
from dataclasses import dataclass, field, replace
from fractions import Fraction
from typing import Callable, Optional, Sequence

import numpy as np

from . import _kernels
from .errors import DomainError, MissingModulusError, ScheduleDomainError
from .exact import BoundIndex, ceil_fraction, to_fraction
from .report import VerificationReport

__all__ = [
    "ModulusKind",
    "ModulusFn",
    "ScheduleKind",
    "Schedule",
    "harmonic",
    "shifted_harmonic",
    "inverse_sqrt",
    "constant",
    "custom",
    "lambda_at",
    "alpha_of",
    "beta_of",
    "theta_of",
    "verify_moduli",
    "BUILTIN_SCHEDULES",
]


class ModulusKind(str, enum.Enum):
    RATE_OF_CONVERGENCE = "rate_of_convergence"
    CAUCHY_MODULUS = "cauchy_modulus"
    RATE_OF_DIVERGENCE = "rate_of_divergence"

    @property
    def takes_eps(self) -> bool:
        return self is not ModulusKind.RATE_OF_DIVERGENCE


@dataclass(frozen=True)
class ModulusFn:
    """A map from an accuracy (or a target sum) to an index in N*.

    ``rule`` receives an exact :class:`~fractions.Fraction` for the eps-kinds
    and a positive ``int`` for rates of divergence, and must return an int.
    ``limit`` is the value a rate of convergence converges to; the
    asymptotic-regularity bounds only accept ``limit == 0``.
    """

    kind: ModulusKind
    rule: Callable = field(compare=False)
    label: str = ""
    limit: Fraction = Fraction(0)
    certified: bool = False

    def __call__(self, arg) -> BoundIndex:
        if self.kind.takes_eps:
            q = to_fraction(arg)
            if q <= 0:
                raise DomainError(f"{self.kind.value} needs eps > 0, got {arg!r}")
            value = self.rule(q)
        else:
            if isinstance(arg, bool) or int(arg) != arg or arg < 1:
                raise DomainError(f"rate of divergence needs an integer n >= 1, got {arg!r}")
            value = self.rule(int(arg))
        if value < 1:
            raise DomainError(f"modulus {self.label or self.kind.value} returned {value} < 1")
        return BoundIndex(value)

    def rescaled(self, factor, label: str | None = None) -> "ModulusFn":
        """``eps -> self(factor * eps)``, same kind (eps-kinds only)."""
        if not self.kind.takes_eps:
            raise TypeError("only eps-indexed moduli can be rescaled")
        factor = to_fraction(factor)
        inner = self.rule
        return replace(self, rule=lambda q: inner(q * factor),
                       label=label or f"{self.label}(eps*{factor})")


def _convergence(rule, label, limit=0, certified=True):
    return ModulusFn(ModulusKind.RATE_OF_CONVERGENCE, rule, label, Fraction(limit), certified)


def _divergence(rule, label, certified=True):
    return ModulusFn(ModulusKind.RATE_OF_DIVERGENCE, rule, label, certified=certified)


def _as_cauchy(alpha: ModulusFn) -> ModulusFn:
    return ModulusFn(ModulusKind.CAUCHY_MODULUS, alpha.rule, alpha.label, certified=alpha.certified)


class ScheduleKind(str, enum.Enum):
    HARMONIC = "harmonic"
    SHIFTED_HARMONIC = "shifted_harmonic"
    INVERSE_SQRT = "inverse_sqrt"
    CONSTANT = "constant"
    CUSTOM = "custom"


@dataclass(frozen=True)
class Schedule:
    """A step-size sequence (lambda_n)_{n>=1} in [0, 1].

    Attached ``alpha``/``beta``/``theta`` override the built-in moduli.
    """

    kind: ScheduleKind
    c: Optional[Fraction] = None
    generator: Optional[Callable] = field(default=None, compare=False)
    vectorized: bool = False
    alpha: Optional[ModulusFn] = None
    beta: Optional[ModulusFn] = None
    theta: Optional[ModulusFn] = None
    decreasing: bool = False
    name: str = ""

    def __post_init__(self):
        if not self.name:
            label = self.kind.value if self.c is None else f"{self.kind.value}({float(self.c):g})"
            object.__setattr__(self, "name", label)

    def lam(self, n: int) -> float:
        if n < 1:
            raise DomainError(f"step sizes are indexed from 1, got n={n}")
        if self.kind is ScheduleKind.HARMONIC:
            return 1.0 / n
        if self.kind is ScheduleKind.SHIFTED_HARMONIC:
            return 1.0 / (n + 1)
        if self.kind is ScheduleKind.INVERSE_SQRT:
            return 1.0 / math.sqrt(n)
        if self.kind is ScheduleKind.CONSTANT:
            return float(self.c)
        value = float(self.generator(n))
        if not 0.0 <= value <= 1.0:
            raise ScheduleDomainError(f"{self.name}: lambda_{n} = {value!r} is outside [0, 1]")
        return value

    def lam_array(self, start: int, stop: int) -> np.ndarray:
        """``[lambda_start, ..., lambda_{stop-1}]`` as float64."""
        if start < 1:
            raise DomainError(f"step sizes are indexed from 1, got start={start}")
        n = np.arange(start, max(start, stop), dtype=np.float64)
        if self.kind is ScheduleKind.HARMONIC:
            return 1.0 / n
        if self.kind is ScheduleKind.SHIFTED_HARMONIC:
            return 1.0 / (n + 1.0)
        if self.kind is ScheduleKind.INVERSE_SQRT:
            return 1.0 / np.sqrt(n)
        if self.kind is ScheduleKind.CONSTANT:
            return np.full(n.shape, float(self.c))
        if self.vectorized:
            values = np.asarray(self.generator(n.astype(np.int64)), dtype=np.float64)
            values = np.broadcast_to(values, n.shape).copy()
        else:
            values = np.fromiter((self.generator(k) for k in range(start, max(start, stop))),
                                 dtype=np.float64, count=n.shape[0])
        bad = ~((values >= 0.0) & (values <= 1.0))
        if bad.any():
            k = int(np.argmax(bad))
            raise ScheduleDomainError(
                f"{self.name}: lambda_{start + k} = {values[k]!r} is outside [0, 1]")
        return values

    def with_moduli(self, alpha=None, beta=None, theta=None, decreasing=None) -> "Schedule":
        return replace(
            self,
            alpha=alpha or self.alpha,
            beta=beta or self.beta,
            theta=theta or self.theta,
            decreasing=self.decreasing if decreasing is None else decreasing,
        )


def harmonic() -> Schedule:
    """lambda_n = 1/n."""
    return Schedule(ScheduleKind.HARMONIC, decreasing=True)


def shifted_harmonic() -> Schedule:
    """lambda_n = 1/(n+1); Halpern iterates of a linear map are Cesaro means."""
    return Schedule(ScheduleKind.SHIFTED_HARMONIC, decreasing=True)


def inverse_sqrt() -> Schedule:
    """lambda_n = 1/sqrt(n)."""
    return Schedule(ScheduleKind.INVERSE_SQRT, decreasing=True)


def constant(c) -> Schedule:
    c = to_fraction(c)
    if not 0 <= c <= 1:
        raise ScheduleDomainError(f"constant step {float(c)!r} is outside [0, 1]")
    return Schedule(ScheduleKind.CONSTANT, c=c, decreasing=True)


def custom(generator, alpha=None, beta=None, theta=None, decreasing=False,
           name="custom", vectorized=False) -> Schedule:
    """A user-defined schedule. Its moduli are trusted as declared."""
    return Schedule(ScheduleKind.CUSTOM, generator=generator, vectorized=vectorized,
                    alpha=alpha, beta=beta, theta=theta, decreasing=decreasing, name=name)


BUILTIN_SCHEDULES = {
    "harmonic": harmonic,
    "shifted_harmonic": shifted_harmonic,
    "inverse_sqrt": inverse_sqrt,
}


def _pow4(n: int) -> int:
    return 4 ** n


def _builtin_alpha(s: Schedule) -> Optional[ModulusFn]:
    k = s.kind
    if k is ScheduleKind.HARMONIC:
        return _convergence(lambda q: ceil_fraction(1 / q) + 1, "ceil(1/eps)+1")
    if k is ScheduleKind.SHIFTED_HARMONIC:
        # 1/(n+1) < eps once n >= 1/eps
        return _convergence(lambda q: max(1, ceil_fraction(1 / q)), "max(1,ceil(1/eps))")
    if k is ScheduleKind.INVERSE_SQRT:
        return _convergence(lambda q: ceil_fraction(1 / (q * q)) + 1, "ceil(1/eps^2)+1")
    if k is ScheduleKind.CONSTANT:
        return _convergence(lambda q: 1, "1", limit=s.c)
    return None


def _builtin_theta(s: Schedule) -> Optional[ModulusFn]:
    k = s.kind
    if k in (ScheduleKind.HARMONIC, ScheduleKind.SHIFTED_HARMONIC):
        return _divergence(_pow4, "4^n")
    if k is ScheduleKind.INVERSE_SQRT:
        # sum_{i<=N} i^-1/2 >= 2(sqrt(N+1) - 1)
        return _divergence(lambda n: ceil_fraction((Fraction(n, 2) + 1) ** 2), "ceil((n/2+1)^2)")
    if k is ScheduleKind.CONSTANT and s.c > 0:
        c = s.c
        return _divergence(lambda n: ceil_fraction(n / c), f"ceil(n/{c})")
    return None


def lambda_at(schedule: Schedule, n: int) -> float:
    return schedule.lam(n)


def _alpha_modulus(schedule: Schedule) -> ModulusFn:
    alpha = schedule.alpha or _builtin_alpha(schedule)
    if alpha is None:
        raise MissingModulusError(f"schedule {schedule.name!r} has no rate of convergence (alpha)")
    return alpha


def _beta_modulus(schedule: Schedule) -> ModulusFn:
    if schedule.beta is not None:
        return schedule.beta
    if schedule.decreasing:
        try:
            return _as_cauchy(_alpha_modulus(schedule))
        except MissingModulusError:
            pass
    raise MissingModulusError(
        f"schedule {schedule.name!r} has no Cauchy modulus (beta) and no alpha to derive one from")


def _theta_modulus(schedule: Schedule) -> ModulusFn:
    theta = schedule.theta or _builtin_theta(schedule)
    if theta is None:
        raise MissingModulusError(f"schedule {schedule.name!r} has no rate of divergence (theta)")
    return theta


def moduli_of(schedule: Schedule) -> tuple[ModulusFn, ModulusFn, ModulusFn]:
    """(alpha, beta, theta) as modulus objects; raises if any is missing."""
    return _alpha_modulus(schedule), _beta_modulus(schedule), _theta_modulus(schedule)


def alpha_of(schedule: Schedule, eps) -> BoundIndex:
    return _alpha_modulus(schedule)(eps)


def beta_of(schedule: Schedule, eps) -> BoundIndex:
    """Cauchy modulus of the total-variation sums.

    A decreasing schedule with no explicit beta uses beta := alpha, since then
    ``s_{m+n} - s_m = lambda_{m+1} - lambda_{m+n+1} <= lambda_{m+1}``.
    """
    return _beta_modulus(schedule)(eps)


def theta_of(schedule: Schedule, n: int) -> BoundIndex:
    return _theta_modulus(schedule)(n)


def verify_moduli(schedule: Schedule, horizon: int, eps_grid: Sequence = (),
                  max_n: Optional[int] = None) -> VerificationReport:
    """Scan the three modulus definitions on ``lambda_1..lambda_{horizon+1}``.

    Divergence is checked for every n with ``theta(n) <= horizon`` (or up to
    ``max_n``); the first n beyond the horizon is reported as truncated.
    """
    report = VerificationReport(f"moduli[{schedule.name}]")
    horizon = int(horizon)
    try:
        lam = schedule.lam_array(1, horizon + 2)
    except ScheduleDomainError as exc:
        report.add("lambda_in_unit_interval", False, error=str(exc))
        return report
    report.add("lambda_in_unit_interval", True, checked_up_to=horizon + 1)

    if schedule.decreasing:
        rises = np.nonzero(lam[1:] > lam[:-1])[0]
        report.add("decreasing", rises.size == 0,
                   **({"first_increase_at": int(rises[0]) + 1} if rises.size else {}))

    lam_h = lam[:horizon]  # lambda_1 .. lambda_H

    try:
        alpha = _alpha_modulus(schedule)
    except MissingModulusError as exc:
        alpha = None
        report.add("rate_of_convergence", True, skipped=str(exc))
    if alpha is not None:
        limit = float(alpha.limit)
        dev = np.abs(lam_h - limit)
        for eps in eps_grid:
            a = int(alpha(eps))
            name = f"rate_of_convergence[eps={float(eps):g}]"
            if a > horizon:
                report.add(name, True, truncated=True, index=a)
                continue
            tail = dev[a - 1:]
            k = int(np.argmax(tail))
            report.add(name, bool(tail[k] < float(eps)), index=a,
                       worst_n=a + k, worst_gap=float(tail[k]))

    try:
        beta = _beta_modulus(schedule)
    except MissingModulusError as exc:
        beta = None
        report.add("cauchy_modulus", True, skipped=str(exc))
    if beta is not None:
        s = _kernels.prefix_sums(np.abs(np.diff(lam)))  # s[k] = s_k, k <= horizon
        for eps in eps_grid:
            b = int(beta(eps))
            name = f"cauchy_modulus[eps={float(eps):g}]"
            if b + 1 > horizon:
                report.add(name, True, truncated=True, index=b)
                continue
            moves = s[b + 1:] - s[b]
            k = int(np.argmax(moves))
            report.add(name, bool(moves[k] < float(eps)), index=b,
                       worst_n=k + 1, worst_move=float(moves[k]))

    try:
        theta = _theta_modulus(schedule)
    except MissingModulusError as exc:
        report.add("rate_of_divergence", True, skipped=str(exc))
        return report

    sums = _kernels.prefix_sums(lam_h)  # sums[k] = lambda_1 + ... + lambda_k
    n = 1
    n_checked = 0
    failures = []
    below_identity = []
    truncated_at = None
    while n <= horizon and (max_n is None or n <= max_n):
        t = int(theta(n))
        if t < n:
            below_identity.append(n)
        if t > horizon:
            truncated_at = n
            break
        if not sums[t] >= n:
            failures.append((n, t, float(sums[t])))
        n_checked += 1
        n += 1
    detail = {"n_checked": n_checked, "max_n": n_checked}
    if failures:
        n0, t0, s0 = failures[0]
        detail.update(n_failures=len(failures), first_failure_n=n0, theta=t0, partial_sum=s0)
    report.add("rate_of_divergence", not failures, **detail)
    if truncated_at is not None:
        report.add("rate_of_divergence[beyond_horizon]", True, truncated=True,
                   first_unchecked_n=truncated_at)
    report.add("theta_dominates_identity", not below_identity,
               **({"first_n": below_identity[0]} if below_identity else {}))
    return report
