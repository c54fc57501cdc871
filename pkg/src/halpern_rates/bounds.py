"""Certified rates of asymptotic regularity for Halpern iterations.

Every function returns a :class:`~halpern_rates.exact.BoundIndex` N such
that ``||x_n - T x_n|| < eps`` (or ``a_n < eps`` for :func:`h_liu`) for all
n >= N, provided the moduli passed in are honest. All arithmetic is exact;
``ceil(ln q)`` is decided by a correctly rounded comparison of ``e**k``
against the rational ``q``.
"""

from __future__ import annotations

from fractions import Fraction

from .errors import DomainError, ModulusKindError, PreconditionError
from .exact import BoundIndex, ceil_fraction, ceil_ln, to_fraction
from .moduli import ModulusFn, ModulusKind, Schedule, moduli_of

__all__ = [
    "phi_general",
    "phi_bounded",
    "psi_decreasing",
    "phi_harmonic",
    "h_liu",
    "gap_modulus",
    "bound_M",
    "certify_schedule",
]


def _eps(eps) -> Fraction:
    try:
        q = to_fraction(eps)
    except (TypeError, ValueError) as exc:
        raise DomainError(f"eps must be a real number, got {eps!r}") from exc
    if not 0 < q < 2:
        raise DomainError(f"eps must lie in (0, 2), got {eps!r}")
    return q


def _positive_int(value, name) -> int:
    if isinstance(value, bool) or int(value) != value or value < 1:
        raise DomainError(f"{name} must be a positive integer, got {value!r}")
    return int(value)


def _expect(modulus: ModulusFn, kind: ModulusKind, role: str) -> None:
    if not isinstance(modulus, ModulusFn) or modulus.kind is not kind:
        got = getattr(getattr(modulus, "kind", None), "value", type(modulus).__name__)
        raise ModulusKindError(f"{role} must be a {kind.value}, got {got}")
    if kind is ModulusKind.RATE_OF_CONVERGENCE and modulus.limit != 0:
        raise ModulusKindError(
            f"{role} converges to {modulus.limit}, but the step sizes must tend to 0")


def bound_M(d_C) -> int:
    """Smallest M in N* with M >= 3 d_C."""
    d = to_fraction(d_C)
    if d < 0:
        raise DomainError(f"d_C must be >= 0, got {d_C!r}")
    return max(1, ceil_fraction(3 * d))


def h_liu(gamma: ModulusFn, delta: ModulusFn, D, eps) -> BoundIndex:
    """``delta(gamma(eps/2) + 1 + ceil(ln(2D/eps)))``.

    Bounds ``a_n`` for nonnegative sequences with
    ``a_{n+1} <= (1 - lambda_{n+1}) a_n + b_n``, ``a_n <= D``, where
    ``gamma`` is a Cauchy modulus of the partial sums of ``b`` and ``delta``
    a rate of divergence of ``sum lambda_n``.
    """
    q = _eps(eps)
    D = _positive_int(D, "D")
    _expect(gamma, ModulusKind.CAUCHY_MODULUS, "gamma")
    _expect(delta, ModulusKind.RATE_OF_DIVERGENCE, "delta")
    start = int(gamma(q / 2)) + 1 + ceil_ln(2 * D / q)
    return delta(start)


def gap_modulus(beta: ModulusFn, M: int) -> ModulusFn:
    """Cauchy modulus of ``sum 2M |lambda_{n+1} - lambda_n|``: eps -> beta(eps/2M)."""
    return beta.rescaled(Fraction(1, 2 * M), label=f"{beta.label}(eps/{2 * M})")


def phi_general(alpha: ModulusFn, beta: ModulusFn, theta: ModulusFn, M, eps) -> BoundIndex:
    """``max{theta(beta(eps/8M) + 1 + ceil(ln(8M/eps))), alpha(eps/4M)}``.

    Built as the two-part argument it comes from: the step gaps
    ``||x_n - x_{n-1}||`` satisfy the recurrence bounded by :func:`h_liu`
    with ``D = 2M`` and are pushed below eps/2, while ``2M lambda_n`` drops
    below eps/2 after ``alpha(eps/4M)``.
    """
    q = _eps(eps)
    M = _positive_int(M, "M")
    _expect(alpha, ModulusKind.RATE_OF_CONVERGENCE, "alpha")
    _expect(beta, ModulusKind.CAUCHY_MODULUS, "beta")
    _expect(theta, ModulusKind.RATE_OF_DIVERGENCE, "theta")
    h1 = h_liu(gap_modulus(beta, M), theta, 2 * M, q / 2)
    h2 = alpha(q / (4 * M))
    return BoundIndex(max(h1, h2))


def phi_bounded(alpha: ModulusFn, beta: ModulusFn, theta: ModulusFn, d_C, eps) -> BoundIndex:
    """:func:`phi_general` with ``M = max(1, ceil(3 d_C))`` for a domain of norm radius d_C."""
    _eps(eps)
    return phi_general(alpha, beta, theta, bound_M(d_C), eps)


def psi_decreasing(alpha: ModulusFn, theta: ModulusFn, M, eps, schedule: Schedule | None = None) -> BoundIndex:
    """:func:`phi_general` with ``beta := alpha``, valid for decreasing step sizes."""
    if schedule is not None and not schedule.decreasing:
        raise PreconditionError(f"schedule {schedule.name!r} is not declared decreasing")
    _expect(alpha, ModulusKind.RATE_OF_CONVERGENCE, "alpha")
    beta = ModulusFn(ModulusKind.CAUCHY_MODULUS, alpha.rule, alpha.label, certified=alpha.certified)
    return phi_general(alpha, beta, theta, M, eps)


def phi_harmonic(d_C, eps) -> BoundIndex:
    """``4**ceil(16M/eps + 3)`` for lambda_n = 1/n, with ``M = max(1, ceil(3 d_C))``.

    The exponent is rounded up so the index is a natural number no smaller
    than ``exp(ln 4 * (16M/eps + 3))``.
    """
    q = _eps(eps)
    M = bound_M(d_C)
    return BoundIndex(4 ** ceil_fraction(16 * M / q + 3))


def certify_schedule(schedule: Schedule, M, eps) -> BoundIndex:
    """The tightest bound available from a schedule's own moduli."""
    alpha, beta, theta = moduli_of(schedule)
    if schedule.decreasing and schedule.beta is None:
        return psi_decreasing(alpha, theta, M, eps, schedule)
    return phi_general(alpha, beta, theta, M, eps)
