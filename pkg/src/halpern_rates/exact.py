"""Exact rational helpers and the arbitrary-precision index type.

Every certified index is produced from rationals, so floating error never
makes an index smaller than the true value.
"""

from __future__ import annotations

import math
import sys
from decimal import Decimal, localcontext
from fractions import Fraction
from numbers import Rational

__all__ = [
    "BoundIndex",
    "to_fraction",
    "ceil_fraction",
    "ceil_ln",
    "exp_at_least",
]


def to_fraction(value) -> Fraction:
    """Convert ``value`` to the exact rational it denotes.

    Floats convert to their exact binary value, strings are parsed as
    decimals (``"0.1"`` is exactly 1/10).
    """
    if isinstance(value, bool):
        raise TypeError("booleans are not numbers here")
    if isinstance(value, Fraction):
        return value
    if isinstance(value, (int, Rational)):
        return Fraction(value)
    if isinstance(value, float):
        if not math.isfinite(value):
            raise ValueError(f"non-finite value {value!r}")
        return Fraction(value)
    if isinstance(value, (str, Decimal)):
        return Fraction(value)
    # numpy scalars and the like
    return to_fraction(float(value))


def ceil_fraction(q: Fraction) -> int:
    return -((-q.numerator) // q.denominator)


def exp_at_least(k: int, q: Fraction) -> bool:
    """Decide ``e**k >= q`` exactly for integer k and rational q > 0.

    ``e**k`` is irrational unless k == 0, so the two never tie for k != 0
    and raising the working precision always terminates.
    """
    if k == 0:
        return q <= 1
    prec = 50
    while True:
        with localcontext() as ctx:
            ctx.prec = prec
            # exp and division are correctly rounded in decimal
            e = Decimal(k).exp()
            qd = Decimal(q.numerator) / Decimal(q.denominator)
            gap = e - qd
            scale = max(abs(e), abs(qd))
            if abs(gap) > scale.scaleb(4 - prec):
                return gap > 0
        prec *= 2


def ceil_ln(q) -> int:
    """Return the smallest integer k with k >= ln(q), for rational q > 0."""
    q = to_fraction(q)
    if q <= 0:
        raise ValueError("logarithm of a non-positive number")
    k = math.ceil(math.log(q.numerator) - math.log(q.denominator))
    while not exp_at_least(k, q):
        k += 1
    while exp_at_least(k - 1, q):
        k -= 1
    return k


class BoundIndex(int):
    """A certified iteration index: an exact natural number >= 1.

    Behaves as a plain ``int``; ``log10_view`` is for display only.
    """

    def __new__(cls, value):
        value = int(value)
        if value < 1:
            raise ValueError(f"a certified index must be >= 1, got {value}")
        return super().__new__(cls, value)

    @property
    def value(self) -> int:
        return int(self)

    @property
    def log10_view(self) -> float:
        return math.log10(int(self))

    @property
    def decimal(self) -> str:
        """Exact decimal digits, regardless of the interpreter's str limit."""
        n = int(self)
        if n.bit_length() < 10_000:
            return str(n)
        limit = getattr(sys, "get_int_max_str_digits", None)
        if limit is None:
            return str(n)
        old = sys.get_int_max_str_digits()
        try:
            sys.set_int_max_str_digits(0)
            return str(n)
        finally:
            sys.set_int_max_str_digits(old)

    def to_dict(self) -> dict:
        return {"value": self.decimal, "log10": self.log10_view}

    def __repr__(self) -> str:
        if int(self).bit_length() > 64:
            return f"BoundIndex(~10^{self.log10_view:.6f})"
        return f"BoundIndex({int(self)})"
