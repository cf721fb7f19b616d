"""Fixed-point encoding of reals and centered embedding into Z_N.

Values travel through the encrypted pipeline as signed integers ``raw``
standing for ``raw / 2**scale_exp``.  The scale exponent is plaintext
metadata carried next to each wire; it never enters the ring itself.
"""

from __future__ import annotations

import math
from dataclasses import dataclass
from fractions import Fraction

DEFAULT_PRECISION = 40


class BudgetOverflow(ValueError):
    """A wire's magnitude bound would reach N/2, so it could not be decoded."""


@dataclass(frozen=True)
class FixedPointValue:
    raw: int
    scale_exp: int

    def __add__(self, other: FixedPointValue) -> FixedPointValue:
        if self.scale_exp != other.scale_exp:
            raise ValueError("scale mismatch: %d vs %d" % (self.scale_exp, other.scale_exp))
        return FixedPointValue(self.raw + other.raw, self.scale_exp)

    def __mul__(self, other: FixedPointValue) -> FixedPointValue:
        return FixedPointValue(self.raw * other.raw, self.scale_exp + other.scale_exp)

    def __float__(self) -> float:
        return decode(self)


def _round_half_away(q: Fraction) -> int:
    floor = q.numerator // q.denominator
    rem = q - floor
    if rem > Fraction(1, 2) or (rem == Fraction(1, 2) and q > 0):
        return floor + 1
    return floor


def encode_int(x: float | int | Fraction, scale_exp: int = DEFAULT_PRECISION) -> int:
    """Return ``round_half_away_from_zero(x * 2**scale_exp)`` computed exactly."""
    if scale_exp < 0:
        raise ValueError("scale exponent must be non-negative")
    if isinstance(x, float) and not math.isfinite(x):
        raise ValueError("cannot encode non-finite value %r" % x)
    q = Fraction(x) * (1 << scale_exp)
    return _round_half_away(q)


def encode(x: float | int | Fraction, scale_exp: int = DEFAULT_PRECISION) -> FixedPointValue:
    return FixedPointValue(encode_int(x, scale_exp), scale_exp)


def decode(v: FixedPointValue) -> float:
    # int / int is correctly rounded in CPython, even for huge operands
    return v.raw / (1 << v.scale_exp)


def decode_raw(raw: int, scale_exp: int) -> float:
    return raw / (1 << scale_exp)


def to_ring(z: int, n: int) -> int:
    """Embed a signed integer into Z_n; requires |z| < n/2."""
    if 2 * abs(z) >= n:
        raise BudgetOverflow("|%d| does not fit below N/2 for the given modulus" % z)
    return z % n


def from_ring(w: int, n: int) -> int:
    """Centered representative of ``w`` in [-n/2, n/2)."""
    if not 0 <= w < n:
        raise ValueError("ring element out of range [0, N)")
    return w - n if 2 * w >= n else w


@dataclass(frozen=True)
class MagnitudeBudget:
    """Proven upper bound on |raw| for one wire."""

    bound: int

    def __post_init__(self) -> None:
        if self.bound < 0:
            raise ValueError("bound must be non-negative")

    def __add__(self, other: MagnitudeBudget) -> MagnitudeBudget:
        return MagnitudeBudget(self.bound + other.bound)

    def __mul__(self, other: MagnitudeBudget) -> MagnitudeBudget:
        return MagnitudeBudget(self.bound * other.bound)

    def scaled(self, c: int) -> MagnitudeBudget:
        return MagnitudeBudget(self.bound * abs(c))

    def fits(self, n: int) -> bool:
        return 2 * self.bound < n

    def check(self, n: int) -> MagnitudeBudget:
        if not self.fits(n):
            raise BudgetOverflow(
                "magnitude bound of %d bits reaches N/2 (N has %d bits)"
                % (self.bound.bit_length(), n.bit_length())
            )
        return self
