"""Test statistics as exact-integer circuits over additive shares.

Every division by a public quantity (n, n-1, k-1, ...) is cleared by
multiplying through, so each test reduces to a numerator/denominator pair of
shared integers carrying the same fixed-point scale.  The only interactive
"division" is the final masked-pair reveal, whose quotient is scale-free.

Square roots in t and r are taken in the clear: the circuits produce the
squared statistic plus a separate sign wire.
"""

from __future__ import annotations

import hashlib
import json
import math
from dataclasses import dataclass, field
from fractions import Fraction
from typing import Any, Sequence

from starcert.fixedpoint import DEFAULT_PRECISION, encode_int
from starcert.mpc.engine import AdditiveShare, DegenerateStatistic, Party
from starcert.pvalues import GREATER, LESS, SIDEDNESS, TWO_SIDED

TTEST = "TTEST"
PEARSON = "PEARSON"
CHISQ = "CHISQ"
FTEST = "FTEST"
TEST_IDS = (TTEST, PEARSON, CHISQ, FTEST)

PROBABILITY_TOLERANCE = 1e-12


class SpecError(ValueError):
    """A test request is malformed or inconsistent with the dataset."""


@dataclass(frozen=True)
class TestSpec:
    """A requested test: which statistic, on which columns.

    ``columns`` holds two attribute names for TTEST and PEARSON, one
    categorical attribute for CHISQ, and two or more for FTEST (one column
    per group).
    """

    __test__ = False  # not a pytest class

    test_id: str
    columns: tuple[str, ...]
    probabilities: tuple[float, ...] | None = None
    sidedness: str = TWO_SIDED

    def __post_init__(self) -> None:
        object.__setattr__(self, "columns", tuple(self.columns))
        if self.probabilities is not None:
            object.__setattr__(self, "probabilities", tuple(float(p) for p in self.probabilities))
        self.validate()

    def validate(self) -> None:
        if self.test_id not in TEST_IDS:
            raise SpecError("unknown test id %r" % (self.test_id,))
        if self.sidedness not in SIDEDNESS:
            raise SpecError("unknown sidedness %r" % (self.sidedness,))
        if not all(isinstance(c, str) and c for c in self.columns):
            raise SpecError("column selectors must be non-empty strings")
        need = {TTEST: 2, PEARSON: 2, CHISQ: 1}.get(self.test_id)
        if need is not None and len(self.columns) != need:
            raise SpecError("%s takes %d column(s), got %d" % (self.test_id, need, len(self.columns)))
        if self.test_id == FTEST and len(self.columns) < 2:
            raise SpecError("FTEST needs at least two group columns")
        if len(set(self.columns)) != len(self.columns):
            raise SpecError("duplicate column selector")
        if self.test_id in (CHISQ, FTEST) and self.sidedness != TWO_SIDED:
            raise SpecError("%s is always an upper-tail test" % self.test_id)
        if self.test_id == CHISQ:
            probs = self.probabilities
            if not probs or len(probs) < 2:
                raise SpecError("CHISQ needs null probabilities for k >= 2 categories")
            if any(not math.isfinite(p) or p <= 0 for p in probs):
                raise SpecError("null probabilities must be positive")
            if abs(math.fsum(probs) - 1.0) > PROBABILITY_TOLERANCE:
                raise SpecError("null probabilities sum to %r, not 1" % math.fsum(probs))
        elif self.probabilities is not None:
            raise SpecError("probabilities only apply to CHISQ")

    def to_json(self) -> dict[str, Any]:
        return {
            "columns": list(self.columns),
            "probabilities": list(self.probabilities) if self.probabilities is not None else None,
            "sidedness": self.sidedness,
            "test_id": self.test_id,
        }

    @classmethod
    def from_json(cls, obj: dict[str, Any]) -> TestSpec:
        if not isinstance(obj, dict) or "test_id" not in obj or "columns" not in obj:
            raise SpecError("a test spec needs 'test_id' and 'columns'")
        probs = obj.get("probabilities")
        return cls(obj["test_id"], tuple(obj["columns"]),
                   tuple(probs) if probs is not None else None,
                   obj.get("sidedness", TWO_SIDED))

    def canonical_bytes(self) -> bytes:
        return json.dumps(self.to_json(), sort_keys=True, separators=(",", ":"),
                          ensure_ascii=False, allow_nan=False).encode("utf-8")

    @property
    def spec_hash(self) -> str:
        return hashlib.sha256(self.canonical_bytes()).hexdigest()

    @property
    def sigma(self) -> str:
        """Test identifier as recorded on the log."""
        return "%s:%s" % (self.test_id, self.spec_hash)


@dataclass
class TestStatisticPair:
    """Shared numerator and denominator of one statistic.

    ``den`` is ``None`` when the denominator is the public constant 1.  For
    ``squared`` pairs the quotient is the square of the statistic and
    ``sign_wire`` carries its sign.
    """

    __test__ = False

    test_id: str
    num: AdditiveShare
    den: AdditiveShare | None
    squared: bool
    sign_wire: AdditiveShare | None = None
    n: int = 0
    k: int = 2

    def __post_init__(self) -> None:
        if self.den is not None and self.den.scale_exp != self.num.scale_exp:
            raise AssertionError("numerator and denominator scales differ (%d vs %d)"
                                 % (self.num.scale_exp, self.den.scale_exp))

    @property
    def scale_exp(self) -> int:
        return self.num.scale_exp


@dataclass
class Moments:
    """Shared sufficient statistics of one column: n, sum and sum of squares."""

    n: int
    total: AdditiveShare
    squares: AdditiveShare


@dataclass
class StatisticResult:
    test_id: str
    value: float
    squared_value: Fraction | None = None
    sign: int = 1
    n: int = 0
    k: int = 2
    extra: dict[str, Any] = field(default_factory=dict)


# ---------------------------------------------------------------------------
# building blocks


def column_moments(party: Party, cells: Sequence[AdditiveShare]) -> Moments:
    """Sum and sum of squares of a shared column (one Beaver triple per cell)."""
    cells = list(cells)
    squares = party.mul(cells, cells)
    return Moments(len(cells), party.sum(cells), party.sum(squares))


def columns_moments(party: Party, columns: Sequence[Sequence[AdditiveShare]]) -> list[Moments]:
    """Moments of several columns with a single opening round."""
    flat = [c for col in columns for c in col]
    squares = party.mul(flat, flat)
    out, pos = [], 0
    for col in columns:
        m = len(col)
        out.append(Moments(m, party.sum(list(col)), party.sum(squares[pos:pos + m])))
        pos += m
    return out


# ---------------------------------------------------------------------------
# circuits


def ttest_from_moments(party: Party, mx: Moments, my: Moments) -> TestStatisticPair:
    """Two-sample t on equal-size columns.

    num = (n-1)(Sx-Sy)^2, den = n(Qx+Qy) - Sx^2 - Sy^2, so num/den = t^2.
    """
    n = mx.n
    if my.n != n:
        raise SpecError("t-test needs equal-length columns")
    if n < 2:
        raise SpecError("t-test needs n >= 2")
    diff = party.sub(mx.total, my.total)
    d2, sx2, sy2 = party.mul([diff, mx.total, my.total], [diff, mx.total, my.total])
    num = party.const_mult(d2, n - 1)
    den = party.sub(party.const_mult(party.add(mx.squares, my.squares), n), party.add(sx2, sy2))
    return TestStatisticPair(TTEST, num, den, squared=True, sign_wire=diff, n=n)


def ttest_circuit(party: Party, x: Sequence[AdditiveShare], y: Sequence[AdditiveShare]) -> TestStatisticPair:
    if len(x) != len(y):
        raise SpecError("t-test needs equal-length columns")
    mx, my = columns_moments(party, [x, y])
    return ttest_from_moments(party, mx, my)


def pearson_from_moments(party: Party, mx: Moments, my: Moments, cross: AdditiveShare) -> TestStatisticPair:
    """Correlation with C = n*Sxy - Sx*Sy: num = C^2, den = (nQx - Sx^2)(nQy - Sy^2)."""
    n = mx.n
    if my.n != n:
        raise SpecError("correlation needs equal-length columns")
    if n < 3:
        raise SpecError("correlation needs n >= 3")
    sxsy, sx2, sy2 = party.mul([mx.total, mx.total, my.total], [my.total, mx.total, my.total])
    c = party.sub(party.const_mult(cross, n), sxsy)
    vx = party.sub(party.const_mult(mx.squares, n), sx2)
    vy = party.sub(party.const_mult(my.squares, n), sy2)
    num, den = party.mul([c, vx], [c, vy])
    return TestStatisticPair(PEARSON, num, den, squared=True, sign_wire=c, n=n)


def pearson_circuit(party: Party, x: Sequence[AdditiveShare], y: Sequence[AdditiveShare]) -> TestStatisticPair:
    x, y = list(x), list(y)
    if len(x) != len(y):
        raise SpecError("correlation needs equal-length columns")
    m = len(x)
    prods = party.mul(x + y + x, x + y + y)
    mx = Moments(m, party.sum(x), party.sum(prods[:m]))
    my = Moments(m, party.sum(y), party.sum(prods[m:2 * m]))
    return pearson_from_moments(party, mx, my, party.sum(prods[2 * m:]))


def chisq_weights(probabilities: Sequence[float], n: int, precision: int = DEFAULT_PRECISION
                  ) -> list[tuple[int, int]]:
    """Public (encode(e_i, phi), encode(1/e_i, 2 phi)) per category, e_i = n * eta_i."""
    out = []
    for eta in probabilities:
        e = Fraction(n) * Fraction(eta)
        if e <= 0:
            raise SpecError("expected count must be positive")
        out.append((encode_int(e, precision), encode_int(1 / e, 2 * precision)))
    return out


def chisq_circuit(party: Party, counts: Sequence[AdditiveShare], probabilities: Sequence[float],
                  n: int, precision: int = DEFAULT_PRECISION) -> TestStatisticPair:
    """Goodness of fit: num = sum (x_i 2^phi - e_i)^2 * (1/e_i), at scale 4 phi; den = 1."""
    counts = list(counts)
    if len(counts) != len(probabilities) or len(counts) < 2:
        raise SpecError("one count per category (k >= 2) required")
    if any(c.scale_exp != 0 for c in counts):
        raise SpecError("category counts must be plain integers")
    weights = chisq_weights(probabilities, n, precision)
    devs = [party.const_add(party.upscale(c, precision), -e_enc) for c, (e_enc, _) in zip(counts, weights)]
    sq = party.mul(devs, devs)
    terms = [party.const_mult(s, w, scale_bits=2 * precision) for s, (_, w) in zip(sq, weights)]
    return TestStatisticPair(CHISQ, party.sum(terms), None, squared=False, n=n, k=len(counts))


def ftest_from_moments(party: Party, groups: Sequence[Moments]) -> TestStatisticPair:
    """One-way F over k equal-size groups, with the (n - k) divisor of the source formula.

    num = (n-k) * sum_i (k S_i - T)^2, den = k^2 (k-1) (n Q - sum_i S_i^2).
    """
    k = len(groups)
    if k < 2:
        raise SpecError("F-test needs k >= 2 groups")
    n = groups[0].n
    if any(g.n != n for g in groups):
        raise SpecError("F-test groups must have equal size")
    if n <= k:
        raise SpecError("F-test needs n > k rows per group")
    total = party.sum([g.total for g in groups])
    devs = [party.sub(party.const_mult(g.total, k), total) for g in groups]
    sums = [g.total for g in groups]
    prods = party.mul(devs + sums, devs + sums)
    between = party.sum(prods[:k])
    s_sq = party.sum(prods[k:])
    q = party.sum([g.squares for g in groups])
    num = party.const_mult(between, n - k)
    den = party.const_mult(party.sub(party.const_mult(q, n), s_sq), k * k * (k - 1))
    return TestStatisticPair(FTEST, num, den, squared=False, n=n, k=k)


def ftest_circuit(party: Party, groups: Sequence[Sequence[AdditiveShare]]) -> TestStatisticPair:
    return ftest_from_moments(party, columns_moments(party, groups))


# ---------------------------------------------------------------------------
# reveal


def reveal_statistic(party: Party, pair: TestStatisticPair) -> StatisticResult:
    """Reveal the statistic itself (masked-pair quotient, or the numerator if den = 1)."""
    if pair.den is None:
        raw = party.reveal(pair.num)[0]
        q = Fraction(raw, 1 << pair.scale_exp)
        return StatisticResult(pair.test_id, float(q), None, 1, pair.n, pair.k)
    r_num, r_den = party.masked_pair_reveal(pair.num, pair.den)
    q = Fraction(r_num, r_den)
    if not pair.squared:
        return StatisticResult(pair.test_id, float(q), None, 1, pair.n, pair.k)
    sign = 1
    if pair.sign_wire is not None:
        sign = party.sign_reveal(pair.sign_wire)[0]
    value = sign * _sqrt_fraction(q)
    if pair.test_id == PEARSON:
        value = max(-1.0, min(1.0, value))
    return StatisticResult(pair.test_id, value, q, sign, pair.n, pair.k)


def _sqrt_fraction(q: Fraction) -> float:
    if q < 0:
        raise DegenerateStatistic("negative squared statistic")
    return math.sqrt(float(q))


def significance_circuit(party: Party, pair: TestStatisticPair, critical: float,
                         precision: int = DEFAULT_PRECISION, sidedness: str = TWO_SIDED) -> int:
    """1 iff the statistic reaches ``critical``; only that bit is revealed.

    Squared pairs compare num - c^2 den against zero, which is the two-sided
    test |stat| >= c.  Upper-tail tests compare num - c den.
    """
    if not math.isfinite(critical) or critical < 0:
        raise ValueError("critical value must be finite and non-negative")
    if pair.squared and sidedness != TWO_SIDED:
        raise SpecError("significance-bit mode supports two-sided t and correlation tests only")
    threshold = Fraction(critical) ** 2 if pair.squared else Fraction(critical)
    if pair.den is None:
        diff = party.const_add(pair.num, -encode_int(threshold, pair.scale_exp))
        return int(party.sign_reveal(diff)[0] >= 0)
    lhs = party.upscale(pair.num, precision)
    rhs = party.const_mult(pair.den, encode_int(threshold, precision), scale_bits=precision)
    diff_sign, den_sign = party.sign_reveal([party.sub(lhs, rhs), pair.den])
    if den_sign == 0:
        raise DegenerateStatistic("denominator is zero")
    return int(diff_sign >= 0)


def triples_needed(test_id: str, n: int, k: int = 2, *, owner_squares: bool = False,
                   bit_mode: bool = False) -> int:
    """Beaver triples consumed by one evaluation (used to size preprocessing)."""
    if test_id == TTEST:
        elems = 0 if owner_squares else 2 * n
        body = elems + 3
        reveal = 2 if bit_mode else 3
    elif test_id == PEARSON:
        elems = n if owner_squares else 3 * n
        body = elems + 3 + 2
        reveal = 2 if bit_mode else 3
    elif test_id == CHISQ:
        body = k
        reveal = 1 if bit_mode else 0
    elif test_id == FTEST:
        elems = 0 if owner_squares else k * n
        body = elems + 2 * k
        reveal = 2
    else:
        raise SpecError("unknown test id %r" % (test_id,))
    return body + reveal


__all__ = [
    "CHISQ", "FTEST", "GREATER", "LESS", "PEARSON", "TTEST", "TWO_SIDED",
    "Moments", "SpecError", "StatisticResult", "TestSpec", "TestStatisticPair",
    "chisq_circuit", "column_moments", "columns_moments", "ftest_circuit", "ftest_from_moments",
    "pearson_circuit", "pearson_from_moments", "reveal_statistic", "significance_circuit",
    "triples_needed", "ttest_circuit", "ttest_from_moments",
]
