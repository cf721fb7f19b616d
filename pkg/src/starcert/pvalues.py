"""Clear-side p-values and critical values for the supported tests.

Special functions are evaluated with the usual series / continued-fraction
split (modified Lentz for the fractions); log-gamma comes from
:func:`math.lgamma`.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

_EPS = 1e-16
_TINY = 1e-300
_MAX_ITER = 10_000

TWO_SIDED = "two-sided"
GREATER = "greater"
LESS = "less"
SIDEDNESS = (TWO_SIDED, GREATER, LESS)


class ConvergenceError(ArithmeticError):
    pass


class BracketError(ArithmeticError):
    """No statistic with the requested tail probability could be bracketed."""


# ---------------------------------------------------------------------------
# special functions


def _betacf(a: float, b: float, x: float) -> float:
    qab, qap, qam = a + b, a + 1.0, a - 1.0
    c = 1.0
    d = 1.0 - qab * x / qap
    if abs(d) < _TINY:
        d = _TINY
    d = 1.0 / d
    h = d
    for m in range(1, _MAX_ITER):
        m2 = 2 * m
        aa = m * (b - m) * x / ((qam + m2) * (a + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        h *= d * c
        aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2))
        d = 1.0 + aa * d
        d = _TINY if abs(d) < _TINY else d
        c = 1.0 + aa / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return h
    raise ConvergenceError("incomplete beta continued fraction did not converge")


_HALF_LOG_2PI = 0.5 * math.log(2.0 * math.pi)


def _stirling_error(z: float) -> float:
    """lgamma(z) minus its Stirling approximation."""
    if z < 10.0:
        return math.lgamma(z) - ((z - 0.5) * math.log(z) - z + _HALF_LOG_2PI)
    r = 1.0 / (z * z)
    return (1.0 / 12 - r * (1.0 / 360 - r * (1.0 / 1260 - r * (1.0 / 1680 - r / 1188)))) / z


def _log_ratio(x: float, x0: float) -> float:
    """log(x / x0), via log1p when x is close to x0."""
    r = (x - x0) / x0
    return math.log1p(r) if r > -0.5 else math.log(x) - math.log(x0)


def _lgamma_shift(big: float, small: float) -> float:
    """lgamma(big + small) - lgamma(big) for big >= 10 without cancellation."""
    s = big + small
    return ((big - 0.5) * math.log1p(small / big) + small * math.log(s) - small
            + _stirling_error(s) - _stirling_error(big))


def _beta_front(a: float, b: float, x: float, y: float) -> float:
    """x^a y^b / B(a, b), avoiding cancellation between large log-gammas."""
    big, small = max(a, b), min(a, b)
    if big < 10.0:
        return math.exp(math.lgamma(a + b) - math.lgamma(a) - math.lgamma(b)
                        + a * math.log(x) + b * math.log(y))
    if small < 10.0:
        return math.exp(_lgamma_shift(big, small) - math.lgamma(small)
                        + a * math.log(x) + b * math.log(y))
    s = a + b
    dev = a * _log_ratio(x, a / s) + b * _log_ratio(y, b / s)
    corr = _stirling_error(a) + _stirling_error(b) - _stirling_error(s)
    return math.sqrt(a * b / (2.0 * math.pi * s)) * math.exp(dev - corr)


def reg_inc_beta(a: float, b: float, x: float) -> float:
    """Regularized incomplete beta I_x(a, b)."""
    if not 0.0 <= x <= 1.0:
        raise ValueError("x must lie in [0, 1]")
    return _inc_beta(a, b, x, 1.0 - x)


def _inc_beta(a: float, b: float, x: float, y: float) -> float:
    # y = 1 - x, supplied separately when the caller knows it more accurately
    if not (a > 0 and b > 0):
        raise ValueError("a and b must be positive")
    if x <= 0.0:
        return 0.0
    if y <= 0.0:
        return 1.0
    front = _beta_front(a, b, x, y)
    if x < (a + 1.0) / (a + b + 2.0):
        return front * _betacf(a, b, x) / a
    return 1.0 - front * _betacf(b, a, y) / b


def _gamma_series(s: float, x: float) -> float:
    term = 1.0 / s
    total = term
    ap = s
    for _ in range(_MAX_ITER):
        ap += 1.0
        term *= x / ap
        total += term
        if abs(term) < abs(total) * _EPS:
            return total * math.exp(-x + s * math.log(x) - math.lgamma(s))
    raise ConvergenceError("incomplete gamma series did not converge")


def _gamma_cf(s: float, x: float) -> float:
    b = x + 1.0 - s
    c = 1.0 / _TINY
    d = 1.0 / b
    h = d
    for i in range(1, _MAX_ITER):
        an = -i * (i - s)
        b += 2.0
        d = an * d + b
        d = _TINY if abs(d) < _TINY else d
        c = b + an / c
        c = _TINY if abs(c) < _TINY else c
        d = 1.0 / d
        delta = d * c
        h *= delta
        if abs(delta - 1.0) < _EPS:
            return math.exp(-x + s * math.log(x) - math.lgamma(s)) * h
    raise ConvergenceError("incomplete gamma continued fraction did not converge")


def reg_inc_gamma(s: float, x: float) -> float:
    """Regularized lower incomplete gamma P(s, x)."""
    if not s > 0:
        raise ValueError("s must be positive")
    if not x >= 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 0.0
    if math.isinf(x):
        return 1.0
    if x < s + 1.0:
        return _gamma_series(s, x)
    return 1.0 - _gamma_cf(s, x)


def reg_inc_gamma_upper(s: float, x: float) -> float:
    """Regularized upper incomplete gamma Q(s, x) = 1 - P(s, x), without cancellation."""
    if not s > 0:
        raise ValueError("s must be positive")
    if not x >= 0:
        raise ValueError("x must be non-negative")
    if x == 0:
        return 1.0
    if math.isinf(x):
        return 0.0
    if x < s + 1.0:
        return 1.0 - _gamma_series(s, x)
    return _gamma_cf(s, x)


# ---------------------------------------------------------------------------
# distributions


@dataclass(frozen=True)
class StudentT:
    df: int

    def __post_init__(self) -> None:
        _check_df(self.df)


@dataclass(frozen=True)
class ChiSquared:
    df: int

    def __post_init__(self) -> None:
        _check_df(self.df)


@dataclass(frozen=True)
class FisherF:
    d1: int
    d2: int

    def __post_init__(self) -> None:
        _check_df(self.d1)
        _check_df(self.d2)


Distribution = StudentT | ChiSquared | FisherF


def _check_df(df: int) -> None:
    if isinstance(df, bool) or not isinstance(df, int) or df < 1:
        raise ValueError("degrees of freedom must be a positive integer, got %r" % (df,))


def _clamp(p: float) -> float:
    return min(1.0, max(0.0, p))


def _t_two_sided(t: float, df: int) -> float:
    if math.isinf(t):
        return 0.0
    t2 = t * t
    return _inc_beta(df / 2.0, 0.5, df / (df + t2), t2 / (df + t2))


def p_from_statistic(stat: float, dist: Distribution, sidedness: str = TWO_SIDED) -> float:
    """Tail probability of ``stat`` under ``dist``.

    Student t supports two-sided and one-sided alternatives; chi-squared and
    F statistics always use the upper tail.
    """
    if math.isnan(stat):
        raise ValueError("statistic is NaN")
    if sidedness not in SIDEDNESS:
        raise ValueError("unknown sidedness %r" % sidedness)
    if isinstance(dist, StudentT):
        two = _t_two_sided(abs(stat), dist.df)
        if sidedness == TWO_SIDED:
            return _clamp(two)
        upper = 0.5 * two if stat >= 0 else 1.0 - 0.5 * two
        return _clamp(upper if sidedness == GREATER else 1.0 - upper)
    if isinstance(dist, ChiSquared):
        if stat <= 0:
            return 1.0
        return _clamp(reg_inc_gamma_upper(dist.df / 2.0, stat / 2.0))
    if isinstance(dist, FisherF):
        if stat <= 0:
            return 1.0
        if math.isinf(stat):
            return 0.0
        d1, d2 = dist.d1, dist.d2
        den = d2 + d1 * stat
        return _clamp(_inc_beta(d2 / 2.0, d1 / 2.0, d2 / den, d1 * stat / den))
    raise TypeError("unsupported distribution %r" % (dist,))


def pearson_to_t(r: float, n: int) -> float:
    """t statistic with n-2 degrees of freedom for a sample correlation."""
    if n < 3:
        raise ValueError("need n >= 3")
    if abs(r) >= 1.0:
        return math.copysign(math.inf, r)
    return r * math.sqrt((n - 2) / (1.0 - r * r))


def critical_value(dist: Distribution, alpha: float, sidedness: str = TWO_SIDED) -> float:
    """Statistic ``c`` with ``p_from_statistic(c) == alpha``.

    The bracket is grown geometrically and then bisected until it collapses
    to adjacent doubles.
    """
    if not 0.0 < alpha < 1.0:
        raise ValueError("alpha must lie in (0, 1)")
    if isinstance(dist, StudentT) and sidedness == LESS:
        return -critical_value(dist, alpha, GREATER)

    def p(c: float) -> float:
        return p_from_statistic(c, dist, sidedness)

    lo = 0.0
    if p(lo) <= alpha:
        return lo
    hi = 1.0
    for _ in range(2000):
        if p(hi) <= alpha:
            break
        lo, hi = hi, hi * 2.0
        if math.isinf(hi):
            break
    else:
        raise BracketError("could not bracket alpha=%g for %r" % (alpha, dist))
    if not p(hi) <= alpha:
        raise BracketError("could not bracket alpha=%g for %r" % (alpha, dist))
    # p is nonincreasing on [lo, hi]; keep p(lo) > alpha >= p(hi)
    for _ in range(2200):
        mid = lo + (hi - lo) / 2.0
        if mid <= lo or mid >= hi:
            break
        if p(mid) > alpha:
            lo = mid
        else:
            hi = mid
    return hi if abs(p(hi) - alpha) <= abs(p(lo) - alpha) else lo


def degrees_of_freedom(test_id: str, n: int, k: int = 2) -> Distribution:
    """Reference distribution for each test given its dimensions.

    ``n`` is the per-column row count; ``k`` the number of groups (F) or
    categories (chi-squared).
    """
    if test_id == "TTEST":
        return StudentT(2 * n - 2)
    if test_id == "PEARSON":
        return StudentT(n - 2)
    if test_id == "CHISQ":
        return ChiSquared(k - 1)
    if test_id == "FTEST":
        return FisherF(k - 1, n * k - k)
    raise ValueError("unknown test %r" % test_id)


def test_p_value(test_id: str, stat: float, n: int, k: int = 2, sidedness: str = TWO_SIDED) -> float:
    """p-value of a revealed statistic; correlations go through their t transform."""
    dist = degrees_of_freedom(test_id, n, k)
    if test_id == "PEARSON":
        stat = pearson_to_t(stat, n)
    return p_from_statistic(stat, dist, sidedness)


def test_critical_value(test_id: str, alpha: float, n: int, k: int = 2,
                        sidedness: str = TWO_SIDED) -> float:
    """Critical value on the scale of the revealed statistic (r itself for correlations)."""
    dist = degrees_of_freedom(test_id, n, k)
    c = critical_value(dist, alpha, sidedness)
    if test_id == "PEARSON":
        return c / math.sqrt(n - 2 + c * c)
    return c
