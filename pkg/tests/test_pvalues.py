from __future__ import annotations

import math
import random

import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st
from scipy import special, stats

from oracles import CHI2_1_AT_3_841459, F_1_1E5_SF_AT_0_01, REG_INC_GAMMA_HALF_1_92, T10_TWO_SIDED_05
from starcert import pvalues
from starcert.pvalues import (
    GREATER,
    LESS,
    TWO_SIDED,
    ChiSquared,
    FisherF,
    StudentT,
    critical_value,
    degrees_of_freedom,
    p_from_statistic,
    pearson_to_t,
    reg_inc_beta,
    reg_inc_gamma,
    reg_inc_gamma_upper,
)

TOL = 1e-11


def test_beta_boundaries():
    for a, b in [(0.5, 0.5), (2, 3), (40, 7)]:
        assert reg_inc_beta(a, b, 0.0) == 0.0
        assert reg_inc_beta(a, b, 1.0) == 1.0
    for x in np.linspace(0, 1, 11):
        assert reg_inc_beta(1, 1, x) == pytest.approx(x, abs=1e-15)


@settings(max_examples=300, deadline=None)
@given(st.floats(0.05, 500), st.floats(0.05, 500), st.floats(0, 1))
def test_beta_matches_scipy(a, b, x):
    assert reg_inc_beta(a, b, x) == pytest.approx(special.betainc(a, b, x), abs=TOL)


@settings(max_examples=300, deadline=None)
@given(st.floats(0.05, 500), st.floats(0, 1500))
def test_gamma_matches_scipy(a, x):
    assert reg_inc_gamma(a, x) == pytest.approx(special.gammainc(a, x), abs=TOL)
    assert reg_inc_gamma_upper(a, x) == pytest.approx(special.gammaincc(a, x), abs=TOL)


def test_gamma_reference_value():
    assert reg_inc_gamma(0.5, 1.92072941) == pytest.approx(REG_INC_GAMMA_HALF_1_92, abs=1e-12)


def test_domain_errors():
    with pytest.raises(ValueError):
        reg_inc_beta(0, 1, 0.5)
    with pytest.raises(ValueError):
        reg_inc_beta(1, 1, 1.5)
    with pytest.raises(ValueError):
        reg_inc_gamma(-1, 1)
    with pytest.raises(ValueError):
        StudentT(0)
    with pytest.raises(ValueError):
        p_from_statistic(1.0, StudentT(3), "sideways")


def test_p_value_examples():
    assert p_from_statistic(0.0, StudentT(7), TWO_SIDED) == 1.0
    assert p_from_statistic(0.0, ChiSquared(3)) == 1.0
    assert p_from_statistic(3.841459, ChiSquared(1)) == pytest.approx(CHI2_1_AT_3_841459, abs=1e-12)
    assert abs(p_from_statistic(3.841459, ChiSquared(1)) - 0.05) <= 1e-4


@pytest.mark.parametrize("df", [1, 2, 5, 30, 998, 20_000])
def test_distributions_match_scipy(df):
    for x in [0.01, 0.5, 1.0, 2.5, 7.0, 40.0]:
        assert p_from_statistic(x, StudentT(df), GREATER) == pytest.approx(stats.t.sf(x, df), abs=TOL)
        assert p_from_statistic(-x, StudentT(df), LESS) == pytest.approx(stats.t.sf(x, df), abs=TOL)
        assert p_from_statistic(x, StudentT(df), TWO_SIDED) == pytest.approx(2 * stats.t.sf(x, df), abs=TOL)
        assert p_from_statistic(x, ChiSquared(df)) == pytest.approx(stats.chi2.sf(x, df), abs=TOL)
        for d1 in (1, 3):
            assert p_from_statistic(x, FisherF(d1, df)) == pytest.approx(stats.f.sf(x, d1, df), abs=TOL)


def test_huge_denominator_df_against_high_precision_value():
    assert p_from_statistic(0.01, FisherF(1, 10**5)) == pytest.approx(F_1_1E5_SF_AT_0_01, abs=1e-12)


def test_beta_tiny_argument():
    assert reg_inc_beta(10.0, 10.0, 7.2e-227) == 0.0
    assert reg_inc_beta(10.0, 10.0, 1 - 1e-17) == 1.0


def test_monotone_in_statistic():
    grid = np.linspace(0, 10, 200)
    for dist in (StudentT(5), ChiSquared(4), FisherF(2, 20)):
        ps = [p_from_statistic(x, dist) for x in grid]
        assert all(0 <= p <= 1 for p in ps)
        assert all(a >= b for a, b in zip(ps, ps[1:]))


def test_critical_value_examples():
    assert critical_value(StudentT(10), 0.05, TWO_SIDED) == pytest.approx(T10_TWO_SIDED_05, abs=1e-9)
    assert critical_value(StudentT(10), 0.5, GREATER) == pytest.approx(0.0, abs=1e-12)
    assert critical_value(StudentT(10), 0.05, LESS) == pytest.approx(-critical_value(StudentT(10), 0.05, GREATER))
    with pytest.raises(ValueError):
        critical_value(StudentT(10), 0.0)


def test_critical_value_round_trip_random():
    rng = random.Random(8)
    for _ in range(60):
        dist = rng.choice([StudentT(rng.randint(1, 500)), ChiSquared(rng.randint(1, 50)),
                           FisherF(rng.randint(1, 10), rng.randint(1, 400))])
        alpha = 10 ** rng.uniform(-8, -0.4)
        c = critical_value(dist, alpha)
        assert abs(p_from_statistic(c, dist) - alpha) <= 1e-9 * max(1.0, alpha)


def test_degrees_of_freedom_map():
    assert degrees_of_freedom("TTEST", 50) == StudentT(98)
    assert degrees_of_freedom("PEARSON", 50) == StudentT(48)
    assert degrees_of_freedom("CHISQ", 50, 4) == ChiSquared(3)
    assert degrees_of_freedom("FTEST", 50, 3) == FisherF(2, 147)


def test_pearson_transform_and_test_helpers():
    assert pearson_to_t(0.0, 10) == 0.0
    assert pearson_to_t(0.5, 10) == pytest.approx(0.5 * math.sqrt(8 / 0.75))
    r = 0.3
    p = pvalues.test_p_value("PEARSON", r, 30)
    assert p == pytest.approx(stats.pearsonr(*_corr_sample(r, 30)).pvalue, rel=1e-6)
    r_c = pvalues.test_critical_value("PEARSON", 0.05, 30)
    assert pvalues.test_p_value("PEARSON", r_c, 30) == pytest.approx(0.05, abs=1e-10)


def _corr_sample(r, n):
    # a sample whose sample correlation is exactly r
    rng = np.random.default_rng(1)
    x = rng.normal(size=n)
    z = rng.normal(size=n)
    x = (x - x.mean()) / np.linalg.norm(x - x.mean())
    z = z - z.mean()
    z -= (z @ x) * x
    z /= np.linalg.norm(z)
    return x, r * x + math.sqrt(1 - r * r) * z
