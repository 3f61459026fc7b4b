import math

import mpmath
import numpy as np
import pytest
from hypothesis import given, settings
from hypothesis import strategies as st

from basketse.errors import ConfigError
from basketse.inference import (
    INF,
    CoverageQuery,
    PowerQuery,
    calibrated_effect,
    confidence_interval,
    coverage_curve,
    coverage_under_inflation,
    critical_value,
    power,
    power_curve,
    standardized_power,
    t_cdf,
    t_quantile,
    two_sample_test,
)

mpmath.mp.dps = 40


def ref_cdf(x, df):
    """High-precision t (or normal) CDF."""
    x = mpmath.mpf(x)
    if df == INF:
        return float(mpmath.ncdf(x))
    nu = mpmath.mpf(df)
    tail = mpmath.betainc(nu / 2, mpmath.mpf(1) / 2, 0, nu / (nu + x * x), regularized=True) / 2
    return float(1 - tail if x > 0 else tail)


DFS = [1, 2, 3.5, 10, 30, 1000, INF]


@pytest.mark.parametrize("df", DFS)
@pytest.mark.parametrize("x", [-40.0, -6.0, -2.0, -0.3, 0.0, 0.7, 1.96, 4.0, 25.0])
def test_cdf_against_reference(x, df):
    assert abs(t_cdf(x, df) - ref_cdf(x, df)) < 1e-8


@pytest.mark.parametrize("df", DFS)
@pytest.mark.parametrize("q", [1e-6, 0.01, 0.2, 0.5, 0.8, 0.975, 0.999999])
def test_quantile_inverts_cdf(q, df):
    x = t_quantile(q, df)
    assert abs(ref_cdf(x, df) - q) < 1e-10


def test_known_quantiles():
    assert t_quantile(0.975) == pytest.approx(1.959963984540054, abs=1e-12)
    # Cauchy: tan(pi (q - 1/2))
    assert t_quantile(0.975, 1) == pytest.approx(math.tan(0.475 * math.pi), rel=1e-10)
    assert t_quantile(0.5, 7) == 0.0
    assert critical_value(0.05) == pytest.approx(t_quantile(0.975), rel=1e-15)


@pytest.mark.parametrize("q", [0.0, 1.0, -0.1, 1.5, math.nan])
def test_quantile_domain(q):
    with pytest.raises(ValueError):
        t_quantile(q)


@settings(max_examples=100, deadline=None)
@given(st.floats(-50, 50), st.one_of(st.floats(0.5, 500), st.just(INF)))
def test_cdf_symmetry(x, df):
    assert t_cdf(x, df) + t_cdf(-x, df) == pytest.approx(1.0, abs=1e-14)
    assert t_cdf(0.0, df) == 0.5


def test_power_null_is_alpha():
    for alpha in (0.1, 0.05, 0.01):
        assert power(PowerQuery(0.0, 1.0, alpha)) == pytest.approx(alpha, abs=1e-14)
        assert power(PowerQuery(0.0, 2.0, alpha, df=12)) == pytest.approx(alpha, abs=1e-12)


def test_power_collapse_when_se_doubles():
    d = calibrated_effect(0.05, 0.8)
    assert d == pytest.approx(t_quantile(0.975) + t_quantile(0.8), abs=1e-3)
    assert d == pytest.approx(2.8016, abs=1e-4)
    assert standardized_power(d, 0.05) == pytest.approx(0.8, abs=1e-12)
    assert standardized_power(d / 2, 0.05) == pytest.approx(0.288, abs=0.005)


def test_power_tends_to_one():
    assert power(PowerQuery(40.0, 1.0)) == pytest.approx(1.0, abs=1e-12)


def test_power_monotone():
    thetas = np.linspace(0, 6, 25)
    p = [standardized_power(t, 0.05) for t in thetas]
    assert all(b > a for a, b in zip(p, p[1:]))
    # symmetric in the sign of the effect
    assert power(PowerQuery(-1.3, 1.0)) == pytest.approx(power(PowerQuery(1.3, 1.0)), abs=1e-15)
    ses = np.linspace(0.2, 5, 25)
    p = [power(PowerQuery(2.0, s, df=20)) for s in ses]
    assert all(b < a for a, b in zip(p, p[1:]))


def test_coverage_examples():
    assert coverage_under_inflation(CoverageQuery(1.0, 0.95)) == pytest.approx(0.95, abs=1e-12)
    assert coverage_under_inflation(CoverageQuery(1.0, 0.99, df=5)) == pytest.approx(0.99, abs=1e-12)
    assert coverage_under_inflation(CoverageQuery(2.0, 0.95)) == pytest.approx(0.673, abs=0.005)
    assert coverage_under_inflation(CoverageQuery(1e6, 0.95)) < 1e-5


def test_coverage_monotone():
    c = [coverage_under_inflation(CoverageQuery(m)) for m in np.linspace(0.5, 10, 30)]
    assert all(b < a for a, b in zip(c, c[1:]))


def test_large_df_matches_normal():
    for df in (1000, 5000):
        assert abs(power(PowerQuery(2.5, 1.0, df=df)) - power(PowerQuery(2.5, 1.0))) < 1e-3
        assert abs(
            coverage_under_inflation(CoverageQuery(2.0, df=df)) - coverage_under_inflation(CoverageQuery(2.0))
        ) < 1e-3


@pytest.mark.parametrize(
    "make",
    [
        lambda: PowerQuery(1.0, 0.0),
        lambda: PowerQuery(1.0, 1.0, alpha=1.0),
        lambda: PowerQuery(1.0, 1.0, df=0),
        lambda: CoverageQuery(0.0),
        lambda: CoverageQuery(2.0, nominal=1.0),
        lambda: calibrated_effect(0.05, 0.01),
    ],
)
def test_invalid_queries(make):
    with pytest.raises(ConfigError):
        make()


def test_confidence_interval():
    lo, hi = confidence_interval(0.0, 1.0)
    assert (lo, hi) == pytest.approx((-1.959963985, 1.959963985), abs=1e-9)
    lo, hi = confidence_interval(5.0, 1e-300)
    assert lo == hi == 5.0
    w1 = np.subtract(*confidence_interval(0, 1.0, df=8))
    w3 = np.subtract(*confidence_interval(0, 3.0, df=8))
    assert w3 == pytest.approx(3 * w1, rel=1e-14)
    with pytest.raises(ConfigError):
        confidence_interval(0.0, 0.0)


def test_two_sample_examples():
    res = two_sample_test(0.0, 1.0, 3.0, 1.0)
    assert res.difference == 3.0
    assert res.z == pytest.approx(3 / math.sqrt(2), rel=1e-12)
    assert res.p_value == pytest.approx(0.0339, abs=5e-5)
    same = two_sample_test(2.0, 0.5, 2.0, 0.5)
    assert same.difference == 0.0 and same.p_value == 1.0
    with pytest.raises(ConfigError):
        two_sample_test(0, 0, 1, 1)


@settings(max_examples=200, deadline=None)
@given(
    st.floats(-10, 10),
    st.floats(0.01, 5),
    st.floats(-10, 10),
    st.floats(0.01, 5),
    st.sampled_from([0.1, 0.05, 0.01]),
)
def test_ci_excludes_zero_iff_significant(ma, sa, mb, sb, alpha):
    res = two_sample_test(ma, sa, mb, sb, alpha)
    if abs(abs(res.z) - critical_value(alpha)) < 1e-9:
        return  # on the boundary either answer is a rounding artefact
    excludes = res.ci_low > 0 or res.ci_high < 0
    assert excludes == (res.p_value < alpha)


def test_curve_families():
    pc = power_curve([1, 2, 3, 4])
    assert list(pc.columns) == ["multiple", "value", "alpha"]
    assert sorted(pc["alpha"].unique()) == [0.001, 0.01, 0.05, 0.1]
    at_one = pc[pc["multiple"] == 1.0]["value"]
    assert np.allclose(at_one, 0.8, atol=1e-10)
    for _, g in pc.groupby("alpha"):
        assert g["value"].is_monotonic_decreasing
    cc = coverage_curve([1, 2, 3, 4])
    assert list(cc.columns) == ["multiple", "value", "nominal"]
    ones = cc[cc["multiple"] == 1.0]
    np.testing.assert_allclose(ones["value"], ones["nominal"], atol=1e-10)
    for _, g in cc.groupby("nominal"):
        assert g["value"].is_monotonic_decreasing
