"""Power, confidence-interval coverage and test decisions under a given SE.

Student-t probabilities are evaluated through the regularised incomplete beta
function; ``df=math.inf`` selects the standard normal (z-test) limit, which is
the default everywhere.
"""

from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
import pandas as pd
from scipy import optimize, special

from .errors import ConfigError

INF = math.inf


def _check_df(df):
    if not (df > 0):
        raise ConfigError(f"degrees of freedom must be positive, got {df}")


def t_sf(x, df=INF):
    """Upper tail P(T > x), computed directly so small tails keep relative precision."""
    _check_df(df)
    x = np.asarray(x, dtype=np.float64)
    if math.isinf(df):
        out = special.ndtr(-x)
    else:
        tail = 0.5 * special.betainc(0.5 * df, 0.5, df / (df + x * x))
        out = np.where(x >= 0, tail, 1.0 - tail)
    return out[()] if out.ndim == 0 else out


def t_cdf(x, df=INF):
    """CDF of Student's t with ``df`` degrees of freedom (normal when infinite)."""
    return t_sf(-np.asarray(x, dtype=np.float64), df)


def t_pdf(x, df=INF):
    _check_df(df)
    x = np.asarray(x, dtype=np.float64)
    if math.isinf(df):
        out = np.exp(-0.5 * x * x) / math.sqrt(2 * math.pi)
    else:
        log_norm = (
            special.gammaln(0.5 * (df + 1))
            - special.gammaln(0.5 * df)
            - 0.5 * math.log(df * math.pi)
        )
        out = np.exp(log_norm - 0.5 * (df + 1) * np.log1p(x * x / df))
    return out[()] if out.ndim == 0 else out


def _upper_tail_root(p, df):
    """x >= 0 with t_sf(x) == p for p in (0, 0.5]: bracketing plus Newton steps."""
    lo, hi = 0.0, 1.0
    while t_sf(hi, df) > p:
        lo, hi = hi, hi * 2.0
        if hi > 1e300:
            return math.inf
    x = 0.5 * (lo + hi)
    for _ in range(200):
        f = float(t_sf(x, df)) - p
        if f == 0:
            return x
        if f > 0:
            lo = x
        else:
            hi = x
        slope = float(t_pdf(x, df))
        step = x + f / slope if slope > 0 else math.nan
        x = step if lo < step < hi else 0.5 * (lo + hi)
        if hi - lo <= 4 * math.ulp(hi) or abs(f) <= 1e-16 * p:
            break
    return x


def t_quantile(q, df=INF) -> float:
    """Inverse of :func:`t_cdf`; ``q`` must lie strictly between 0 and 1."""
    _check_df(df)
    q = float(q)
    if not 0 < q < 1:
        raise ConfigError(f"quantile level must be in (0, 1), got {q}")
    if q == 0.5:
        return 0.0
    x = _upper_tail_root(min(q, 1 - q), df)
    return x if q > 0.5 else -x


def critical_value(alpha, df=INF) -> float:
    """Two-tailed critical value t_{df, 1 - alpha/2}."""
    _check_alpha(alpha)
    return _upper_tail_root(0.5 * alpha, df)


def _check_alpha(alpha):
    if not 0 < alpha < 1:
        raise ConfigError(f"alpha must be in (0, 1), got {alpha}")


@dataclass(frozen=True)
class PowerQuery:
    theta: float
    se: float
    alpha: float = 0.05
    df: float = INF

    def __post_init__(self):
        if not self.se > 0:
            raise ConfigError(f"SE must be positive, got {self.se}")
        _check_alpha(self.alpha)
        _check_df(self.df)


@dataclass(frozen=True)
class CoverageQuery:
    multiple: float
    nominal: float = 0.95
    df: float = INF

    def __post_init__(self):
        if not self.multiple > 0:
            raise ConfigError(f"SE multiple must be positive, got {self.multiple}")
        _check_alpha(1 - self.nominal)
        _check_df(self.df)


def power(query: PowerQuery) -> float:
    """Power of a two-tailed t-test:

        1 - T(t_{1-a/2} - theta/SE) + T(-t_{1-a/2} - theta/SE)
    """
    crit = critical_value(query.alpha, query.df)
    d = query.theta / query.se
    return float(t_sf(crit - d, query.df) + t_cdf(-crit - d, query.df))


def standardized_power(theta_over_se, alpha=0.05, df=INF) -> float:
    return power(PowerQuery(theta_over_se, 1.0, alpha, df))


def calibrated_effect(alpha=0.05, target_power=0.8, df=INF) -> float:
    """theta/SE at which the two-tailed test reaches ``target_power`` exactly."""
    if not alpha < target_power < 1:
        raise ConfigError(f"target power must be in (alpha, 1), got {target_power}")
    crit = critical_value(alpha, df)
    hi = crit + 1.0
    while standardized_power(hi, alpha, df) < target_power:
        hi *= 2
    return optimize.brentq(
        lambda d: standardized_power(d, alpha, df) - target_power, 0.0, hi, xtol=1e-14, rtol=1e-15
    )


def coverage_under_inflation(query: CoverageQuery) -> float:
    """True coverage of a nominal CI built with an SE that is ``multiple`` times too small."""
    crit = critical_value(1 - query.nominal, query.df) / query.multiple
    return float(1.0 - 2.0 * t_sf(crit, query.df))


def confidence_interval(mean, se, alpha=0.05, df=INF) -> tuple[float, float]:
    if not se > 0:
        raise ConfigError(f"SE must be positive, got {se}")
    half = critical_value(alpha, df) * se
    return mean - half, mean + half


@dataclass(frozen=True)
class TwoSampleResult:
    difference: float
    se: float
    ci_low: float
    ci_high: float
    z: float
    p_value: float

    @property
    def ci(self) -> tuple[float, float]:
        return self.ci_low, self.ci_high


def two_sample_test(mean_a, se_a, mean_b, se_b, alpha=0.05) -> TwoSampleResult:
    """Unpooled z-test of ``mean_b - mean_a``; each SE may come from any estimator."""
    if not (se_a > 0 and se_b > 0):
        raise ConfigError(f"group SEs must be positive, got {se_a} and {se_b}")
    diff = mean_b - mean_a
    se = math.hypot(se_a, se_b)
    z = diff / se
    lo, hi = confidence_interval(diff, se, alpha)
    return TwoSampleResult(diff, se, lo, hi, z, float(2.0 * t_sf(abs(z))))


def power_curve(multiples, alphas=(0.1, 0.05, 0.01, 0.001), target_power=0.8, df=INF) -> pd.DataFrame:
    """Power at each SE multiple, the effect calibrated to ``target_power`` at multiple 1."""
    rows = []
    for alpha in alphas:
        d = calibrated_effect(alpha, target_power, df)
        for m in multiples:
            rows.append((float(m), standardized_power(d / m, alpha, df), float(alpha)))
    return pd.DataFrame(rows, columns=["multiple", "value", "alpha"])


def coverage_curve(multiples, nominals=(0.90, 0.95, 0.99, 0.999), df=INF) -> pd.DataFrame:
    rows = [
        (float(m), coverage_under_inflation(CoverageQuery(m, nominal, df)), float(nominal))
        for nominal in nominals
        for m in multiples
    ]
    return pd.DataFrame(rows, columns=["multiple", "value", "nominal"])
