"""Steady-state estimation helpers: batch means, proportions, ratios, trend guard."""
from __future__ import annotations

import math
from dataclasses import dataclass

import numpy as np
from scipy import stats as sps

DEFAULT_BATCHES = 32
DEFAULT_BURN_IN_FRACTION = 0.2
TREND_LIMIT = 3.0


class Unstable(RuntimeError):
    """The observed trajectory still trends upward; steady-state estimates are refused."""


@dataclass
class Interval:
    estimate: float
    low: float
    high: float
    stderr: float

    def contains(self, x: float) -> bool:
        return self.low <= x <= self.high

    def as_dict(self) -> dict:
        return {"estimate": self.estimate, "low": self.low, "high": self.high, "stderr": self.stderr}


def batch_means_ci(values, level: float = 0.95) -> Interval:
    """Student-t interval for the mean of (approximately independent) batch values."""
    x = np.asarray(values, dtype=float)
    b = len(x)
    m = float(x.mean())
    if b < 2:
        return Interval(m, -math.inf, math.inf, math.inf)
    se = float(x.std(ddof=1) / math.sqrt(b))
    q = float(sps.t.ppf(0.5 + level / 2.0, b - 1))
    return Interval(m, m - q * se, m + q * se, se)


def upper_bound(values, level: float = 0.95) -> float:
    """One-sided upper confidence bound for the mean."""
    x = np.asarray(values, dtype=float)
    se = float(x.std(ddof=1) / math.sqrt(len(x)))
    return float(x.mean() + sps.t.ppf(level, len(x) - 1) * se)


def wilson_ci(successes: int, trials: int, level: float = 0.95) -> Interval:
    if trials == 0:
        return Interval(math.nan, 0.0, 1.0, math.inf)
    ci = sps.binomtest(int(successes), int(trials)).proportion_ci(confidence_level=level, method="wilson")
    p = successes / trials
    return Interval(p, float(ci.low), float(ci.high), math.sqrt(p * (1 - p) / trials))


def ratio_ci(num, den, level: float = 0.95) -> Interval:
    """Delta-method interval for mean(num) / mean(den) from paired batch values."""
    a = np.asarray(num, dtype=float)
    b = np.asarray(den, dtype=float)
    n = len(a)
    ma, mb = float(a.mean()), float(b.mean())
    r = ma / mb
    cov = np.cov(a, b, ddof=1)
    var = (cov[0, 0] - 2 * r * cov[0, 1] + r * r * cov[1, 1]) / (mb * mb * n)
    se = math.sqrt(max(var, 0.0))
    q = float(sps.t.ppf(0.5 + level / 2.0, n - 1))
    return Interval(r, r - q * se, r + q * se, se)


def trend_statistic(values) -> float:
    """Slope over its standard error for a least-squares line through values."""
    y = np.asarray(values, dtype=float)
    if len(y) < 3 or np.all(y == y[0]):
        return 0.0
    fit = sps.linregress(np.arange(len(y)), y)
    if fit.stderr == 0:
        return math.inf if fit.slope > 0 else 0.0
    return float(fit.slope / fit.stderr)


def check_trend(values, limit: float = TREND_LIMIT) -> float:
    """Raise Unstable if the second half of values trends upward by more than `limit` standard errors."""
    y = np.asarray(values, dtype=float)
    stat = trend_statistic(y[len(y) // 2:])
    if stat > limit:
        raise Unstable(f"upward trend {stat:.2f} standard errors over the second half")
    return stat


def batch_edges(horizon: float, burn_in: float, batches: int) -> np.ndarray:
    if not 0 <= burn_in < horizon:
        raise ValueError("need 0 <= burn_in < horizon")
    return np.linspace(burn_in, horizon, batches + 1)


def independent_ratio_ci(num, den, level: float = 0.95, one_sided: bool = False) -> Interval:
    """Delta-method interval for mean(num) / mean(den) from independent samples.

    With one_sided=True the upper end is +inf and the lower end is a
    one-sided bound at the given level.
    """
    a = np.asarray(num, dtype=float)
    b = np.asarray(den, dtype=float)
    ma, mb = float(a.mean()), float(b.mean())
    r = ma / mb
    rel = a.var(ddof=1) / (len(a) * ma * ma) + b.var(ddof=1) / (len(b) * mb * mb)
    se = abs(r) * math.sqrt(rel)
    df = min(len(a), len(b)) - 1
    if one_sided:
        return Interval(r, r - float(sps.t.ppf(level, df)) * se, math.inf, se)
    q = float(sps.t.ppf(0.5 + level / 2.0, df))
    return Interval(r, r - q * se, r + q * se, se)
