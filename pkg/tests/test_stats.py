import math

import numpy as np
import pytest
from scipy import stats as sps

from jsqlab.experiments.stats import (
    Unstable,
    batch_edges,
    batch_means_ci,
    check_trend,
    independent_ratio_ci,
    ratio_ci,
    trend_statistic,
    upper_bound,
    wilson_ci,
)


def test_batch_means_matches_t_interval():
    x = np.array([1.0, 2.0, 4.0, 3.0, 5.0])
    iv = batch_means_ci(x)
    lo, hi = sps.t.interval(0.95, 4, loc=3.0, scale=sps.sem(x))
    assert (iv.estimate, iv.low, iv.high) == pytest.approx((3.0, lo, hi), rel=1e-12)


def test_upper_bound_one_sided():
    x = np.array([0.0, 1.0, 2.0])
    assert upper_bound(x) == pytest.approx(1.0 + sps.t.ppf(0.95, 2) * 1.0 / math.sqrt(3))


def test_wilson_formula():
    # closed-form Wilson interval for 7 of 20 at 95%
    n, k, z = 20, 7, sps.norm.ppf(0.975)
    p = k / n
    centre = (p + z * z / (2 * n)) / (1 + z * z / n)
    half = z / (1 + z * z / n) * math.sqrt(p * (1 - p) / n + z * z / (4 * n * n))
    iv = wilson_ci(k, n)
    assert iv.low == pytest.approx(centre - half, rel=1e-9)
    assert iv.high == pytest.approx(centre + half, rel=1e-9)
    assert wilson_ci(0, 0).low == 0.0


def test_ratio_of_proportional_batches_has_zero_width():
    a = np.array([1.0, 2.0, 3.0, 4.0])
    iv = ratio_ci(2.0 * a, a)
    assert iv.estimate == pytest.approx(2.0)
    assert iv.high - iv.low == pytest.approx(0.0, abs=1e-12)


def test_independent_ratio_coverage():
    rng = np.random.default_rng(0)
    hits = 0
    for _ in range(400):
        iv = independent_ratio_ci(rng.normal(2.0, 0.2, 32), rng.normal(1.0, 0.1, 32))
        hits += iv.contains(2.0)
    assert 0.9 < hits / 400 <= 1.0
    one = independent_ratio_ci([2.0, 2.1, 1.9], [1.0, 1.1, 0.9], one_sided=True)
    assert one.high == math.inf and one.low < one.estimate


def test_trend_guard():
    assert trend_statistic(np.arange(10.0) + np.sin(np.arange(10.0))) > 3
    assert trend_statistic([1.0, 1.0, 1.0]) == 0.0
    with pytest.raises(Unstable):
        check_trend(np.arange(32.0) + 0.1 * np.cos(np.arange(32.0)))
    flat = np.random.default_rng(1).normal(size=32)
    assert check_trend(flat) <= 3


def test_batch_edges():
    e = batch_edges(100.0, 20.0, 4)
    assert list(e) == [20.0, 40.0, 60.0, 80.0, 100.0]
    with pytest.raises(ValueError):
        batch_edges(10.0, 10.0, 2)
