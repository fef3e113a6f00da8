import math

import numpy as np
import pytest
from scipy import integrate, stats

from jsqlab.distributions import (
    Deterministic,
    DistributionError,
    LogNormal,
    Pareto,
    UniformInterval,
    discrete,
    exponential,
    from_dict,
    hyperexponential,
    tail_first_moment,
    weighted_stop_loss,
)
from jsqlab.rng import RngStream

# scipy frozen laws used as independent oracles
ORACLES = [
    (exponential(2.0), stats.expon(scale=0.5)),
    (UniformInterval(0.5, 2.5), stats.uniform(0.5, 2.0)),
    (Pareto(3.0, 1.0), stats.pareto(3.0)),
    (LogNormal(0.1, 0.5), stats.lognorm(0.5, scale=math.exp(0.1))),
]


@pytest.mark.parametrize("law,oracle", ORACLES, ids=lambda x: getattr(x, "kind", ""))
def test_moments_match_scipy(law, oracle):
    assert law.mean() == pytest.approx(oracle.mean(), rel=1e-12)
    assert law.second_moment() == pytest.approx(oracle.moment(2), rel=1e-10)


@pytest.mark.parametrize("law,oracle", ORACLES, ids=lambda x: getattr(x, "kind", ""))
@pytest.mark.parametrize("M", [0.0, 0.7, 1.9, 5.0])
def test_tail_first_moment_matches_quadrature(law, oracle, M):
    ref, _ = integrate.quad(lambda y: y * oracle.pdf(y), M, np.inf, epsabs=1e-13, limit=200)
    assert tail_first_moment(law, M) == pytest.approx(ref, rel=1e-8, abs=1e-12)


@pytest.mark.parametrize("law,oracle", ORACLES, ids=lambda x: getattr(x, "kind", ""))
def test_cdf_and_stop_loss(law, oracle):
    for x in (0.3, 1.0, 2.2):
        assert law.cdf(x) == pytest.approx(oracle.cdf(x), abs=1e-12)
        ref, _ = integrate.quad(oracle.sf, x, np.inf, epsabs=1e-13, limit=200)
        assert law.stop_loss(x) == pytest.approx(ref, rel=1e-8, abs=1e-12)


def test_hyperexponential_closed_form():
    h = hyperexponential([(2.0, 0.25), (0.5, 0.75)])
    assert h.mean() == pytest.approx(0.25 / 2 + 0.75 / 0.5)
    M = 1.3
    ref = sum(p * (M + 1 / r) * math.exp(-r * M) for r, p in [(2.0, 0.25), (0.5, 0.75)])
    assert h.tail_first_moment(M) == pytest.approx(ref, rel=1e-12)


def test_discrete_and_deterministic():
    d = discrete([(1.0, 0.25), (3.0, 0.75)])
    assert d.mean() == 2.5
    assert d.tail_first_moment(1.0) == pytest.approx(2.25)  # strict tail excludes the atom at 1
    assert d.tail_first_moment(0.5) == pytest.approx(2.5)
    assert d.atoms() == [(1.0, 0.25), (3.0, 0.75)]
    c = Deterministic(2.0)
    assert c.stop_loss(0.5) == pytest.approx(1.5)
    assert c.regularity_flags().unbounded_support is False


def test_weighted_stop_loss_is_scale_free():
    # mu Y is Exp(1) whatever the rate, so E(mu Y - b)^+ = exp(-b)
    for rate in (0.1, 1.0, 7.0):
        assert weighted_stop_loss(exponential(rate), 1.5) == pytest.approx(math.exp(-1.5), rel=1e-12)


def test_regularity_flags():
    assert exponential(1.0).regularity_flags() == (True, True)
    assert UniformInterval(0.0, 1.0).regularity_flags().unbounded_support is False
    assert discrete([(1.0, 1.0)]).regularity_flags().spread_out is False


@pytest.mark.parametrize(
    "bad",
    [
        {"kind": "exponential", "rate": -1},
        {"kind": "uniform", "a": 2, "b": 1},
        {"kind": "discrete", "masses": [[1, 0.5], [2, 0.4]]},
        {"kind": "pareto", "shape": 1.0, "scale": 1.0},
        {"kind": "nope"},
        {"kind": "exponential"},
    ],
)
def test_invalid_parameters_raise(bad):
    with pytest.raises(DistributionError):
        from_dict(bad)


def test_dict_round_trip():
    for law in [exponential(2.0), UniformInterval(0.5, 2.5), discrete([(1.0, 0.5), (2.0, 0.5)]),
                hyperexponential([(2.0, 0.5), (1.0, 0.5)]), Pareto(3.0, 2.0), LogNormal(0.0, 1.0)]:
        assert from_dict(law.to_dict()) == law


@pytest.mark.parametrize("law,oracle", ORACLES[:3], ids=lambda x: getattr(x, "kind", ""))
def test_sampling_matches_law(law, oracle):
    x = law.sample_many(RngStream(11, (0,)), 20000)
    assert stats.kstest(x, oracle.cdf).pvalue > 1e-3


def test_sampling_is_chunk_invariant():
    law = hyperexponential([(2.0, 0.5), (0.5, 0.5)])
    a = law.sample_many(RngStream(3, (1,)), 100)
    r = RngStream(3, (1,))
    b = np.concatenate([law.sample_many(r, 37), law.sample_many(r, 63)])
    assert np.array_equal(a, b)
