import itertools
import json
import math

import numpy as np
import pytest
from hypothesis import HealthCheck, assume, given, settings
from hypothesis import strategies as st

from conftest import class_spec, random_state, three_queue_discrete
from strategies import explicit_specs, rng_seeds
from jsqlab.config import spec_from_dict, spec_hash, spec_to_dict
from jsqlab.engine import run
from jsqlab.experiments.stats import batch_means_ci, wilson_ci
from jsqlab.lyapunov.norms import flow_derivative, norm, norm_total
from jsqlab.lyapunov.params import build_params
from jsqlab.network import traffic_intensity
from jsqlab.rng import RngStream
from jsqlab.routing import solve_routing

SLOW = settings(max_examples=25, deadline=None, suppress_health_check=[HealthCheck.too_slow])


@pytest.fixture(scope="module")
def params():
    return build_params(three_queue_discrete())


def _brute_rho(spec):
    alpha = spec.alpha()
    best = 0.0
    for r in range(1, spec.N + 1):
        for B in itertools.combinations(range(spec.N), r):
            num = sum(alpha[k] * p * (1.0 if spec.mode == "class" else spec.class_mean(k, A))
                      for k, A, p in spec.classes() if set(A) <= set(B))
            den = sum(1.0 / spec.queue_mean(n) for n in B) if spec.mode == "class" else len(B)
            best = max(best, num / den)
    return best


@SLOW
@given(explicit_specs())
def test_traffic_intensity_equals_brute_force(spec):
    assert traffic_intensity(spec).rho == pytest.approx(_brute_rho(spec), rel=1e-9)


@SLOW
@given(explicit_specs())
def test_routing_keeps_every_queue_below_rho(spec):
    t = solve_routing(spec)
    assert t.max_excess() <= 1e-9
    for k, A, _ in t.rows:
        assert t.q_row(k, A).sum() == pytest.approx(1.0, abs=1e-12)


@SLOW
@given(explicit_specs())
def test_config_round_trip(spec):
    again = spec_from_dict(json.loads(json.dumps(spec_to_dict(spec))))
    assert again == spec and spec_hash(again) == spec_hash(spec)


@settings(max_examples=60, deadline=None)
@given(rng_seeds(), st.sampled_from(["fifo", "lifo", "ps"]))
def test_flow_bounds_hold(params, rng, disc):
    fd = flow_derivative(random_state(params.spec, rng, disc, max_jobs=15), params)
    assert fd.holds_L_R and fd.holds_A and fd.holds_total


@settings(max_examples=60, deadline=None)
@given(rng_seeds())
def test_norm_components_nonnegative_and_monotone_in_residuals(params, rng):
    x = random_state(params.spec, rng, "fifo")
    v = norm(x, params)
    assert v.L >= 0 and v.R >= 0 and v.A >= 0
    if x.jobs:
        j = x.jobs[0]
        bigger = x.replace(jobs=(j._replace(w=j.w * 2),) + x.jobs[1:])
        assert norm_total(bigger, params) >= norm_total(x, params)


@settings(max_examples=40, deadline=None)
@given(rng_seeds(), st.floats(1e-8, 1e-6))
def test_norm_is_locally_lipschitz(params, rng, h):
    x = random_state(params.spec, rng, "fifo")
    y = x.replace(jobs=[j._replace(w=j.w + h) for j in x.jobs], s=[s + h for s in x.s])
    ratio = abs(norm_total(y, params) - norm_total(x, params)) / (h * (len(x.jobs) + x.K))
    assert math.isfinite(ratio) and ratio < 1e6


@SLOW
@given(st.integers(0, 2**63), st.sampled_from(["fifo", "lifo", "ps"]), st.sampled_from(["jsq", "jllq", "random"]))
def test_event_log_is_consistent(seed, disc, asg):
    from jsqlab.network import AssignmentRule, Discipline

    spec = class_spec(3, 2.2, 2, discipline=Discipline(disc), assignment=AssignmentRule(asg))
    res = run(spec, 40.0, seed=seed)
    z = [0, 0, 0]
    last = 0.0
    for rec in res.events:
        assert rec.t >= last
        last = rec.t
        z[rec.queue] += 1 if rec.kind == "arrival" else -1
        assert min(z) >= 0 and list(rec.z) == z
        if rec.kind == "arrival":
            assert rec.queue in rec.A
    assert res.state.arrivals - res.state.departures == sum(z)


@settings(max_examples=50, deadline=None)
@given(st.lists(st.floats(-1e3, 1e3), min_size=2, max_size=40))
def test_batch_interval_brackets_the_mean(xs):
    iv = batch_means_ci(xs)
    assert iv.low <= iv.estimate + 1e-9 * max(1, abs(iv.estimate))
    assert iv.estimate <= iv.high + 1e-9 * max(1, abs(iv.estimate))


@settings(max_examples=50, deadline=None)
@given(st.integers(1, 500), st.data())
def test_wilson_interval_in_unit_range(n, data):
    k = data.draw(st.integers(0, n))
    iv = wilson_ci(k, n)
    assert 0.0 <= iv.low <= k / n <= iv.high <= 1.0


@settings(max_examples=30, deadline=None)
@given(st.integers(0, 2**64 - 1), st.lists(st.integers(1, 5000), min_size=1, max_size=5))
def test_rng_draws_do_not_depend_on_request_sizes(seed, sizes):
    r = RngStream(seed, (0, 1))
    parts = np.concatenate([r.uniforms(n) for n in sizes])
    assert np.array_equal(parts, RngStream(seed, (0, 1)).uniforms(sum(sizes)))
