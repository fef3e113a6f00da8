import math

import numpy as np
import pytest

from conftest import class_spec, mm1, three_queue_discrete
from jsqlab.distributions import Deterministic, UniformInterval, exponential
from jsqlab.experiments.batches import parallel_map, run_batches, worker_count
from jsqlab.experiments.compare import workload_comparison
from jsqlab.experiments.drift import drift_audit
from jsqlab.experiments.hitting import estimate_hitting_time, loaded_state
from jsqlab.experiments.section7 import (
    DeskInfeasible,
    Section7Params,
    StrictViolation,
    build_section7_spec,
    ladder_stats,
)
from jsqlab.experiments.tails import (
    estimate_tail,
    interval_of,
    is_monotone,
    meanfield_tail_reference,
    stationary_residual_tail,
)
from jsqlab.lyapunov.norms import norm_total
from jsqlab.lyapunov.params import build_params

RELAXED = Section7Params(gamma0=0.005, eta=0.01, h2=20, depth=4, epsilon=0.02)


def test_meanfield_reference_values():
    # rho^((D^(l+1) - 1)/(D - 1)) at rho = 0.7, D = 2
    assert meanfield_tail_reference(0.7, 2, 0) == pytest.approx(0.7)
    assert meanfield_tail_reference(0.7, 2, 1) == pytest.approx(0.343)
    assert meanfield_tail_reference(0.7, 2, 2) == pytest.approx(0.0823543)
    assert meanfield_tail_reference(0.8, 1, 4) == pytest.approx(0.8**5)
    with pytest.raises(ValueError):
        meanfield_tail_reference(1.2, 2, 0)


def test_stationary_residual_tail():
    # exponential: memoryless, so P(alpha R > M) = exp(-M); deterministic: uniform residual
    assert stationary_residual_tail(class_spec(2, 3.0, 1), 1.5) == pytest.approx(math.exp(-1.5))
    spec = class_spec(2, 1.0, 1).replace(interarrival=(Deterministic(2.0),))
    assert stationary_residual_tail(spec, 0.25) == pytest.approx(0.75)
    spec = class_spec(2, 1.0, 1).replace(interarrival=(UniformInterval(0.0, 2.0),))
    # alpha = 1, E(G - M)^+ = (2 - M)^2 / 4
    assert stationary_residual_tail(spec, 0.5) == pytest.approx(1.5**2 / 4)


def test_tails_of_independent_mm1_queues():
    est = estimate_tail(class_spec(4, 2.0, 1), 20000.0, seed=2, ells=range(4))
    for l in range(4):
        iv = interval_of(est, l)
        assert abs(iv.estimate - 0.5 ** (l + 1)) < max(0.015, 4 * iv.stderr)
    assert is_monotone(est)
    assert est.arrivals > 0.75 * 2.0 * 20000.0


def test_tails_are_invariant_to_the_observed_queue():
    spec = class_spec(4, 2.8, 2)
    a = estimate_tail(spec, 8000.0, seed=4, queue=0, ells=range(3))
    b = estimate_tail(spec, 8000.0, seed=4, queue=3, ells=range(3))
    for l in range(3):
        ia, ib = interval_of(a, l), interval_of(b, l)
        assert abs(ia.estimate - ib.estimate) <= 3 * math.hypot(ia.stderr, ib.stderr)


def test_tail_outputs_are_reproducible():
    spec = class_spec(3, 2.0, 2)
    a = estimate_tail(spec, 2000.0, seed=11, reps=3, threads=1)
    b = estimate_tail(spec, 2000.0, seed=11, reps=3, threads=3)
    assert a.rows() == b.rows()
    assert (a.spec_hash, a.seed, a.horizon) == (b.spec_hash, 11, 2000.0)


def test_run_batches_partition():
    br = run_batches(class_spec(2, 1.0, 1), 1000.0, batches=8, seed=1)
    assert br.edges[0] == 200.0 and len(br.batches) == 8
    total = sum(b["z_time"].sum() for b in br.batches)
    assert total == pytest.approx(2 * 800.0)


def test_worker_count_and_ordering(monkeypatch):
    monkeypatch.setenv("JSQLAB_THREADS", "3")
    assert worker_count() == 3
    assert worker_count(5) == 5
    monkeypatch.delenv("JSQLAB_THREADS")
    assert worker_count() == 1
    assert parallel_map(lambda x: x * x, range(20), 4) == [x * x for x in range(20)]


def test_section7_ladder_values():
    p = Section7Params(0.001, 0.01, 1000, 4, 1e-46)
    assert p.h(1) == 1.0
    assert p.h(2) == 1000.0
    assert p.h(3) == pytest.approx(1e9)
    assert p.log_h(4) == pytest.approx(math.sqrt(1e9))  # h(4) = exp(sqrt(h(3)))
    assert p.h(0) == pytest.approx(1e-49)
    # rho = gamma0 + (1 - eta) + sum_{i >= 2} h(i)^(1 - i)
    assert p.rho() == pytest.approx(0.001 + 0.99 + 1e-3 + 1e-18, rel=1e-12)
    assert p.violations() == []
    assert p.K_eps == math.floor((1 / 2000) / 1e-46)


def test_strict_mode_rejects_large_epsilon():
    p = Section7Params(0.001, 0.01, 1000, 4, 1e-3, strict=True)
    with pytest.raises(StrictViolation) as e:
        build_section7_spec(p)
    assert any("epsilon" in f for f in e.value.failed)


def test_strict_specs_are_not_simulated():
    net = build_section7_spec(Section7Params(0.001, 0.01, 1000, 4, 1e-46, strict=True))
    assert net.report["desk_infeasible"]
    assert 4 in net.report["dropped_classes"]
    with pytest.raises(DeskInfeasible):
        ladder_stats(net, reps=1)


def test_parameter_validation():
    with pytest.raises(ValueError):
        Section7Params(0.01, 0.01, 1000, 4, 1e-3)
    with pytest.raises(ValueError):
        Section7Params(0.001, 0.01, 1000, 2, 1e-3)


def test_relaxed_report():
    net = build_section7_spec(RELAXED)
    assert net.report["rho"] == pytest.approx(0.005 + 0.99 + 1 / 20 + 20.0**-6, rel=1e-6)
    assert net.spec.N == 2 and net.spec.K == len(net.classes)
    assert net.classes[:4] == [0, 1, 2, 3]


def test_ladder_without_large_jobs_always_falls():
    net = build_section7_spec(RELAXED, include_large=False)
    res = ladder_stats(net, level=1, reps=20, seed=1, max_events=200_000)
    # replications that hit the event cap are counted separately and carry no direction
    assert res.up == 0 and res.down >= 15
    assert res.p_down.estimate == 1.0


def test_ladder_outcomes_partition_replications():
    net = build_section7_spec(RELAXED)
    res = ladder_stats(net, level=2, reps=4, seed=2, max_events=2000)
    assert res.down + res.up + res.exceeded == 4
    done = res.down + res.up
    if done:
        assert res.p_down.estimate + res.p_up.estimate == pytest.approx(1.0)


def test_workload_comparison_of_identical_specs():
    spec = class_spec(3, 2.0, 2)
    res = workload_comparison(spec, spec, 4000.0, seed=6)
    assert res.ratio.contains(1.0)
    assert res.hash_a == res.hash_b


def test_hitting_time_small_example():
    spec = class_spec(3, 1.8, 2)
    params = build_params(spec)
    x0 = loaded_state(spec, [20, 20, 20])
    M = 10.0
    res = estimate_hitting_time(spec, params, M, x0, reps=8, seed=1, horizon=2000.0)
    assert res.failures == 0
    assert np.all(res.taus > 0)
    assert res.norm_x0 > M
    assert np.all(res.taus_after_1 >= 1.0)


def test_drift_audit_small_example():
    spec = three_queue_discrete()
    rep = drift_audit(spec, build_params(spec), horizon=50.0, points=100, max_arrivals=30, reps=50, seed=2)
    assert rep.flow_points == 100
    assert rep.arrivals_checked == 30
    assert rep.jump_exact
    assert rep.clean
