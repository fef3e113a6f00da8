import hashlib
import json
import os
import subprocess
import sys
from collections import defaultdict

import numpy as np
import pytest

from conftest import class_spec, mm1, station_spec
from jsqlab.distributions import Deterministic, discrete, exponential
from jsqlab.engine import (
    FastPathUnavailable,
    FastSimulator,
    InitialJob,
    InvalidInitialState,
    Simulator,
    TimeAverages,
    assign_arriving_job,
    init_state,
    project,
    run,
    simulate,
    snapshot,
    supports,
)
from jsqlab.engine.io import event_line, read_events_jsonl, write_events_jsonl
from jsqlab.experiments.section7 import Section7Params, build_section7_spec
from jsqlab.network import (
    DESIGNATED,
    FIFO,
    JLLQ,
    JSQ,
    LIFO,
    PS,
    RANDOM_D1,
    AssignmentRule,
    ClassIndependent,
    Discipline,
    NetworkSpec,
    explicit,
)

DISCIPLINES = [FIFO, LIFO, PS, Discipline("priority", "shortest"), Discipline("priority", "longest")]
ASSIGNMENTS = [JSQ, JLLQ, RANDOM_D1]


def log_digest(events):
    h = hashlib.sha256()
    for rec in events:
        h.update(event_line(rec).encode())
    return h.hexdigest()


def test_mm1_time_averages():
    # M/M/1 at rho = 0.8: P(Z > 0) = 0.8 and E Z = rho / (1 - rho) = 4
    busy, means = [], []
    for rep in range(6):
        res = simulate(mm1(0.8), 30000.0, seed=5, rep=rep)
        busy.append(1.0 - res.metrics["z_distribution"][0][0])
        means.append(res.metrics["mean_z"][0])
    assert abs(np.mean(busy) - 0.8) < 0.01
    assert abs(np.mean(means) - 4.0) < 0.4


def test_same_seed_same_log_and_different_seed_differs():
    spec = class_spec(5, 3.5, 2)
    a = run(spec, 200.0, seed=9)
    b = run(spec, 200.0, seed=9)
    c = run(spec, 200.0, seed=10)
    assert log_digest(a.events) == log_digest(b.events)
    assert a.metrics == b.metrics
    assert log_digest(a.events) != log_digest(c.events)


@pytest.mark.parametrize("disc", DISCIPLINES, ids=lambda d: d.kind + d.direction)
@pytest.mark.parametrize("asg", ASSIGNMENTS, ids=lambda a: a.kind)
def test_fast_kernel_reproduces_general_engine(disc, asg):
    spec = class_spec(4, 3.0, 2, law=discrete([(0.5, 0.5), (1.5, 0.5)]), discipline=disc, assignment=asg)
    assert supports(spec)
    general = run(spec, 300.0, seed=21, rep=1)
    fast = simulate(spec, 300.0, seed=21, rep=1, backend="fast")
    assert len(general.events) > 500
    assert log_digest(general.events) == log_digest(fast.events)
    for key in ("mean_z", "z_distribution"):
        assert np.allclose(general.metrics[key], fast.metrics[key], rtol=1e-9, atol=1e-12)


_SCRIPT = """
import hashlib, sys
sys.path.insert(0, {tests!r})
from conftest import class_spec
from jsqlab._accel import backend_name
from jsqlab.engine import simulate
from jsqlab.engine.io import event_line
from jsqlab.network import Discipline, AssignmentRule
spec = class_spec(4, 3.0, 2, discipline=Discipline({disc!r}, {dirn!r}), assignment=AssignmentRule({asg!r}))
res = simulate(spec, 300.0, seed=21, rep=1, backend="fast")
h = hashlib.sha256()
for rec in res.events:
    h.update(event_line(rec).encode())
print(backend_name(), h.hexdigest())
"""


@pytest.mark.parametrize("disc,dirn,asg", [("fifo", "", "jsq"), ("ps", "", "jllq"), ("priority", "longest", "random")])
def test_pure_python_kernels_match_compiled(disc, dirn, asg):
    code = _SCRIPT.format(tests=os.path.dirname(__file__), disc=disc, dirn=dirn, asg=asg)
    out = {}
    for flag in ("0", "1"):
        env = dict(os.environ, JSQLAB_DISABLE_NUMBA=flag)
        res = subprocess.run([sys.executable, "-c", code], env=env, capture_output=True, text=True, check=True)
        name, digest = res.stdout.split()
        out[name] = digest
    general = run(class_spec(4, 3.0, 2, discipline=Discipline(disc, dirn), assignment=AssignmentRule(asg)), 300.0,
                  seed=21, rep=1)
    assert "python" in out
    assert set(out.values()) == {log_digest(general.events)}


def test_jsq_replay_audit():
    spec = class_spec(6, 4.5, 3, tie_break="min_index")
    res = run(spec, 500.0, seed=3)
    z = [0] * 6
    for rec in res.events:
        if rec.kind == "arrival":
            best = min(z[n] for n in rec.A)
            assert z[rec.queue] == best
            assert rec.queue == min(n for n in rec.A if z[n] == best)
            z[rec.queue] += 1
        else:
            z[rec.queue] -= 1
        assert z == list(rec.z)


def test_jsq_uniform_ties_are_balanced():
    spec = class_spec(2, 0.05, 2, tie_break="uniform")
    res = run(spec, 20000.0, seed=1)
    tied = [r.queue for r in res.events if r.kind == "arrival" and r.z[r.queue] == 1 and sum(r.z) == 1]
    assert len(tied) > 500
    assert abs(np.mean(tied) - 0.5) < 0.05


def lindley_departures(arrivals, service):
    out, last = [], -np.inf
    for a in arrivals:
        last = max(a, last) + service
        out.append(last)
    return out


def test_fifo_departures_follow_lindley():
    spec = class_spec(3, 2.4, 2, law=Deterministic(1.0))
    res = run(spec, 2000.0, seed=4)
    arr, dep = defaultdict(list), defaultdict(list)
    for r in res.events:
        (arr if r.kind == "arrival" else dep)[r.queue].append(r.t)
    for n in range(3):
        want = [d for d in lindley_departures(arr[n], 1.0) if d < 2000.0]
        assert dep[n] == pytest.approx(want, abs=1e-9)


@pytest.mark.parametrize("disc", [FIFO, LIFO, PS])
def test_work_conservation(disc):
    spec = class_spec(3, 2.0, 2, law=exponential(1.0), discipline=disc)
    acc = TimeAverages(3)
    sim = Simulator(spec, seed=8, acc=acc)
    offered = np.zeros(3)

    def on_event(st, rec):
        if rec.kind == "arrival":
            job = max(st.queues[rec.queue], key=lambda j: j.id)
            offered[rec.queue] += job.initial_service

    sim.run_until(1500.0, on_event)
    left = np.array([sim.state.workload(n) for n in range(3)])
    busy = 1500.0 - acc.z_time[:, 0]
    assert np.allclose(offered - left, busy, rtol=1e-9)


def test_events_jsonl_round_trip(tmp_path):
    res = run(class_spec(3, 2.0, 2), 50.0, seed=2)
    p = tmp_path / "e.jsonl"
    write_events_jsonl(p, res.events)
    back = read_events_jsonl(p)
    assert back == [r.as_dict() for r in res.events]


def test_initial_state_validation():
    spec = class_spec(2, 1.0, 2)
    with pytest.raises(InvalidInitialState):
        init_state(spec, [InitialJob(queue=2, residual=1.0)])
    with pytest.raises(InvalidInitialState):
        init_state(spec, [InitialJob(queue=0, residual=0.0)])
    with pytest.raises(InvalidInitialState):
        init_state(spec, [InitialJob(queue=0, residual=2.0, initial_service=1.0)])


def test_snapshot_and_projection():
    spec = class_spec(3, 2.0, 2)
    sim = Simulator(spec, seed=1, initial_jobs=[InitialJob(0, 2.0), InitialJob(0, 1.0), InitialJob(2, 0.5)])
    x = sim.snapshot()
    assert list(x.z) == [2, 0, 1]
    x.validate()
    p = project(sim.state, 2)
    assert p.N == 2 and list(p.z) == [2, 0]
    assert project(x, 1).jobs == tuple(j for j in x.jobs if j.queue == 0)


def test_fast_path_coverage():
    assert not supports(station_spec())
    with pytest.raises(FastPathUnavailable):
        FastSimulator(build_section7_spec(Section7Params(0.005, 0.01, 20, 4, 0.02)).spec)


def _designated_spec(kappa=0):
    law = discrete([(0.2, 0.8), (3.0, 0.2)])
    return NetworkSpec(
        N=2,
        interarrival=(exponential(0.5),),
        selection=(explicit({(0, 1): 1.0}),),
        service=ClassIndependent((law, law)),
        discipline=DESIGNATED,
        assignment=AssignmentRule("jsq_handicap", kappa),
    )


def test_handicap_assignment_example():
    # designated queue 0 holds 2 jobs, queue 1 holds 3; with kappa = 2 the comparison is 4 vs 3
    jobs = [InitialJob(0, 5.0), InitialJob(0, 1.0)] + [InitialJob(1, 1.0) for _ in range(3)]
    st = init_state(_designated_spec(2), jobs, seed=0)
    assert st.designated_queue == 0
    assert assign_arriving_job(st, _designated_spec(2), 0, (0, 1)) == 1
    st0 = init_state(_designated_spec(0), jobs, seed=0)
    assert assign_arriving_job(st0, _designated_spec(0), 0, (0, 1)) == 0


def test_designated_discipline_invariants():
    spec = _designated_spec(0)
    sim = Simulator(spec, seed=3)
    seen = {"alone": 0, "crowded": 0}

    def on_event(st, rec):
        d = st.designated()
        if d is None:
            assert all(not q for q in st.queues)
            return
        assert d.n == st.designated_queue and d in st.queues[d.n]
        q = st.queues[d.n]
        # the designated job is served only when alone; otherwise the shortest other job is
        if len(q) == 1:
            assert d.r == 1.0
            seen["alone"] += 1
        else:
            assert d.r == 0.0
            others = [j for j in q if j is not d]
            served = [j for j in others if j.r > 0]
            assert len(served) == 1
            shortest = min(st.residual_at(j, st.clock) for j in others)
            assert st.residual_at(served[0], st.clock) == shortest
            seen["crowded"] += 1
        o = st.queues[1 - d.n]
        if o:
            assert sum(j.r for j in o) == pytest.approx(1.0)

    sim.run_until(3000.0, on_event)
    assert seen["alone"] > 50 and seen["crowded"] > 50
