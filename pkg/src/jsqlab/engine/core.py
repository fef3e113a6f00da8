"""Event-driven simulator of the piecewise-deterministic network process.

Between events every job's residual falls at its effort rate and every
stream's clock runs down; at arrivals and departures the efforts are
reassigned by the discipline. Residuals at a queue are brought up to date
lazily, only when something happens at that queue.

Randomness comes from independent streams addressed by
(seed, replication, purpose, index), so a run is a pure function of its
spec, seed and replication number.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..lyapunov.state import SnapshotJob, StateSnapshot
from ..network import NetworkSpec, sample_selection
from ..rng import ARRIVALS, SELECTION, SERVICE, TIES, RngStream, SampleBuffer


class InvalidInitialState(ValueError):
    pass


class EventBudgetExceeded(RuntimeError):
    pass


class Job:
    __slots__ = ("id", "k", "A", "n", "arrival_time", "initial_service", "v", "r", "mu")

    def __init__(self, id, k, A, n, arrival_time, initial_service, v, mu):
        self.id = id
        self.k = k
        self.A = A
        self.n = n
        self.arrival_time = arrival_time
        self.initial_service = initial_service
        self.v = v
        self.r = 0.0
        self.mu = mu

    def __repr__(self):
        return f"Job(id={self.id}, k={self.k}, n={self.n}, v={self.v:.6g}, r={self.r:g})"


@dataclass
class InitialJob:
    """A job present at time 0, listed per queue in rank order."""

    queue: int
    residual: float
    stream: int = 0
    selection: Optional[tuple] = None
    age: float = 0.0
    initial_service: Optional[float] = None


@dataclass
class SimState:
    spec: NetworkSpec
    clock: float
    queues: list
    tq: list  # time up to which each queue's residuals are current
    next_arrival: np.ndarray
    designated_queue: Optional[int] = None
    designated_job: Optional[int] = None
    seq: int = 0
    next_id: int = 0
    arrivals: int = 0
    departures: int = 0
    comp_time: list = field(default_factory=list)
    comp_idx: list = field(default_factory=list)
    rng: dict = field(default_factory=dict)

    @property
    def N(self) -> int:
        return self.spec.N

    def z(self) -> list:
        return [len(q) for q in self.queues]

    def designated(self) -> Optional[Job]:
        if self.designated_queue is None:
            return None
        for j in self.queues[self.designated_queue]:
            if j.id == self.designated_job:
                return j
        return None

    def residual_at(self, job: Job, t: float) -> float:
        return job.v - job.r * (t - self.tq[job.n])

    def workload(self, n: int, t: Optional[float] = None) -> float:
        t = self.clock if t is None else t
        return sum(j.v for j in self.queues[n]) - (t - self.tq[n] if self.queues[n] else 0.0)

    def designated_residual(self, t: Optional[float] = None) -> float:
        j = self.designated()
        if j is None:
            return 0.0
        return self.residual_at(j, self.clock if t is None else t)


def service_law_list(spec: NetworkSpec) -> list:
    """Distinct service laws in a fixed order; law i draws from SERVICE stream i."""
    h = spec.homogeneous_service()
    if h is not None:
        return [h]
    if spec.mode == "station":
        out = []
        for d in [d for _, _, d in spec.service.per_class] + [spec.service.default]:
            if d is not None and d not in out:
                out.append(d)
        return out
    return spec.service_laws()


class _Streams:
    """All random streams of one replication."""

    def __init__(self, spec: NetworkSpec, seed: int, rep: int):
        self.laws = service_law_list(spec)
        self.law_index = {d: i for i, d in enumerate(self.laws)}
        self.interarrival = [
            SampleBuffer(g, RngStream(seed, (rep, ARRIVALS, k))) for k, g in enumerate(spec.interarrival)
        ]
        self.service = [SampleBuffer(d, RngStream(seed, (rep, SERVICE, i))) for i, d in enumerate(self.laws)]
        self.selection = [RngStream(seed, (rep, SELECTION, k)) for k in range(spec.K)]
        self.ties = [RngStream(seed, (rep, TIES, k)) for k in range(spec.K)]

    def service_time(self, law) -> float:
        return self.service[self.law_index[law]].next()


# efforts


def _argbest(jobs, key, skip_id=None, largest=False):
    best, bi = None, -1
    for i, j in enumerate(jobs):
        if j.id == skip_id:
            continue
        v = key(j)
        if best is None or (v > best if largest else v < best):
            best, bi = v, i
    return bi


def assign_efforts(state: SimState, spec: NetworkSpec, n: Optional[int] = None):
    """Reassign efforts at queue n (all queues if None); residuals must be current."""
    queues = range(spec.N) if n is None else (n,)
    kind = spec.discipline.kind
    for m in queues:
        jobs = state.queues[m]
        for j in jobs:
            j.r = 0.0
        if not jobs:
            state.comp_time[m] = math.inf
            state.comp_idx[m] = -1
            continue
        if kind == "fifo":
            jobs[0].r = 1.0
        elif kind == "lifo":
            jobs[-1].r = 1.0
        elif kind == "ps":
            share = 1.0 / len(jobs)
            for j in jobs:
                j.r = share
        elif kind == "priority":
            i = _argbest(jobs, lambda j: j.v, largest=spec.discipline.direction == "longest")
            jobs[i].r = 1.0
        elif kind == "designated":
            if m == state.designated_queue:
                if len(jobs) == 1:
                    jobs[0].r = 1.0
                else:
                    i = _argbest(jobs, lambda j: j.v, skip_id=state.designated_job)
                    jobs[i].r = 1.0
            else:
                jobs[_argbest(jobs, lambda j: j.v, largest=True)].r = 1.0
        _update_completion(state, m)


def _update_completion(state: SimState, n: int):
    best, bi = math.inf, -1
    t0 = state.tq[n]
    for i, j in enumerate(state.queues[n]):
        if j.r > 0:
            c = t0 + j.v / j.r
            if c < best:
                best, bi = c, i
    state.comp_time[n] = best
    state.comp_idx[n] = bi


def _advance(state: SimState, n: int, t: float, acc=None):
    dt = t - state.tq[n]
    if dt <= 0:
        state.tq[n] = max(state.tq[n], t)
        return
    if acc is not None:
        acc.queue_interval(state, n, state.tq[n], t)
    for j in state.queues[n]:
        if j.r > 0:
            j.v -= j.r * dt
    state.tq[n] = t


def _designate(state: SimState, n: int):
    jobs = state.queues[n]
    state.designated_queue = n
    state.designated_job = jobs[_argbest(jobs, lambda j: j.v, largest=True)].id


# construction


def init_state(
    spec: NetworkSpec,
    initial_jobs=(),
    seed: int = 0,
    rep: int = 0,
    initial_residuals=None,
    start: float = 0.0,
) -> SimState:
    """Fresh state at time `start`; residual interarrival times are drawn unless supplied."""
    N, K = spec.N, spec.K
    streams = _Streams(spec, seed, rep)
    queues = [[] for _ in range(N)]
    nid = 0
    for ij in initial_jobs:
        if not isinstance(ij, InitialJob):
            ij = InitialJob(**ij) if isinstance(ij, dict) else InitialJob(*ij)
        n = ij.queue
        if not 0 <= n < N:
            raise InvalidInitialState(f"queue {n} out of range")
        if not 0 <= ij.stream < K:
            raise InvalidInitialState(f"stream {ij.stream} out of range")
        if not ij.residual > 0:
            raise InvalidInitialState("residual service must be positive")
        A = tuple(sorted(ij.selection)) if ij.selection is not None else tuple(range(N))
        if n not in A:
            raise InvalidInitialState("queue not in the job's selection set")
        if queues[n] and start - ij.age < queues[n][-1].arrival_time:
            raise InvalidInitialState(f"jobs at queue {n} are not in rank order")
        init = ij.initial_service if ij.initial_service is not None else ij.residual
        if init < ij.residual:
            raise InvalidInitialState("residual exceeds initial service")
        law = spec.service_for(ij.stream, A, n)
        queues[n].append(Job(nid, ij.stream, A, n, start - ij.age, init, ij.residual, 1.0 / law.mean()))
        nid += 1
    if initial_residuals is None:
        nxt = np.array([start + streams.interarrival[k].next() for k in range(K)])
    else:
        if len(initial_residuals) != K or any(not u > 0 for u in initial_residuals):
            raise InvalidInitialState("need one positive residual interarrival time per stream")
        nxt = start + np.asarray(initial_residuals, dtype=float)
    state = SimState(
        spec=spec,
        clock=start,
        queues=queues,
        tq=[start] * N,
        next_arrival=nxt,
        next_id=nid,
        comp_time=[math.inf] * N,
        comp_idx=[-1] * N,
        rng={"streams": streams},
    )
    if spec.discipline.kind == "designated":
        for n in range(N):
            if queues[n]:
                _designate(state, n)
                break
    assign_efforts(state, spec)
    return state


# event selection and assignment


def next_event(state: SimState, spec: NetworkSpec):
    """(time, kind, index): kind is "departure" (index = queue) or "arrival" (index = stream).

    Departures win ties with arrivals; among departures the lowest queue and
    among arrivals the lowest stream index go first.
    """
    n = int(np.argmin(state.comp_time))
    td = state.comp_time[n]
    k = int(np.argmin(state.next_arrival))
    ta = float(state.next_arrival[k])
    if td <= ta:
        return td, "departure", n
    return ta, "arrival", k


def _current_key(state: SimState, spec: NetworkSpec, n: int, t: float) -> float:
    if spec.assignment.kind == "jllq":
        return state.workload(n, t)
    return float(len(state.queues[n]))


def assign_arriving_job(state: SimState, spec: NetworkSpec, k: int, A: tuple) -> int:
    """Queue joined by a stream-k arrival offered selection set A at the current clock."""
    rule = spec.assignment.kind
    t = state.clock
    if len(A) == 1:
        return A[0]
    if rule == "jsq_handicap" and state.designated_queue is not None:
        d = state.designated_queue
        o = 1 - d
        zd = len(state.queues[d]) + spec.assignment.kappa
        zo = len(state.queues[o])
        if zd < zo:
            return d
        if zo < zd:
            return o
        mins = [min(d, o), max(d, o)]
    elif rule == "random":
        mins = list(A)
    else:
        keys = [_current_key(state, spec, n, t) for n in A]
        best = min(keys)
        mins = [n for n, v in zip(A, keys) if v == best]
    if len(mins) == 1 or spec.tie_break == "min_index":
        return mins[0]
    u = state.rng["streams"].ties[k].uniform()
    return mins[min(int(u * len(mins)), len(mins) - 1)]


# event application


@dataclass
class EventRecord:
    seq: int
    t: float
    kind: str
    k_or_job: int
    queue: int
    z: list
    A: Optional[tuple] = None

    def as_dict(self) -> dict:
        d = {"seq": self.seq, "t": self.t, "kind": self.kind, "k_or_job": self.k_or_job, "queue": self.queue, "z": self.z}
        if self.A is not None:
            d["A"] = list(self.A)
        return d


def apply_event(state: SimState, spec: NetworkSpec, t: float, kind: str, index: int, acc=None) -> EventRecord:
    state.clock = t
    streams = state.rng["streams"]
    if kind == "departure":
        n = index
        _advance(state, n, t, acc)
        i = state.comp_idx[n]
        job = state.queues[n].pop(i)
        state.departures += 1
        if acc is not None:
            acc.departure(state, job, t)
        if spec.discipline.kind == "designated" and job.id == state.designated_job:
            o = 1 - n
            if state.queues[n]:
                _designate(state, n)
            elif state.queues[o]:
                _advance(state, o, t, acc)
                _designate(state, o)
                assign_efforts(state, spec, o)
            else:
                state.designated_queue = None
                state.designated_job = None
        assign_efforts(state, spec, n)
        rec = EventRecord(state.seq, t, "departure", job.id, n, state.z())
    else:
        k = index
        A = sample_selection(spec.selection[k], spec.N, k, streams.selection[k])
        n = assign_arriving_job(state, spec, k, A)
        _advance(state, n, t, acc)
        law = spec.service_for(k, A, n)
        y = streams.service_time(law)
        job = Job(state.next_id, k, A, n, t, y, y, 1.0 / law.mean())
        state.next_id += 1
        state.queues[n].append(job)
        state.arrivals += 1
        if spec.discipline.kind == "designated":
            if state.designated_queue is None:
                state.designated_queue = n
                state.designated_job = job.id
            elif n == state.designated_queue:
                cur = state.designated()
                if y >= cur.v:
                    state.designated_job = job.id
        assign_efforts(state, spec, n)
        state.next_arrival[k] = t + streams.interarrival[k].next()
        if acc is not None:
            acc.arrival(state, job, t)
        rec = EventRecord(state.seq, t, "arrival", k, n, state.z(), A)
    state.seq += 1
    return rec


# observation


def snapshot(state: SimState, at: Optional[float] = None, queues: Optional[int] = None) -> StateSnapshot:
    """StateSnapshot at time `at` (default: the clock), flowing residuals forward.

    With `queues` = N', only queues 0..N'-1 are kept.
    """
    t = state.clock if at is None else at
    spec = state.spec
    keep = spec.N if queues is None else queues
    jobs = []
    for n in range(keep):
        for i, j in enumerate(state.queues[n]):
            v = state.residual_at(j, t)
            jobs.append(SnapshotJob(n, i + 1, j.k, j.A, j.mu * (t - j.arrival_time), j.mu * v, j.r))
    alpha = spec.alpha()
    s = tuple(float(a * (u - t)) for a, u in zip(alpha, state.next_arrival))
    return StateSnapshot(keep, tuple(jobs), s)


def project(state, n_keep: int) -> StateSnapshot:
    """Restriction to queues 0..n_keep-1, keeping every stream coordinate."""
    if isinstance(state, StateSnapshot):
        if not 1 <= n_keep <= state.N:
            raise ValueError("projection size out of range")
        return StateSnapshot(n_keep, tuple(j for j in state.jobs if j.queue < n_keep), state.s)
    if not 1 <= n_keep <= state.spec.N:
        raise ValueError("projection size out of range")
    return snapshot(state, queues=n_keep)


# running


class Simulator:
    """Stepwise driver around a SimState."""

    def __init__(self, spec: NetworkSpec, seed: int = 0, rep: int = 0, initial_jobs=(), initial_residuals=None,
                 event_cap: int = 10**9, acc=None):
        self.spec = spec
        self.state = init_state(spec, initial_jobs, seed, rep, initial_residuals)
        self.event_cap = event_cap
        self.acc = acc
        if acc is not None:
            acc.start(self.state)

    def peek(self):
        return next_event(self.state, self.spec)

    def step(self) -> EventRecord:
        if self.state.seq >= self.event_cap:
            raise EventBudgetExceeded(f"more than {self.event_cap} events")
        t, kind, idx = next_event(self.state, self.spec)
        return apply_event(self.state, self.spec, t, kind, idx, self.acc)

    def run_until(self, horizon: float, on_event: Optional[Callable] = None, grid: Optional[float] = None,
                  on_grid: Optional[Callable] = None, stop: Optional[Callable] = None):
        """Process events with time < horizon, then flush flows to the horizon.

        on_grid(state, g) is called for each grid time g before the first
        event at or after it. stop(state, record) returning True ends the
        run right after that event.
        """
        st = self.state
        next_g = None
        if grid is not None and on_grid is not None:
            next_g = math.ceil(st.clock / grid - 1e-12) * grid
        while True:
            t, kind, idx = next_event(st, self.spec)
            limit = min(t, horizon)
            while next_g is not None and next_g < limit + (0 if t < horizon else 1e-300) and next_g <= horizon:
                on_grid(st, next_g)
                next_g += grid
                if next_g > horizon:
                    next_g = None
            if t >= horizon:
                break
            if st.seq >= self.event_cap:
                raise EventBudgetExceeded(f"more than {self.event_cap} events")
            rec = apply_event(st, self.spec, t, kind, idx, self.acc)
            if on_event is not None:
                on_event(st, rec)
            if stop is not None and stop(st, rec):
                return rec
        if horizon > st.clock:
            for n in range(self.spec.N):
                _advance(st, n, horizon, self.acc)
            st.clock = horizon
        return None

    def snapshot(self, at=None) -> StateSnapshot:
        return snapshot(self.state, at)

    @property
    def clock(self) -> float:
        return self.state.clock

    def stats(self) -> dict:
        return self.acc.stats()

    def summary(self) -> dict:
        return self.acc.summary(self.state)

    def total_jobs(self) -> int:
        return sum(len(q) for q in self.state.queues)

    def total_workload(self) -> float:
        return sum(self.state.workload(n) for n in range(self.spec.N))


@dataclass
class RunResult:
    events: list
    metrics: dict
    state: SimState


def run(
    spec: NetworkSpec,
    horizon: float,
    seed: int = 0,
    hooks: Optional[dict] = None,
    rep: int = 0,
    initial_jobs=(),
    initial_residuals=None,
    event_cap: int = 10**8,
    record_events: bool = True,
) -> RunResult:
    """Simulate up to `horizon`; returns the event log and time-averaged metrics.

    hooks may carry "on_event"(state, record), "grid" (spacing) with
    "on_grid"(state, t), and "stop"(state, record).
    """
    from .metrics import TimeAverages

    hooks = hooks or {}
    acc = TimeAverages(spec.N)
    sim = Simulator(spec, seed, rep, initial_jobs, initial_residuals, event_cap, acc)
    events = []
    user = hooks.get("on_event")

    def on_event(st, rec):
        if record_events:
            events.append(rec)
        if user is not None:
            user(st, rec)

    if horizon > 0:
        sim.run_until(horizon, on_event, hooks.get("grid"), hooks.get("on_grid"), hooks.get("stop"))
    metrics = acc.summary(sim.state)
    return RunResult(events, metrics, sim.state)
