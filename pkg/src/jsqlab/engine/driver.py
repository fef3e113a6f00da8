"""Backend selection for whole runs."""
from __future__ import annotations

from typing import Optional

from ..network import NetworkSpec
from .core import RunResult, Simulator, run
from .fast import FastSimulator, supports
from .metrics import DEFAULT_THRESHOLDS, TimeAverages


def make_simulator(spec: NetworkSpec, seed: int = 0, rep: int = 0, backend: str = "auto",
                   initial_jobs=(), thresholds=DEFAULT_THRESHOLDS, event_cap: int = 10**12):
    """FastSimulator when the kernel covers spec, else the general engine with time averages.

    Both expose run_until, clock, stats, total_jobs, total_workload and snapshot.
    """
    if backend not in ("auto", "fast", "general"):
        raise ValueError(f"unknown backend {backend!r}")
    if backend == "fast" or (backend == "auto" and supports(spec)):
        return FastSimulator(spec, seed=seed, rep=rep, initial_jobs=initial_jobs, thresholds=thresholds,
                             event_cap=event_cap)
    return Simulator(spec, seed, rep, initial_jobs, None, event_cap, TimeAverages(spec.N, thresholds))


def simulate(
    spec: NetworkSpec,
    horizon: float,
    seed: int = 0,
    rep: int = 0,
    backend: str = "auto",
    record_events: bool = True,
    event_cap: int = 10**9,
    initial_jobs=(),
) -> RunResult:
    """Run to horizon with the fastest applicable backend; both give the same event log."""
    if backend == "general" or (backend == "auto" and not supports(spec)):
        return run(spec, horizon, seed, rep=rep, initial_jobs=initial_jobs, event_cap=event_cap,
                   record_events=record_events)
    sim = FastSimulator(spec, seed=seed, rep=rep, record_events=record_events, event_cap=event_cap,
                        initial_jobs=initial_jobs)
    if horizon > 0:
        sim.run_until(horizon)
    return RunResult(sim.events, sim.summary(), sim)
