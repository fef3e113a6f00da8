"""Return times to a norm ball from large initial states."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..engine.core import InitialJob
from ..engine.driver import make_simulator
from ..engine.fast import FastSimulator
from ..lyapunov.norms import norm_total
from ..lyapunov.params import LyapunovParams
from ..lyapunov.state import StateSnapshot
from ..network import NetworkSpec
from .batches import parallel_map
from .stats import Interval, batch_means_ci


class HorizonExceeded(RuntimeError):
    pass


def loaded_state(spec: NetworkSpec, jobs_per_queue, residual: float = 1.0) -> list:
    """Initial jobs: jobs_per_queue[n] jobs of the given residual at queue n, all from stream 0."""
    out = []
    for n, c in enumerate(jobs_per_queue):
        for _ in range(int(c)):
            out.append(InitialJob(queue=n, residual=residual, stream=0))
    return out


def snapshot_initial_jobs(spec: NetworkSpec, snap: StateSnapshot):
    """(initial jobs, residual interarrival times) reproducing a snapshot's jobs and clocks."""
    jobs = []
    for j in snap.jobs:
        m = spec.service_for(j.stream, j.selection, j.queue).mean()
        jobs.append(InitialJob(j.queue, j.w * m, j.stream, j.selection, j.age * m))
    residuals = [s / a for s, a in zip(snap.s, spec.alpha())]
    return jobs, residuals


def fast_norm(sim: FastSimulator, params: LyapunovParams) -> float:
    """Norm of a fast simulator's state at a segment end, straight from its arrays."""
    mu = sim.mu
    m_ring = 1.0 if params.mode == "class" else 1.0 / mu
    z = sim.qlen
    psi_z = np.atleast_1d(params.psi_Z(z))
    cap = sim.v.shape[1]
    mask = np.arange(cap)[None, :] < z[:, None]
    w = mu * sim.v[mask]
    rows = np.nonzero(mask)[0]
    trunc = np.zeros(sim.N)
    np.add.at(trunc, rows, m_ring * np.minimum(w + params.eps2, params.L2))
    L = float(trunc @ psi_z)
    R = float(m_ring * np.sum(params.psi_W(w))) if len(w) else 0.0
    s = params.alpha * (sim.next_arr - sim.clock)
    scale = 1.0 + params.eps1 / 2.0
    A = float(scale * np.sum((params.arrival_weight @ psi_z) * np.atleast_1d(params.psi_A(s))))
    return L + R + A


def current_norm(sim, params: LyapunovParams) -> float:
    if isinstance(sim, FastSimulator):
        return fast_norm(sim, params)
    return norm_total(sim.snapshot(), params)


@dataclass
class HittingResult:
    M: float
    norm_x0: float
    taus: np.ndarray  # inf where the horizon was reached first
    taus_after_1: np.ndarray
    failures: int
    mean: float
    ci: Interval
    max: float
    bound: float  # C3 * ||x0||
    seed: int
    notes: list = field(default_factory=list)

    def as_dict(self) -> dict:
        return {
            "M": self.M,
            "norm_x0": self.norm_x0,
            "reps": len(self.taus),
            "failures": self.failures,
            "mean_tau": self.mean,
            "ci_low": self.ci.low,
            "ci_high": self.ci.high,
            "max_tau": self.max,
            "mean_tau_after_1": float(np.mean(self.taus_after_1)),
            "C3_norm_x0": self.bound,
            "seed": self.seed,
        }


def _one_replication(spec, params, M, jobs, residuals, seed, rep, horizon, dt, rel, backend):
    sim = make_simulator(spec, seed, rep, backend, initial_jobs=jobs)
    if residuals is not None:
        _set_residuals(sim, residuals)
    n0 = current_norm(sim, params)
    tau = 0.0 if n0 <= M else None
    tau1 = None
    t = 0.0
    while t < horizon:
        t = min(t + max(dt, rel * t), horizon)
        sim.run_until(t)
        if current_norm(sim, params) <= M:
            if tau is None:
                tau = t
            if t >= 1.0:
                tau1 = t
                break
    return n0, (math.inf if tau is None else tau), (math.inf if tau1 is None else tau1)


def _set_residuals(sim, residuals):
    if isinstance(sim, FastSimulator):
        sim.next_arr[:] = sim.clock + np.asarray(residuals, dtype=float)
    else:
        sim.state.next_arrival[:] = sim.state.clock + np.asarray(residuals, dtype=float)


def estimate_hitting_time(
    spec: NetworkSpec,
    params: LyapunovParams,
    M: float,
    x0,
    reps: int = 200,
    seed: int = 0,
    horizon: float = 1e4,
    dt: Optional[float] = None,
    rel: float = 0.01,
    threads: Optional[int] = None,
    backend: str = "auto",
) -> HittingResult:
    """First observation time with norm at most M, per replication.

    x0 is a StateSnapshot or a list of InitialJob. The norm is observed at
    t = 0 and then at steps of max(dt, rel * t), so reported times are grid
    points and carry a relative resolution of about rel.
    The t >= 1 variant only counts grid points at or after time 1.
    Replications that reach the horizon count as failures with time inf.
    """
    if isinstance(x0, StateSnapshot):
        jobs, residuals = snapshot_initial_jobs(spec, x0)
    else:
        jobs, residuals = list(x0), None
    if dt is None:
        dt = 0.25 * min(d.mean() for d in _laws(spec))

    def one(rep):
        return _one_replication(spec, params, M, jobs, residuals, seed, rep, horizon, dt, rel, backend)

    res = parallel_map(one, range(reps), threads)
    norms = [r[0] for r in res]
    taus = np.array([r[1] for r in res])
    taus1 = np.array([r[2] for r in res])
    ok = np.isfinite(taus)
    C3 = 1.0 / (params.eps1 * float(params.mu_ring.sum()))
    finite = taus[ok]
    ci = batch_means_ci(finite) if len(finite) > 1 else Interval(math.nan, math.nan, math.nan, math.nan)
    notes = []
    if not ok.all():
        notes.append(f"{int((~ok).sum())} replications reached the horizon")
    return HittingResult(
        M=M,
        norm_x0=float(np.mean(norms)),
        taus=taus,
        taus_after_1=taus1,
        failures=int((~ok).sum()),
        mean=float(finite.mean()) if len(finite) else math.inf,
        ci=ci,
        max=float(taus.max()),
        bound=C3 * float(np.mean(norms)),
        seed=seed,
        notes=notes,
    )


def _laws(spec):
    from ..engine.core import service_law_list

    return service_law_list(spec)
