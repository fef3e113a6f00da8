"""Audit of the norm's drift along simulated trajectories."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..config import spec_hash
from ..engine.core import Simulator, snapshot
from ..engine.driver import make_simulator
from ..engine.metrics import TimeAverages
from ..lyapunov.jumps import arrival_jump_expectation
from ..lyapunov.norms import flow_derivative, norm_total
from ..lyapunov.params import LyapunovParams
from ..lyapunov.state import StateSnapshot
from ..network import NetworkSpec
from .batches import parallel_map
from .hitting import _set_residuals, current_norm, snapshot_initial_jobs
from .stats import upper_bound

JUMP_TOL = 1e-9
FLOW_TOL = -1e-9


@dataclass
class DriftReport:
    flow_points: int
    flow_violations: list  # (t, which, slack, state)
    arrivals_checked: int
    jump_violations: list  # (t, stream, value, stderr, state)
    jump_max: float
    jump_exact: bool
    increments: np.ndarray  # (||X(t)|| - ||x||) / t per replication
    increment_mean: float
    increment_upper: float
    C2: float
    t: float
    seed: int
    spec_hash: str
    notes: list = field(default_factory=list)

    @property
    def increment_bound_holds(self) -> bool:
        return self.increment_upper <= self.C2

    @property
    def clean(self) -> bool:
        return not self.flow_violations and not self.jump_violations and self.increment_bound_holds

    def rows(self) -> list:
        return [
            ["check", "count", "violations", "value", "bound"],
            ["flow", self.flow_points, len(self.flow_violations), "", ""],
            ["arrival_jump", self.arrivals_checked, len(self.jump_violations), self.jump_max, JUMP_TOL],
            ["mean_increment", len(self.increments), int(not self.increment_bound_holds), self.increment_upper, self.C2],
        ]


def _flow_check(snap: StateSnapshot, params: LyapunovParams, t: float, out: list):
    fd = flow_derivative(snap, params)
    for which, slack in (("L+R/2", fd.slack_L_R), ("A", fd.slack_A), ("total", fd.slack_total)):
        if slack < FLOW_TOL:
            out.append((t, which, slack, snap))


def trajectory_checks(
    spec: NetworkSpec,
    params: LyapunovParams,
    horizon: float,
    points: int = 1000,
    max_arrivals: int = 200,
    jump_budget: Optional[int] = None,
    seed: int = 0,
    rep: int = 0,
):
    """Flow bounds on a grid of `points` states and jump expectations at the first arrivals.

    jump_budget=None asks for exact expectations and falls back to 4000
    Monte Carlo draws when some service law is not discrete.
    """
    sim = Simulator(spec, seed, rep, acc=TimeAverages(spec.N))
    st = sim.state
    flow_viol, jump_viol = [], []
    jump_max = -math.inf
    exact = jump_budget is None and all(d.atoms() is not None for d in _laws(spec))
    budget = None if exact else (jump_budget or 4000)
    next_g = horizon / points
    n_flow = 0
    n_jump = 0
    while True:
        t, kind, idx = sim.peek()
        while next_g <= min(t, horizon) and n_flow < points:
            _flow_check(snapshot(st, next_g), params, next_g, flow_viol)
            n_flow += 1
            next_g = horizon * (n_flow + 1) / points
        if t >= horizon or (n_flow >= points and n_jump >= max_arrivals):
            break
        if kind == "arrival" and n_jump < max_arrivals:
            pre = snapshot(st, t)
            est = arrival_jump_expectation(pre, params, idx, budget=budget, seed=seed + n_jump)
            n_jump += 1
            jump_max = max(jump_max, est.value)
            excess = est.value - (0.0 if est.exact else 2.0 * est.stderr)
            if excess > JUMP_TOL:
                jump_viol.append((t, idx, est.value, est.stderr, pre))
        sim.step()
    return n_flow, flow_viol, n_jump, jump_viol, jump_max, exact


def mean_increment(
    spec: NetworkSpec,
    params: LyapunovParams,
    x: StateSnapshot,
    t: float = 1.0,
    reps: int = 500,
    seed: int = 0,
    threads: Optional[int] = None,
    backend: str = "auto",
) -> np.ndarray:
    """(||X(t)|| - ||x||) / t for independent replications started at x."""
    jobs, residuals = snapshot_initial_jobs(spec, x)

    def one(rep):
        sim = make_simulator(spec, seed, rep, backend, initial_jobs=jobs)
        _set_residuals(sim, residuals)
        start = current_norm(sim, params)
        sim.run_until(t)
        return (current_norm(sim, params) - start) / t

    return np.array(parallel_map(one, range(reps), threads))


def reference_state(spec: NetworkSpec) -> StateSnapshot:
    """Empty network with every stream one mean interarrival time from its next arrival."""
    return StateSnapshot(spec.N, (), tuple(1.0 for _ in range(spec.K)))


def drift_audit(
    spec: NetworkSpec,
    params: LyapunovParams,
    horizon: float = 200.0,
    points: int = 1000,
    max_arrivals: int = 200,
    jump_budget: Optional[int] = None,
    x: Optional[StateSnapshot] = None,
    t: float = 1.0,
    reps: int = 500,
    seed: int = 0,
    threads: Optional[int] = None,
) -> DriftReport:
    n_flow, fv, n_jump, jv, jmax, exact = trajectory_checks(
        spec, params, horizon, points, max_arrivals, jump_budget, seed
    )
    x = reference_state(spec) if x is None else x
    inc = mean_increment(spec, params, x, t, reps, seed + 1, threads)
    C2 = float(params.mu_ring.sum())
    return DriftReport(
        flow_points=n_flow,
        flow_violations=fv,
        arrivals_checked=n_jump,
        jump_violations=jv,
        jump_max=jmax,
        jump_exact=exact,
        increments=inc,
        increment_mean=float(inc.mean()),
        increment_upper=upper_bound(inc),
        C2=C2,
        t=t,
        seed=seed,
        spec_hash=spec_hash(spec),
    )


def _laws(spec):
    from ..engine.core import service_law_list

    return service_law_list(spec)
