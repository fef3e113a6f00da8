"""Time-average accumulators fed by the engine between events."""
from __future__ import annotations

import numpy as np

# queue lengths at or above this share the last histogram bin
Z_BINS = 64
DEFAULT_THRESHOLDS = (0.5, 1.0, 2.0, 4.0, 8.0)


class TimeAverages:
    """Per-queue occupation-time histogram and workload integrals.

    For each queue the accumulator records the time spent at each queue
    length, the integrals of z, workload and weighted workload, and the time
    during which the weighted workload and the maximum weighted age exceed
    each threshold.
    """

    def __init__(self, N: int, thresholds=DEFAULT_THRESHOLDS, start: float = 0.0):
        self.N = N
        self.thresholds = np.asarray(thresholds, dtype=float)
        self.reset(start)

    def reset(self, start: float):
        N, X = self.N, len(self.thresholds)
        self.t0 = start
        self.z_time = np.zeros((N, Z_BINS))
        self.z_int = np.zeros(N)
        self.work_int = np.zeros(N)
        self.wwork_int = np.zeros(N)
        self.wwork_above = np.zeros((N, X))
        self.age_above = np.zeros((N, X))
        self.n_arrivals = 0
        self.n_departures = 0

    def start(self, state):
        self.reset(state.clock)

    def queue_interval(self, state, n: int, t0: float, t1: float):
        """Queue n holds its current jobs with constant efforts on [t0, t1]."""
        dt = t1 - t0
        if dt <= 0:
            return
        jobs = state.queues[n]
        z = len(jobs)
        self.z_time[n, min(z, Z_BINS - 1)] += dt
        if not z:
            return
        self.z_int[n] += z * dt
        base = state.tq[n]
        v0 = np.array([j.v - j.r * (t0 - base) for j in jobs])
        mu = np.array([j.mu for j in jobs])
        r = np.array([j.r for j in jobs])
        work0 = v0.sum()
        self.work_int[n] += work0 * dt - 0.5 * dt * dt
        W0 = float(mu @ v0)
        rate = float(mu @ r)
        self.wwork_int[n] += W0 * dt - 0.5 * rate * dt * dt
        x = self.thresholds
        self.wwork_above[n] += np.clip((W0 - x) / rate, 0.0, dt)
        arr = np.array([j.arrival_time for j in jobs])
        first = (arr[None, :] + x[:, None] / mu[None, :]).min(axis=1)
        self.age_above[n] += np.clip(t1 - np.maximum(t0, first), 0.0, dt)

    def arrival(self, state, job, t):
        self.n_arrivals += 1

    def departure(self, state, job, t):
        self.n_departures += 1

    def flush(self, state, t: float):
        """Account for all queues up to t without changing the state's flow."""
        for n in range(self.N):
            if state.tq[n] < t:
                self.queue_interval(state, n, state.tq[n], t)

    def summary(self, state) -> dict:
        T = state.clock - self.t0
        if T <= 0:
            return {"duration": 0.0}
        return {
            "duration": T,
            "arrivals": self.n_arrivals,
            "departures": self.n_departures,
            "mean_z": (self.z_int / T).tolist(),
            "mean_workload": (self.work_int / T).tolist(),
            "mean_weighted_workload": (self.wwork_int / T).tolist(),
            "z_distribution": (self.z_time / T).tolist(),
            "thresholds": self.thresholds.tolist(),
            "weighted_workload_tail": (self.wwork_above / T).tolist(),
            "weighted_age_tail": (self.age_above / T).tolist(),
        }

    def stats(self) -> dict:
        """Cumulative integrals, keyed like the fast simulator's."""
        return {
            "z_time": self.z_time.copy(),
            "z_int": self.z_int.copy(),
            "work_int": self.work_int.copy(),
            "ww_int": self.wwork_int.copy(),
            "ww_above": self.wwork_above.copy(),
            "age_above": self.age_above.copy(),
        }

    def tail(self, ell: int) -> np.ndarray:
        """Per-queue fraction of time with z > ell."""
        T = self.z_time.sum(axis=1)
        return self.z_time[:, ell + 1:].sum(axis=1) / T
