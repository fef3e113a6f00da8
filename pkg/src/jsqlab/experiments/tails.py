"""Equilibrium tail probabilities of the queue length and related quantities."""
from __future__ import annotations

from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..config import spec_hash
from ..engine.metrics import DEFAULT_THRESHOLDS, Z_BINS
from ..network import NetworkSpec
from .batches import parallel_map, run_batches
from .stats import DEFAULT_BATCHES, Interval, batch_means_ci, check_trend


def meanfield_tail_reference(rho: float, D: int, ell: int) -> float:
    """Limiting P(Z > ell) for the supermarket model with D choices (D = 1: M/M/1)."""
    if not 0 < rho < 1:
        raise ValueError("rho must lie in (0, 1)")
    if D < 1 or ell < 0:
        raise ValueError("need D >= 1 and ell >= 0")
    if D == 1:
        return rho ** (ell + 1)
    return rho ** ((D ** (ell + 1) - 1) / (D - 1))


def stationary_residual_tail(spec: NetworkSpec, M: float) -> float:
    """max_k P(S_k > M) for the stationary weighted residual interarrival times."""
    out = 0.0
    for g, a in zip(spec.interarrival, spec.alpha()):
        # stationary residual density is alpha P(G > y), so P(alpha R > M) = alpha E(G - M/alpha)^+
        out = max(out, float(a * g.stop_loss(M / a)))
    return out


@dataclass
class TailEstimate:
    ells: list
    z_tail: list  # Interval per ell, P(Z > ell)
    thresholds: list
    workload_tail: list  # Interval per threshold, P(weighted workload > x)
    age_tail: list  # Interval per threshold, P(max weighted age > x)
    residual_tail: list  # stationary max_k P(S_k > x), exact
    mean_z: Interval
    burn_in: float
    horizon: float
    batches: int
    seed: int
    queue: Optional[int]
    spec_hash: str
    arrivals: int
    trend: float
    notes: list = field(default_factory=list)

    def rows(self) -> list:
        out = [["quantity", "level", "estimate", "low", "high", "stderr"]]
        for l, iv in zip(self.ells, self.z_tail):
            out.append(["P(Z>l)", l, iv.estimate, iv.low, iv.high, iv.stderr])
        for x, iv in zip(self.thresholds, self.workload_tail):
            out.append(["P(W>x)", x, iv.estimate, iv.low, iv.high, iv.stderr])
        for x, iv in zip(self.thresholds, self.age_tail):
            out.append(["P(age>x)", x, iv.estimate, iv.low, iv.high, iv.stderr])
        for x, p in zip(self.thresholds, self.residual_tail):
            out.append(["P(S>x)", x, p, p, p, 0.0])
        out.append(["E[Z]", "", self.mean_z.estimate, self.mean_z.low, self.mean_z.high, self.mean_z.stderr])
        return out


def estimate_tail(
    spec: NetworkSpec,
    horizon: float,
    burn_in: Optional[float] = None,
    batches: int = DEFAULT_BATCHES,
    seed: int = 0,
    queue: Optional[int] = None,
    ells=range(6),
    thresholds=DEFAULT_THRESHOLDS,
    reps: int = 1,
    threads: Optional[int] = None,
    backend: str = "auto",
    guard: bool = True,
) -> TailEstimate:
    """Time-average tail estimates with batch-means intervals.

    With queue=None every queue contributes to every batch value; for
    exchangeable queues this estimates the same marginal with less noise.
    Replications contribute their batches to one pooled interval.
    """
    ells = list(ells)
    if max(ells) >= Z_BINS - 1:
        raise ValueError(f"ell must be below {Z_BINS - 1}")
    runs = parallel_map(
        lambda r: run_batches(spec, horizon, burn_in, batches, seed, r, backend, thresholds), range(reps), threads
    )
    qs = list(range(spec.N)) if queue is None else [queue]
    zt, wt, at, mz = [], [], [], []
    trend = 0.0
    for run in runs:
        if guard:
            trend = max(trend, check_trend(run.load))
        for d, T in zip(run.batches, run.lengths):
            span = T * len(qs)
            zt.append([d["z_time"][qs, l + 1:].sum() / span for l in ells])
            wt.append(d["ww_above"][qs].sum(axis=0) / span)
            at.append(d["age_above"][qs].sum(axis=0) / span)
            mz.append(d["z_int"][qs].sum() / span)
    zt, wt, at = np.array(zt), np.array(wt), np.array(at)
    return TailEstimate(
        ells=ells,
        z_tail=[batch_means_ci(zt[:, i]) for i in range(len(ells))],
        thresholds=list(thresholds),
        workload_tail=[batch_means_ci(wt[:, i]) for i in range(len(thresholds))],
        age_tail=[batch_means_ci(at[:, i]) for i in range(len(thresholds))],
        residual_tail=[stationary_residual_tail(spec, x) for x in thresholds],
        mean_z=batch_means_ci(mz),
        burn_in=float(runs[0].edges[0]),
        horizon=float(horizon),
        batches=batches,
        seed=seed,
        queue=queue,
        spec_hash=spec_hash(spec),
        arrivals=sum(r.arrivals for r in runs),
        trend=trend,
    )


def is_monotone(est: TailEstimate) -> bool:
    """Tail estimates decrease in ell, allowing overlap of the intervals."""
    iv = est.z_tail
    return all(b.estimate <= a.estimate or b.low <= a.high for a, b in zip(iv, iv[1:]))


def interval_of(est: TailEstimate, ell: int) -> Interval:
    return est.z_tail[est.ells.index(ell)]
