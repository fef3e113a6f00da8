"""Stationary workload of two networks side by side."""
from __future__ import annotations

from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..config import spec_hash
from ..network import NetworkSpec
from .batches import parallel_map, run_batches
from .stats import DEFAULT_BATCHES, Interval, batch_means_ci, check_trend, independent_ratio_ci


@dataclass
class WorkloadComparison:
    workload_a: Interval
    workload_b: Interval
    weighted_a: Interval
    weighted_b: Interval
    ratio: Interval
    ratio_lower: float  # one-sided 95% lower bound
    weighted_ratio: Interval
    hash_a: str
    hash_b: str
    seed: int
    horizon: float

    def rows(self) -> list:
        out = [["quantity", "estimate", "low", "high", "stderr"]]
        for name, iv in (
            ("workload_a", self.workload_a),
            ("workload_b", self.workload_b),
            ("weighted_workload_a", self.weighted_a),
            ("weighted_workload_b", self.weighted_b),
            ("ratio", self.ratio),
            ("weighted_ratio", self.weighted_ratio),
        ):
            out.append([name, iv.estimate, iv.low, iv.high, iv.stderr])
        out.append(["ratio_lower_one_sided", self.ratio_lower, "", "", ""])
        return out


def _workload_batches(spec, horizon, burn_in, batches, seed, reps, threads, guard, backend):
    runs = parallel_map(lambda r: run_batches(spec, horizon, burn_in, batches, seed, r, backend), range(reps), threads)
    work, weighted = [], []
    for run in runs:
        if guard:
            check_trend(run.load)
        for d, T in zip(run.batches, run.lengths):
            work.append(d["work_int"].sum() / T)
            weighted.append(d["ww_int"].sum() / T)
    return np.array(work), np.array(weighted)


def workload_comparison(
    spec_a: NetworkSpec,
    spec_b: NetworkSpec,
    horizon: float,
    burn_in: Optional[float] = None,
    batches: int = DEFAULT_BATCHES,
    seed: int = 0,
    reps: int = 1,
    threads: Optional[int] = None,
    guard: bool = True,
    backend: str = "auto",
) -> WorkloadComparison:
    """Time-average total residual work of spec_a over that of spec_b.

    The two networks run on independent random streams (replication
    numbers offset by reps), so the ratio interval treats them as
    independent samples.
    """
    wa, xa = _workload_batches(spec_a, horizon, burn_in, batches, seed, reps, threads, guard, backend)
    wb, xb = _workload_batches(spec_b, horizon, burn_in, batches, seed + 1, reps, threads, guard, backend)
    return WorkloadComparison(
        workload_a=batch_means_ci(wa),
        workload_b=batch_means_ci(wb),
        weighted_a=batch_means_ci(xa),
        weighted_b=batch_means_ci(xb),
        ratio=independent_ratio_ci(wa, wb),
        ratio_lower=independent_ratio_ci(wa, wb, one_sided=True).low,
        weighted_ratio=independent_ratio_ci(xa, xb),
        hash_a=spec_hash(spec_a),
        hash_b=spec_hash(spec_b),
        seed=seed,
        horizon=float(horizon),
    )
