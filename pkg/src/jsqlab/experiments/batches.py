"""One long run cut into equal batches after a burn-in period."""
from __future__ import annotations

import os
from concurrent.futures import ThreadPoolExecutor
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..engine.driver import make_simulator
from ..engine.metrics import DEFAULT_THRESHOLDS
from ..network import NetworkSpec
from .stats import DEFAULT_BATCHES, DEFAULT_BURN_IN_FRACTION, batch_edges


@dataclass
class BatchRun:
    edges: np.ndarray
    batches: list  # per batch: dict of integrals over the batch
    load: np.ndarray  # per batch time-average of total jobs plus total weighted workload
    arrivals: int  # after burn-in
    seed: int
    rep: int

    @property
    def lengths(self) -> np.ndarray:
        return np.diff(self.edges)


def run_batches(
    spec: NetworkSpec,
    horizon: float,
    burn_in: Optional[float] = None,
    batches: int = DEFAULT_BATCHES,
    seed: int = 0,
    rep: int = 0,
    backend: str = "auto",
    thresholds=DEFAULT_THRESHOLDS,
) -> BatchRun:
    if burn_in is None:
        burn_in = DEFAULT_BURN_IN_FRACTION * horizon
    edges = batch_edges(horizon, burn_in, batches)
    sim = make_simulator(spec, seed, rep, backend, thresholds=thresholds)
    sim.run_until(edges[0])
    prev = sim.stats()
    a0 = _arrivals(sim)
    out, load = [], []
    for b in range(batches):
        sim.run_until(edges[b + 1])
        cur = sim.stats()
        d = {key: cur[key] - prev[key] for key in cur}
        out.append(d)
        T = edges[b + 1] - edges[b]
        load.append((d["z_int"].sum() + d["ww_int"].sum()) / T)
        prev = cur
    return BatchRun(edges, out, np.array(load), _arrivals(sim) - a0, seed, rep)


def _arrivals(sim) -> int:
    if hasattr(sim, "istate"):
        return int(sim.istate[2])
    return sim.state.arrivals


def worker_count(threads: Optional[int] = None) -> int:
    """Explicit value, else JSQLAB_THREADS, else 1."""
    if threads is None:
        env = os.environ.get("JSQLAB_THREADS", "").strip()
        threads = int(env) if env else 1
    return max(1, int(threads))


def parallel_map(fn, items, threads: Optional[int] = None) -> list:
    """fn over items with up to `threads` workers; results keep the order of items."""
    items = list(items)
    w = worker_count(threads)
    if w == 1 or len(items) <= 1:
        return [fn(x) for x in items]
    with ThreadPoolExecutor(max_workers=w) as ex:
        return list(ex.map(fn, items))
