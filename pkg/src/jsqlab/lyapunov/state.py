"""Point of the state space: per-job tuples plus weighted residual interarrival times."""
from __future__ import annotations

from dataclasses import dataclass
from functools import cached_property
from typing import NamedTuple

import numpy as np


class InvalidState(ValueError):
    pass


class SnapshotJob(NamedTuple):
    queue: int
    rank: int  # 1-based position by arrival time at the queue
    stream: int
    selection: tuple
    age: float  # weighted age mu_j * o
    w: float  # weighted residual mu_j * v
    effort: float


@dataclass(frozen=True, eq=False)
class StateSnapshot:
    N: int
    jobs: tuple
    s: tuple  # weighted residual interarrival time per stream

    @property
    def K(self) -> int:
        return len(self.s)

    @classmethod
    def build(cls, N: int, jobs, s, check: bool = True) -> "StateSnapshot":
        js = tuple(
            SnapshotJob(int(j[0]), int(j[1]), int(j[2]), tuple(sorted(j[3])), float(j[4]), float(j[5]), float(j[6]))
            for j in jobs
        )
        js = tuple(sorted(js, key=lambda j: (j.queue, j.rank)))
        snap = cls(int(N), js, tuple(float(x) for x in s))
        if check:
            snap.validate()
        return snap

    def validate(self, tol: float = 1e-12):
        for n in range(self.N):
            ranks = [j.rank for j in self.jobs if j.queue == n]
            if ranks != list(range(1, len(ranks) + 1)):
                raise InvalidState(f"ranks at queue {n} are {ranks}, expected 1..{len(ranks)}")
        for j in self.jobs:
            if not 0 <= j.queue < self.N:
                raise InvalidState(f"job at unknown queue {j.queue}")
            if not 0 <= j.stream < self.K:
                raise InvalidState(f"job from unknown stream {j.stream}")
            if j.queue not in j.selection:
                raise InvalidState("job queue is not in its selection set")
            if not j.w > 0:
                raise InvalidState("weighted residual must be positive")
            if j.age < 0 or not 0 <= j.effort <= 1:
                raise InvalidState("age must be nonnegative and effort in [0, 1]")
        eff = np.zeros(self.N)
        np.add.at(eff, self.queue_arr, self.effort_arr)
        busy = self.z > 0
        if np.any(np.abs(eff[busy] - 1.0) > tol):
            raise InvalidState("efforts at a nonempty queue must sum to 1")
        if any(not x > 0 for x in self.s):
            raise InvalidState("weighted interarrival times must be positive")

    @cached_property
    def queue_arr(self) -> np.ndarray:
        return np.array([j.queue for j in self.jobs], dtype=np.int64)

    @cached_property
    def w_arr(self) -> np.ndarray:
        return np.array([j.w for j in self.jobs], dtype=float)

    @cached_property
    def age_arr(self) -> np.ndarray:
        return np.array([j.age for j in self.jobs], dtype=float)

    @cached_property
    def effort_arr(self) -> np.ndarray:
        return np.array([j.effort for j in self.jobs], dtype=float)

    @cached_property
    def s_arr(self) -> np.ndarray:
        return np.array(self.s, dtype=float)

    @cached_property
    def z(self) -> np.ndarray:
        return np.bincount(self.queue_arr, minlength=self.N)[: self.N].astype(np.int64)

    def queue_jobs(self, n: int) -> list:
        return [j for j in self.jobs if j.queue == n]

    def replace(self, jobs=None, s=None) -> "StateSnapshot":
        return StateSnapshot(self.N, self.jobs if jobs is None else tuple(jobs), self.s if s is None else tuple(s))

    def with_efforts(self, discipline: str) -> "StateSnapshot":
        """Efforts for FIFO (oldest), LIFO (newest) or PS (equal split)."""
        out = []
        z = self.z
        for j in self.jobs:
            if discipline == "fifo":
                r = 1.0 if j.rank == 1 else 0.0
            elif discipline == "lifo":
                r = 1.0 if j.rank == z[j.queue] else 0.0
            elif discipline == "ps":
                r = 1.0 / z[j.queue]
            else:
                raise ValueError(f"no static effort rule for {discipline!r}")
            out.append(j._replace(effort=r))
        return self.replace(jobs=out)


def empty_state(N: int, s) -> StateSnapshot:
    return StateSnapshot.build(N, [], s)
