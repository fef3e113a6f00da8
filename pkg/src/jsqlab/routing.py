"""Routing distributions q_{k,A,n} that keep every queue at load <= rho.

The solver works on a dense (rows x N) matrix, one row per class (k, A).
Each iteration moves probability mass inside one row from the queue with the
largest excess to another member of the row, using the step that most
decreases the potential V(q) = sum_n (load_n - rho)^2. Once the loads are
feasible the same moves continue (polish phase) until V stops improving; the
best feasible iterate is returned.
"""
from __future__ import annotations

import csv
import io
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from .network import (
    NetworkSpec,
    is_mean_field,
    mask_of,
    support_size,
    symmetric_shortcut_applies,
    traffic_intensity,
)


class NotConverged(RuntimeError):
    def __init__(self, max_excess):
        super().__init__(f"routing solver did not converge (max excess {max_excess:.3e})")
        self.max_excess = max_excess


@dataclass
class RoutingTable:
    N: int
    K: int
    rows: list  # [(k, A tuple, p_{k,A})]
    q: Optional[np.ndarray]  # (rows, N); None means uniform on each A
    rho: float
    achieved_rho: float
    residuals: np.ndarray  # rho - load_n per queue
    iterations: int = 0
    potential: float = 0.0
    uniform: bool = False
    _index: dict = field(default_factory=dict, repr=False)

    def __post_init__(self):
        self._index = {(k, A): i for i, (k, A, _) in enumerate(self.rows)}

    def q_row(self, k: int, A: tuple) -> np.ndarray:
        """Probabilities over the members of A (in sorted order)."""
        if self.uniform:
            return np.full(len(A), 1.0 / len(A))
        i = self._index.get((k, A))
        if i is None:
            return np.full(len(A), 1.0 / len(A))
        return self.q[i, list(A)]

    def prob(self, k: int, A: tuple, n: int) -> float:
        if n not in A:
            return 0.0
        return float(self.q_row(k, A)[A.index(n)])

    def max_excess(self) -> float:
        return float(max(0.0, -self.residuals.min()))

    def to_csv(self) -> str:
        buf = io.StringIO()
        w = csv.writer(buf, lineterminator="\n")
        w.writerow(["k", "A", "n", "q"])
        for k, A, _ in self.rows:
            row = self.q_row(k, A)
            for n, qn in zip(A, row):
                w.writerow([k, mask_of(A), n, repr(float(qn))])
        return buf.getvalue()


def _rows_and_beta(spec: NetworkSpec):
    alpha = spec.alpha()
    rows = spec.classes()
    R = len(rows)
    beta = np.zeros((R, spec.N))
    member = np.zeros((R, spec.N), dtype=bool)
    for r, (k, A, p) in enumerate(rows):
        idx = list(A)
        member[r, idx] = True
        if spec.mode == "class":
            beta[r, idx] = alpha[k] * p * np.array([spec.queue_mean(n) for n in A])
        else:
            beta[r, idx] = alpha[k] * p * spec.class_mean(k, A)
    return rows, beta, member


def _uniform_q(member):
    return member / member.sum(axis=1, keepdims=True)


def queue_loads(beta, q):
    return (beta * q).sum(axis=0)


def potential(spec: NetworkSpec, q, rho: Optional[float] = None) -> float:
    """V(q) = sum_n (load_n - rho)^2.

    q is a RoutingTable, a (rows x N) array aligned with spec.classes(), or a
    dict {(k, A): row over the members of A}.
    """
    rows, beta, member = _rows_and_beta(spec)
    if rho is None:
        rho = traffic_intensity(spec).rho
    Q = _as_matrix(q, rows, member)
    return float(((queue_loads(beta, Q) - rho) ** 2).sum())


def _as_matrix(q, rows, member):
    if isinstance(q, RoutingTable):
        Q = np.zeros(member.shape)
        for r, (k, A, _) in enumerate(rows):
            Q[r, list(A)] = q.q_row(k, A)
        return Q
    if isinstance(q, dict):
        Q = np.zeros(member.shape)
        for r, (k, A, _) in enumerate(rows):
            Q[r, list(A)] = q[(k, A)]
        return Q
    return np.asarray(q, dtype=float)


def _best_move(beta, Q, member, excess, source=None, capped=None, underloaded_only=False):
    """Best pairwise transfer (row, n1 -> n2, step, gain).

    With source given, only mass leaving that queue is considered. Capped
    moves never remove more than half the source excess; they default to
    on whenever a source is given. underloaded_only restricts targets to
    queues with nonpositive excess.
    """
    capped = source is not None if capped is None else capped
    # candidate sources: every queue (polish) or only the given one
    e = excess
    b1 = beta[:, :, None]  # (R, n1, 1)
    b2 = beta[:, None, :]  # (R, 1, n2)
    e1 = e[None, :, None]
    e2 = e[None, None, :]
    slope = b1 * e1 - b2 * e2  # positive when moving n1 -> n2 lowers V
    curv = b1 * b1 + b2 * b2
    valid = member[:, :, None] & member[:, None, :] & (Q[:, :, None] > 0) & (slope > 0)
    n = e.shape[0]
    valid &= ~np.eye(n, dtype=bool)[None, :, :]
    if underloaded_only:
        valid &= (e <= 0)[None, None, :]
    if source is not None:
        mask = np.zeros(n, dtype=bool)
        mask[source] = True
        valid &= mask[None, :, None]
    if not valid.any():
        return None
    with np.errstate(divide="ignore", invalid="ignore"):
        step = np.where(valid, slope / np.where(curv > 0, curv, 1.0), 0.0)
        step = np.minimum(step, Q[:, :, None])
        if capped:
            # never remove more than half the source excess in one move
            half = np.where(b1 > 0, e1 / (2.0 * np.where(b1 > 0, b1, 1.0)), np.inf)
            step = np.minimum(step, half)
    gain = np.where(valid, 2.0 * step * slope - step * step * curv, -np.inf)
    flat = int(np.argmax(gain))
    r, i, j = np.unravel_index(flat, gain.shape)
    return int(r), int(i), int(j), float(step[r, i, j]), float(gain[r, i, j])


def solve_routing(
    spec: NetworkSpec,
    tol: float = 1e-9,
    max_iters: int = 1_000_000,
    polish: bool = True,
    polish_iters: int = 20_000,
) -> RoutingTable:
    ti = traffic_intensity(spec)
    rho = ti.rho
    if symmetric_shortcut_applies(spec) and all(is_mean_field(r) for r in spec.selection):
        # uniform q is feasible; loads all equal rho
        res = np.zeros(spec.N)
        small = sum(support_size(r, spec.N) for r in spec.selection) <= 100_000
        rows = spec.classes() if small else []
        return RoutingTable(spec.N, spec.K, rows, None, rho, rho, res, 0, 0.0, uniform=True)

    rows, beta, member = _rows_and_beta(spec)
    Q = _uniform_q(member)
    it = 0
    while True:
        load = queue_loads(beta, Q)
        excess = load - rho
        n1 = int(np.argmax(excess))  # ties resolve to the lowest index
        if excess[n1] <= tol:
            break
        if it >= max_iters:
            raise NotConverged(float(excess[n1]))
        mv = _best_move(beta, Q, member, excess, source=n1, underloaded_only=True)
        if mv is None or mv[3] <= 0:
            # relief needs more than one hop: descend on sum of squared positive excesses
            mv = _best_move(beta, Q, member, np.maximum(excess, 0.0), capped=True)
        if mv is None or mv[3] <= 0:
            raise NotConverged(float(excess[n1]))
        r, i, j, step, _ = mv
        Q[r, i] -= step
        Q[r, j] += step
        if Q[r, i] < 1e-15:
            Q[r, j] += Q[r, i]
            Q[r, i] = 0.0
        it += 1

    best_Q = Q.copy()
    best_V = float(((queue_loads(beta, Q) - rho) ** 2).sum())
    if polish:
        for _ in range(polish_iters):
            load = queue_loads(beta, Q)
            excess = load - rho
            mv = _best_move(beta, Q, member, excess)
            if mv is None or mv[4] <= 1e-18 * max(1.0, best_V):
                break
            r, i, j, step, _ = mv
            Q[r, i] -= step
            Q[r, j] += step
            if Q[r, i] < 1e-15:
                Q[r, j] += Q[r, i]
                Q[r, i] = 0.0
            it += 1
            V = float(((queue_loads(beta, Q) - rho) ** 2).sum())
            if V < best_V and (queue_loads(beta, Q) - rho).max() <= tol:
                best_V, best_Q = V, Q.copy()
    Q = best_Q
    # renormalise rows exactly onto their support
    Q = np.where(member, Q, 0.0)
    Q /= Q.sum(axis=1, keepdims=True)
    load = queue_loads(beta, Q)
    res = rho - load
    table = RoutingTable(spec.N, spec.K, [(k, A, p) for k, A, p in rows], Q, rho, float(load.max()), res, it)
    table.potential = float(((load - rho) ** 2).sum())
    return table


def uniform_table(spec: NetworkSpec) -> RoutingTable:
    rows, beta, member = _rows_and_beta(spec)
    Q = _uniform_q(member)
    rho = traffic_intensity(spec).rho
    load = queue_loads(beta, Q)
    return RoutingTable(spec.N, spec.K, [(k, A, p) for k, A, p in rows], Q, rho, float(load.max()), rho - load)
