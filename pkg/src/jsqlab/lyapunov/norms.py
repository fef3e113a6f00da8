"""Evaluation of the composite norm, the local norm, the metric and flow derivatives."""
from __future__ import annotations

from dataclasses import dataclass

import numpy as np

from .params import LyapunovParams
from .state import StateSnapshot


def eval_psi(params: LyapunovParams, which: str, y):
    if which == "W":
        return params.psi_W(y)
    if which == "Z":
        return params.psi_Z(y)
    if which == "A":
        return params.psi_A(y)
    raise ValueError(f"unknown potential {which!r}")


@dataclass
class NormValue:
    L: float
    R: float
    A: float
    per_queue_L: np.ndarray
    per_queue_R: np.ndarray
    per_stream_A: np.ndarray

    @property
    def total(self) -> float:
        return self.L + self.R + self.A

    def as_dict(self) -> dict:
        return {
            "L": self.L,
            "R": self.R,
            "A": self.A,
            "total": self.total,
            "per_queue_L": self.per_queue_L.tolist(),
            "per_queue_R": self.per_queue_R.tolist(),
            "per_stream_A": self.per_stream_A.tolist(),
        }


def _queue_parts(state: StateSnapshot, params: LyapunovParams):
    N = state.N
    m_ring, _ = params.job_arrays(state)
    q = state.queue_arr
    w = state.w_arr
    trunc = np.zeros(N)
    right = np.zeros(N)
    if len(w):
        np.add.at(trunc, q, m_ring * np.minimum(w + params.eps2, params.L2))
        np.add.at(right, q, m_ring * params.psi_W(w))
    return trunc, right


def norm(state: StateSnapshot, params: LyapunovParams) -> NormValue:
    trunc, right = _queue_parts(state, params)
    psi_z = np.atleast_1d(params.psi_Z(state.z))
    per_L = trunc * psi_z
    c = params.arrival_weight  # (K, N)
    scale = 1.0 + params.eps1 / 2.0
    per_A = scale * (c @ psi_z) * np.atleast_1d(params.psi_A(state.s_arr))
    return NormValue(
        float(per_L.sum()), float(right.sum()), float(per_A.sum()), per_L, right, per_A
    )


def norm_total(state: StateSnapshot, params: LyapunovParams) -> float:
    return norm(state, params).total


def local_norm(state: StateSnapshot, n: int) -> float:
    """Job count plus maximum weighted age plus weighted workload at queue n."""
    jobs = state.queue_jobs(n)
    if not jobs:
        return 0.0
    return len(jobs) + max(j.age for j in jobs) + sum(j.w for j in jobs)


def metric_distance(x: StateSnapshot, y: StateSnapshot) -> float:
    if x.N != y.N or x.K != y.K:
        raise ValueError("states have different dimensions")
    total = 0.0
    for n in range(x.N):
        a = x.queue_jobs(n)
        b = y.queue_jobs(n)
        for i in range(max(len(a), len(b))):
            ja = a[i] if i < len(a) else None
            jb = b[i] if i < len(b) else None
            la, wa, ra, ka, Aa = (ja.age, ja.w, ja.effort, ja.stream, ja.selection) if ja else (0.0, 0.0, 0.0, None, ())
            lb, wb, rb, kb, Ab = (jb.age, jb.w, jb.effort, jb.stream, jb.selection) if jb else (0.0, 0.0, 0.0, None, ())
            total += min(abs(la - lb) + abs(wa - wb) + abs(ra - rb), 1.0)
            total += (ka != kb) + (Aa != Ab)
        total += abs(len(a) - len(b))
    total += sum(abs(p - q) for p, q in zip(x.s, y.s))
    return total


@dataclass
class FlowDerivative:
    dL: float
    dR: float
    dA: float
    bound_4_10_3: float
    bound_4_10_4: float
    bound_4_10_5: float

    @property
    def total(self) -> float:
        return self.dL + self.dR + self.dA

    @property
    def slack_L_R(self) -> float:
        return self.bound_4_10_3 - (self.dL + self.dR / 2.0)

    @property
    def slack_A(self) -> float:
        return self.bound_4_10_4 - self.dA

    @property
    def slack_total(self) -> float:
        return self.bound_4_10_5 - self.total

    @property
    def holds_L_R(self) -> bool:
        return self.slack_L_R >= -1e-9

    @property
    def holds_A(self) -> bool:
        return self.slack_A >= -1e-9

    @property
    def holds_total(self) -> bool:
        return self.slack_total >= -1e-9


def flow_derivative(state: StateSnapshot, params: LyapunovParams) -> FlowDerivative:
    """Right time-derivatives of the norm components under the deterministic flow.

    Weighted residuals fall at rate mu_j r_j and s_k at rate alpha_k, so the
    right derivative picks up the slopes of psi_W, psi_A and of the truncation
    just below the current arguments.
    """
    N = state.N
    m_ring, mu = params.job_arrays(state)
    q = state.queue_arr
    w = state.w_arr
    r = state.effort_arr
    psi_z = np.atleast_1d(params.psi_Z(state.z))
    mu_ring = params.mu_ring
    dL = 0.0
    dR = 0.0
    if len(w):
        rate = m_ring * mu * r  # equals mu_ring[n] * r
        active = (w + params.eps2) <= params.L2
        dL = -float(np.sum(psi_z[q] * rate * active))
        dR = -float(np.sum(rate * params.psi_W.left_slope(w)))
    c = params.arrival_weight
    scale = 1.0 + params.eps1 / 2.0
    slopes = np.atleast_1d(params.psi_A.left_slope(state.s_arr))
    dA = -float(np.sum(params.alpha * scale * (c @ psi_z) * slopes))
    b3 = float(np.sum(mu_ring * (params.eps1 - psi_z)))
    b4 = float(scale * params.rho * np.sum(mu_ring * psi_z))
    b5 = float(params.eps1 / 2.0 * np.sum(mu_ring * (2.0 - psi_z)))
    return FlowDerivative(dL, dR, dA, b3, b4, b5)


def advance_flow(state: StateSnapshot, params: LyapunovParams, dt: float) -> StateSnapshot:
    """State after dt units of the deterministic flow, assuming no event occurs."""
    _, mu = params.job_arrays(state)
    jobs = []
    for j, m in zip(state.jobs, mu):
        jobs.append(j._replace(age=j.age + m * dt, w=j.w - m * j.effort * dt))
    s = [x - a * dt for x, a in zip(state.s, params.alpha)]
    return state.replace(jobs=jobs, s=s)
