"""Entropy-type norm for join-the-least-loaded-queue networks.

Each queue carries a load g_n made of its weighted residual work plus its
share of the arrival potential, and the norm is the sum of
psi(g_n) = (1 + g_n) log(1 + g_n) - g_n, which grows slightly faster than
linearly so that heavily loaded queues dominate.
"""
from __future__ import annotations

import numpy as np

from .params import LyapunovParams
from .state import StateSnapshot


def psi_jllq(y):
    y = np.asarray(y, dtype=float)
    out = (1.0 + y) * np.log1p(y) - y
    return float(out) if out.ndim == 0 else out


def queue_loads(state: StateSnapshot, params: LyapunovParams) -> np.ndarray:
    m_ring, _ = params.job_arrays(state)
    g = np.zeros(state.N)
    if len(m_ring):
        np.add.at(g, state.queue_arr, m_ring * np.maximum(state.w_arr, 0.0))
    scale = 1.0 + params.eps1 / 2.0
    psiA = np.atleast_1d(params.psi_A(state.s_arr))
    g += scale * (params.arrival_weight.T @ psiA)
    return g


def jllq_norm(state: StateSnapshot, params: LyapunovParams) -> float:
    return float(np.sum(psi_jllq(queue_loads(state, params))))


def jllq_flow_derivative(state: StateSnapshot, params: LyapunovParams) -> float:
    """Right time-derivative of jllq_norm along the deterministic flow."""
    g = queue_loads(state, params)
    busy = state.z > 0
    scale = 1.0 + params.eps1 / 2.0
    slopes = np.atleast_1d(params.psi_A.left_slope(state.s_arr))
    dg = -params.mu_ring * busy - scale * (params.arrival_weight.T @ (params.alpha * slopes))
    return float(np.sum(np.log1p(g) * dg))
