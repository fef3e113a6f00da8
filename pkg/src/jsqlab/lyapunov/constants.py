"""Threshold constants and the w/t/p recursion used in the stability argument.

Most of these numbers are astronomically large, so they are carried as
logarithms and saturate to ``inf`` once they leave the range where they can
be computed meaningfully.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Callable, Optional

import numpy as np

from ..network import NetworkSpec, Unsupported, check_arrival_bound
from .params import LyapunovParams
from .psi import LOG2, _logaddexp

# psi_W is evaluated exactly only while it needs at most this many knots
MAX_EXACT_KNOTS = 4096


def _exp(x: float) -> float:
    return math.exp(x) if x < 709 else math.inf


def _log(x: float) -> float:
    return math.log(x) if x > 0 else -math.inf


@dataclass
class ProofConstants:
    gamma: int
    h: Callable[[float], float]
    log_h: Callable[[float], float]
    C4_mode: str
    log_C4: float
    t_seq: list
    log_t_seq: list
    p_seq: list
    log_p_seq: list
    w_seq: list  # w(1), w(2), ...
    log_w_seq: list
    log_M_L: float
    M_A: float
    y1: float
    log_M_R: float
    log_L4: float
    C1: float
    C2: float
    C3: float
    C5: float
    C6: Optional[float] = None
    notes: list = field(default_factory=list)

    @property
    def M_L(self) -> float:
        return _exp(self.log_M_L)

    @property
    def C4(self) -> float:
        return _exp(self.log_C4)


def _log_psi_W(params: LyapunovParams, log_y: float) -> float:
    """log psi_W(y), or inf when the evaluation would need too many knots."""
    if log_y == math.inf:
        return math.inf
    if log_y == -math.inf:
        return -math.inf
    psi = params.psi_W
    # knots satisfy b_i >= i, so a value y needs at most y knots
    if log_y > math.log(MAX_EXACT_KNOTS):
        return math.inf
    return _log(psi(math.exp(log_y)))


def proof_constants(
    params: LyapunovParams,
    spec: Optional[NetworkSpec] = None,
    depth: int = 8,
    C4_mode: str = "default",
    C6: Optional[float] = None,
) -> ProofConstants:
    """Constants of the stability argument, to the given recursion depth.

    C4_mode "default" uses sum(mu_ring) / min(mu_ring); "L3" uses L3.
    """
    spec = params.spec if spec is None else spec
    bound = check_arrival_bound(spec)
    if isinstance(bound, Unsupported):
        return bound
    gamma = bound.gamma
    mu_ring = params.mu_ring
    C2 = float(mu_ring.sum())
    C3 = 1.0 / (params.eps1 * C2)
    C1 = max(C3, C2 * C3 + 1.0)
    if C4_mode == "default":
        log_C4 = math.log(C2 / float(mu_ring.min()))
    elif C4_mode == "L3":
        log_C4 = params.log_L3()
    else:
        raise ValueError(f"unknown C4 mode {C4_mode!r}")

    psi_W = params.psi_W
    log_t = [_log(2.0 * gamma)]
    log_p = [bound.log_h_of_t(2.0 * gamma + 1.0)]
    log_w = []
    log_sum_w = -math.inf
    for i in range(1, depth + 1):
        log_t1 = _logaddexp(log_t[-1], 0.0)
        if log_p[-1] == -math.inf or log_t1 == math.inf:
            lw = math.inf
        else:
            log_target = log_C4 + (i + gamma + 2) * LOG2 + log_t1 - log_p[-1]
            lw = _logaddexp(0.0, psi_W.log_first_reach(log_target))
        log_w.append(lw)
        log_sum_w = _logaddexp(log_sum_w, lw)
        lt = _logaddexp(log_sum_w, _log(2.0 * gamma))
        log_t.append(lt)
        t_plus_1 = _exp(_logaddexp(lt, 0.0))
        log_p.append(bound.log_h_of_t(t_plus_1) if math.isfinite(t_plus_1) else -math.inf)

    m_ring_max = float(np.max(params.class_m_ring)) if len(params.class_m_ring) else _m_ring_extreme(params, max)
    m_ring_min = float(np.min(params.class_m_ring)) if len(params.class_m_ring) else _m_ring_extreme(params, min)
    N, K = spec.N, spec.K
    log_M_L = math.log(m_ring_max * params.L1 * params.L2 * N) + params.log_L3()

    # y1: first point past M1 where psi_A' reaches 2 sum(mu_ring) / min alpha m_ring
    min_am = min(params.alpha[k] * params.m_ring(k, A) for k, A in _class_keys(params))
    y1 = max(params.M1, params.psi_A.first_reach(2.0 * C2 / min_am))
    M_A = 2.0 * m_ring_max * params.L1 * K * params.psi_A(y1)

    C5 = 1.0 / (params.eps1 * params.eps2 * m_ring_min)
    notes = []
    log_terms = math.log(C5) + log_M_L
    if log_terms > math.log(depth + 1):
        log_M_R = math.inf
        notes.append("M_R saturated: floor(C5 M_L) exceeds the recursion depth")
    else:
        n_terms = int(math.floor(_exp(log_terms)))
        lsum = -math.inf
        for lw in log_w[:n_terms]:
            lsum = _logaddexp(lsum, lw)
        log_M_R = math.log(m_ring_max * N) + _log_psi_W(params, lsum)
    L3 = params.L3()
    if not L3 <= depth:
        log_L4 = math.inf
        notes.append("L4 saturated: L3 exceeds the recursion depth")
    else:
        lsum = -math.inf
        for lw in log_w[: int(L3)]:
            lsum = _logaddexp(lsum, lw)
        log_L4 = _log_psi_W(params, lsum)

    return ProofConstants(
        gamma=gamma,
        h=bound.h,
        log_h=bound.log_h_of_t,
        C4_mode=C4_mode,
        log_C4=log_C4,
        t_seq=[_exp(x) for x in log_t],
        log_t_seq=log_t,
        p_seq=[_exp(x) for x in log_p],
        log_p_seq=log_p,
        w_seq=[_exp(x) for x in log_w],
        log_w_seq=log_w,
        log_M_L=log_M_L,
        M_A=M_A,
        y1=y1,
        log_M_R=log_M_R,
        log_L4=log_L4,
        C1=C1,
        C2=C2,
        C3=C3,
        C5=C5,
        C6=C6,
        notes=notes,
    )


def _class_keys(params: LyapunovParams):
    if params.class_index:
        return list(params.class_index)
    # uniform mean-field table without enumerated rows: one representative set
    spec = params.spec
    out = []
    for k, rule in enumerate(spec.selection):
        D = min(getattr(rule, "D", spec.N), spec.N)
        out.append((k, tuple(range(D))))
    return out


def _m_ring_extreme(params: LyapunovParams, pick) -> float:
    return float(pick(params.m_ring(k, A) for k, A in _class_keys(params)))
