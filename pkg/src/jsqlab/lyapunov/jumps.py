"""Expected change of the norm when a job arrives."""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Optional

import numpy as np

from ..network import selection_distribution
from ..rng import RngStream
from .params import LyapunovParams
from .state import StateSnapshot


class ExactModeUnavailable(ValueError):
    pass


@dataclass
class JumpEstimate:
    value: float
    stderr: float = 0.0
    exact: bool = True
    draws: int = 0


def assignment_distribution(state: StateSnapshot, params: LyapunovParams, A: tuple) -> list:
    """[(n, prob)] for the queue an arrival offered A joins."""
    spec = params.spec
    rule = spec.assignment.kind
    if rule == "random":
        return [(n, 1.0 / len(A)) for n in A]
    if rule == "jsq":
        key = state.z.astype(float)
    elif rule == "jllq":
        _, mu = params.job_arrays(state)
        key = np.zeros(state.N)
        if len(mu):
            np.add.at(key, state.queue_arr, state.w_arr / mu)
    else:
        raise ValueError(f"jump expectation is not defined for assignment rule {rule!r}")
    vals = [key[n] for n in A]
    best = min(vals)
    mins = [n for n, v in zip(A, vals) if v == best]
    if spec.tie_break == "min_index":
        return [(mins[0], 1.0)]
    return [(n, 1.0 / len(mins)) for n in mins]


def expected_psi_A_at(params: LyapunovParams, k: int) -> float:
    """E psi_A(alpha_k Y) for a fresh interarrival time Y."""
    g = params.spec.interarrival[k]
    at = g.atoms()
    a = params.alpha[k]
    if at is not None:
        return math.fsum(p * params.psi_A(a * v) for v, p in at)
    return params.expected_psi_A(k)


class _Pieces:
    """Norm decomposed so that a single arrival can be applied cheaply."""

    def __init__(self, state: StateSnapshot, params: LyapunovParams, k: int):
        from .norms import _queue_parts

        self.params = params
        self.k = k
        self.z = state.z.astype(float)
        self.trunc, right = _queue_parts(state, params)
        self.R = float(right.sum())
        self.scale = 1.0 + params.eps1 / 2.0
        psiA = np.atleast_1d(params.psi_A(state.s_arr)).copy()
        psiA[k] = params.M1  # the arriving stream's clock is at 0
        self.psiA = psiA
        self.c = params.arrival_weight

    def total(self, z, extra_trunc_n=None, extra_trunc=0.0, extra_R=0.0, psiA_k=None):
        p = self.params
        psi_z = np.atleast_1d(p.psi_Z(z))
        trunc = self.trunc
        L = float(trunc @ psi_z)
        if extra_trunc_n is not None:
            L += extra_trunc * psi_z[extra_trunc_n]
        psiA = self.psiA
        if psiA_k is not None:
            psiA = psiA.copy()
            psiA[self.k] = psiA_k
        A = float(self.scale * np.sum((self.c @ psi_z) * psiA))
        return L + self.R + extra_R + A


def arrival_jump_expectation(
    state: StateSnapshot,
    params: LyapunovParams,
    k: int,
    budget: Optional[int] = None,
    seed: int = 0,
) -> JumpEstimate:
    """E||X(T)|| - ||X(T-)|| for an arrival from stream k at state x.

    The state is taken at T-, so the residual interarrival time of stream k
    is set to 0 before evaluation. Exact mode enumerates selection sets, the
    assignment distribution and the atoms of the service law; it needs
    discrete service laws. With a Monte Carlo budget, selection sets,
    assignments, services and the next interarrival time are sampled.
    """
    spec = params.spec
    pieces = _Pieces(state, params, k)
    base = pieces.total(pieces.z)
    dist = selection_distribution(spec.selection[k], spec.N, k)
    if budget is None:
        for A, _ in dist:
            for n in A:
                if spec.service_for(k, A, n).atoms() is None:
                    raise ExactModeUnavailable("exact mode needs discrete service laws")
        e_psiA = expected_psi_A_at(params, k)
        terms = []
        for A, pA in dist:
            for n, qn in assignment_distribution(state, params, A):
                law = spec.service_for(k, A, n)
                m_ring, mu = params.coefficients(k, A, n)
                at = law.atoms()
                e_trunc = math.fsum(p * min(mu * v + params.eps2, params.L2) for v, p in at)
                e_W = math.fsum(p * params.psi_W(mu * v) for v, p in at)
                z2 = pieces.z.copy()
                z2[n] += 1
                new = pieces.total(z2, n, m_ring * e_trunc, m_ring * e_W, e_psiA)
                terms.append(pA * qn * (new - base))
        return JumpEstimate(math.fsum(terms), 0.0, True, 0)

    rng = RngStream(seed, (k,))
    cum = np.cumsum([p for _, p in dist])
    g = spec.interarrival[k]
    a = params.alpha[k]
    vals = np.empty(budget)
    for b in range(budget):
        u = rng.uniform()
        A = dist[min(int(np.searchsorted(cum, u * cum[-1], side="right")), len(dist) - 1)][0]
        choices = assignment_distribution(state, params, A)
        if len(choices) == 1:
            n = choices[0][0]
        else:
            n = choices[min(int(rng.uniform() * len(choices)), len(choices) - 1)][0]
        law = spec.service_for(k, A, n)
        m_ring, mu = params.coefficients(k, A, n)
        y = law.sample(rng)
        y2 = g.sample(rng)
        z2 = pieces.z.copy()
        z2[n] += 1
        w = mu * y
        new = pieces.total(
            z2, n, m_ring * min(w + params.eps2, params.L2), m_ring * params.psi_W(w), params.psi_A(a * y2)
        )
        vals[b] = new - base
    mean = float(vals.mean())
    se = float(vals.std(ddof=1) / math.sqrt(budget)) if budget > 1 else math.inf
    return JumpEstimate(mean, se, False, budget)

