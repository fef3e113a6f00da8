"""Construction of the norm parameters for a subcritical network."""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

import numpy as np

from ..distributions import weighted_stop_loss
from ..network import NetworkSpec, m_ring_ratio, traffic_intensity
from ..routing import RoutingTable, solve_routing
from .psi import LOG2, DyadicPsi, build_psi_A, build_psi_W


class ConstructionFailed(RuntimeError):
    pass


SERIES_TERMS = 80


@dataclass
class LyapunovParams:
    spec: NetworkSpec
    mode: str
    rho: float
    eps1: float
    eps2: float
    eps3: float
    L1: float
    L2: float
    log_L3_plus_1: float
    M1: float
    psi_W: DyadicPsi
    psi_A: DyadicPsi
    routing: RoutingTable
    alpha: np.ndarray
    mu_ring: np.ndarray  # per queue
    class_index: dict  # (k, A) -> row in the class arrays
    class_m_ring: np.ndarray
    class_mean: np.ndarray  # m_{k,A} (station) or nan (class)
    arrival_weight: np.ndarray  # (K, N): sum_A p q m_ring
    m_ratio: float
    checks: dict = field(default_factory=dict)
    _coef: dict = field(default_factory=dict, repr=False)

    @property
    def N(self):
        return self.spec.N

    @property
    def K(self):
        return self.spec.K

    # per-job coefficients

    def m_ring(self, k: int, A: tuple) -> float:
        if self.mode == "class":
            return 1.0
        return float(self.spec.class_mean(k, A))

    def job_mu(self, k: int, A: tuple, n: int) -> float:
        """Service rate mu_j of a job of class (k, A) at queue n."""
        return 1.0 / self.spec.service_for(k, A, n).mean()

    def coefficients(self, k: int, A: tuple, n: int):
        """(m_ring, mu) for a job of class (k, A) served at queue n."""
        key = (k, A, n)
        c = self._coef.get(key)
        if c is None:
            c = self._coef[key] = (self.m_ring(k, A), self.job_mu(k, A, n))
        return c

    def job_arrays(self, state):
        """Per-job m_ring and mu arrays for a snapshot."""
        if not state.jobs:
            return np.empty(0), np.empty(0)
        c = np.array([self.coefficients(j.stream, j.selection, j.queue) for j in state.jobs])
        return c[:, 0], c[:, 1]

    def psi_Z(self, y):
        y = np.asarray(y, dtype=float)
        v = np.minimum(self.eps1 + (self.eps3 / self.L2) * np.log1p(y), self.L1)
        return float(v) if v.ndim == 0 else v

    def L3(self) -> float:
        return math.expm1(self.log_L3_plus_1) if self.log_L3_plus_1 < 709 else math.inf

    def log_L3(self) -> float:
        x = self.log_L3_plus_1
        if x > 30:
            return x + math.log1p(-math.exp(-x))
        return math.log(math.expm1(x))

    # expectations of the potentials against the built-in laws

    def expected_psi_W(self, law) -> float:
        """E psi_W(mu Y) by the stop-loss series."""
        total = self.psi_W.initial_slope * 1.0
        for kx, jump in self.psi_W.slope_jumps(SERIES_TERMS):
            total += jump * weighted_stop_loss(law, kx)
        return total

    def expected_psi_A(self, k: int) -> float:
        """E psi_A(alpha_k Y), Y ~ G_k, by the stop-loss series."""
        g = self.spec.interarrival[k]
        total = self.M1 - 1.0
        for kx, jump in self.psi_A.slope_jumps(SERIES_TERMS):
            total += jump * weighted_stop_loss(g, kx)
        return total

    def expected_truncated_w(self, law) -> float:
        """E[(mu Y + eps2) wedge L2]."""
        return 1.0 + self.eps2 - weighted_stop_loss(law, self.L2 - self.eps2)


def _arrival_weights(spec: NetworkSpec, routing: RoutingTable, mode: str):
    W = np.zeros((spec.K, spec.N))
    from ..network import is_mean_field, symmetric_shortcut_applies

    if routing.uniform and all(is_mean_field(r) for r in spec.selection) and symmetric_shortcut_applies(spec):
        m = 1.0 if mode == "class" else spec.homogeneous_service().mean()
        W[:, :] = m / spec.N
        return W
    for k, A, p in spec.classes():
        mr = 1.0 if mode == "class" else spec.class_mean(k, A)
        W[k, list(A)] += p * routing.q_row(k, A) * mr
    return W


def default_L1(spec: NetworkSpec) -> float:
    if spec.mode == "class":
        mus = [1.0 / spec.queue_mean(n) for n in range(spec.N)]
        ratio = max(mus) / min(mus)
    else:
        ratio = 1.0
    return max(4.0, 4.0 * spec.N * ratio)


def build_params(
    spec: NetworkSpec,
    L1: Optional[float] = None,
    routing: Optional[RoutingTable] = None,
    verify: bool = True,
) -> LyapunovParams:
    ti = traffic_intensity(spec)
    rho = float(ti.rho)
    if not rho < 1.0 - 1e-12:
        raise ConstructionFailed(f"network is not subcritical (rho = {rho})")
    if L1 is None:
        L1 = default_L1(spec)
    if L1 < 4:
        raise ConstructionFailed("L1 must be at least 4")
    if routing is None:
        routing = solve_routing(spec)
    eps1 = 1.0 - rho
    eps2 = eps1 * eps1 / 40.0
    laws = spec.service_laws()
    psi_W = build_psi_W(laws, eps2)
    psi_A = build_psi_A(spec.interarrival, eps2)
    M1 = psi_A.M1
    ratio = m_ring_ratio(spec)
    eps3 = eps2 / (M1 * ratio)
    i_star = max(1, math.ceil(math.log2(2.0 * L1) - 1e-12))
    L2 = psi_W.knot(i_star)
    if not math.isfinite(L2):
        raise ConstructionFailed("L2 is not representable")
    log_L3_plus_1 = (L1 - eps1) * L2 / eps3

    mode = spec.mode
    if mode == "class":
        mu_ring = np.array([1.0 / spec.queue_mean(n) for n in range(spec.N)])
    else:
        mu_ring = np.ones(spec.N)

    classes = spec.classes() if not routing.uniform or routing.rows else []
    class_index = {(k, A): i for i, (k, A, _) in enumerate(classes)}
    cm = np.array([1.0 if mode == "class" else spec.class_mean(k, A) for k, A, _ in classes])
    cmean = np.array([np.nan if mode == "class" else spec.class_mean(k, A) for k, A, _ in classes])

    params = LyapunovParams(
        spec=spec,
        mode=mode,
        rho=rho,
        eps1=eps1,
        eps2=eps2,
        eps3=eps3,
        L1=float(L1),
        L2=L2,
        log_L3_plus_1=log_L3_plus_1,
        M1=M1,
        psi_W=psi_W,
        psi_A=psi_A,
        routing=routing,
        alpha=spec.alpha(),
        mu_ring=mu_ring,
        class_index=class_index,
        class_m_ring=cm,
        class_mean=cmean,
        arrival_weight=_arrival_weights(spec, routing, mode),
        m_ratio=ratio,
    )
    if verify:
        verify_params(params)
    return params


QUAD_DEPTH = 60


def _cutoff(psi: DyadicPsi, depth: int = QUAD_DEPTH):
    """Deepest representable dyadic knot index <= depth and its position."""
    i = depth
    while i > 1 and not psi.knot(i) < 1e250:
        i -= 1
    return i, psi.knot(i)


def quad_psi_W(params: LyapunovParams, law) -> float:
    """Upper bound on E psi_W(mu Y): quadrature below a deep knot b_I plus a
    remainder bound. Beyond b_j the integrand is at most 2**j mu Y, so the
    remainder is at most sum_{j>=I} 2**j T(b_j) <= eps2 2**(1-I)."""
    mu = 1.0 / law.mean()
    psi = params.psi_W
    I, B = _cutoff(psi)
    bps = [b / mu for b in psi.breakpoints(B)]
    body = law.expect(lambda y: psi(mu * y) if mu * y <= B else 0.0, breakpoints=bps)
    return body + params.eps2 * 2.0 ** (1 - I)


def quad_arrival_tail(params: LyapunovParams, k: int) -> float:
    """Upper bound on the integral over alpha Y > M1 of psi_A(alpha Y) + alpha Y.

    Quadrature up to a deep knot a_I; beyond it the integrand is at most
    2**(j+1) alpha Y on (a_j, a_(j+1)], giving a remainder <= eps2 2**(2-I)."""
    g = params.spec.interarrival[k]
    a = params.alpha[k]
    psi = params.psi_A
    M1 = params.M1
    I, B = _cutoff(psi)
    bps = [M1 / a] + [b / a for b in psi.breakpoints(B)]

    def fn(y):
        x = a * y
        return psi(x) + x if M1 < x <= B else 0.0

    return g.expect(fn, breakpoints=bps) + params.eps2 * 2.0 ** (2 - I)


def quad_psi_A(params: LyapunovParams, k: int) -> float:
    """Upper bound on E psi_A(alpha Y), same cutoff scheme."""
    g = params.spec.interarrival[k]
    a = params.alpha[k]
    psi = params.psi_A
    I, B = _cutoff(psi)
    bps = [params.M1 / a] + [b / a for b in psi.breakpoints(B)]
    body = g.expect(lambda y: psi(a * y) if a * y <= B else 0.0, breakpoints=bps)
    return body + params.eps2 * 2.0 ** (2 - I)


def verify_params(params: LyapunovParams, rtol: float = 1e-9) -> dict:
    """Re-check the construction inequalities by quadrature; raise on failure."""
    eps2 = params.eps2
    checks = {}
    for law in params.spec.service_laws():
        v = quad_psi_W(params, law)
        checks[("psi_W", repr(law))] = v
        if v > eps2 * (1 + rtol):
            raise ConstructionFailed(f"E psi_W(mu Y) = {v} exceeds eps2 = {eps2} for {law!r}")
    for k in range(params.K):
        v = quad_arrival_tail(params, k)
        checks[("arrival_tail", k)] = v
        if v > eps2 * (1 + rtol):
            raise ConstructionFailed(f"arrival tail bound {v} exceeds eps2 for stream {k}")
        e = quad_psi_A(params, k)
        checks[("psi_A_slack", k)] = params.M1 - e
        if params.M1 - e < 1 - eps2 - rtol:
            raise ConstructionFailed(f"M1 - E psi_A = {params.M1 - e} below 1 - eps2 for stream {k}")
    if params.L2 < eps2:
        raise ConstructionFailed("L2 < eps2")
    if params.psi_W.right_slope(params.L2) < 2 * params.L1:
        raise ConstructionFailed("psi_W slope at L2 is below 2 L1")
    params.checks = checks
    return checks


def psi_W_slope_index(params: LyapunovParams, log_target: float) -> int:
    return max(1, math.ceil(log_target / LOG2 - 1e-12))
