"""Convex piecewise-linear potentials with dyadic slopes.

A ``DyadicPsi`` is continuous, linear between knots, and its slope after the
i-th dyadic knot is ``2**i``. Knot positions come from a callable returning
``log(knot_i)``; they are generated lazily, so the function is defined on all
of [0, inf) even though only the knots actually visited are materialised.
"""
from __future__ import annotations

import math
from typing import Callable

import numpy as np

from ..distributions import log_weighted_tail_at_log

LOG4 = math.log(4.0)
LOG2 = math.log(2.0)
DIRECT_GAP = 4096
# slopes 2**i stay finite up to here; later knots are never materialised
MAX_DYADIC = 1000


def tail_threshold_log(laws, log_target: float, floor: float = 0.0) -> float:
    """log of the smallest b >= floor with max_j T_j(b) <= exp(log_target).

    T_j(b) = mu_j E[Y_j; mu_j Y_j > b] is the rate-scaled tail first moment.
    The search is a bisection on log b, so thresholds beyond float range are
    still located. Returns the upper end of the final bracket, which always
    satisfies the bound.
    """

    def ok(x):
        return max(log_weighted_tail_at_log(d, x) for d in laws) <= log_target

    lo = math.log(floor) if floor > 0 else -60.0
    if ok(lo):
        return lo if floor > 0 else -math.inf
    hi = max(lo + 1.0, 0.0)
    step = 1.0
    while not ok(hi):
        lo = hi
        hi += step
        step *= 2.0
        if hi > 1e300:
            return math.inf
    for _ in range(200):
        mid = 0.5 * (lo + hi)
        if mid <= lo or mid >= hi:
            break
        if ok(mid):
            hi = mid
        else:
            lo = mid
    return hi


def _logaddexp(a: float, b: float) -> float:
    if a == -math.inf:
        return b
    if b == -math.inf:
        return a
    m = max(a, b)
    return m + math.log1p(math.exp(-abs(a - b)))


class DyadicPsi:
    """Piecewise-linear function on [0, inf).

    Segments: on [0, head_knots[0]) slope head_slopes[0], then any further
    head segments, then slope 2**i after dyadic knot i (i = 1, 2, ...).
    """

    def __init__(self, value0: float, head_knots, head_slopes, log_knot: Callable[[int], float]):
        self.value0 = float(value0)
        self.head_knots = [float(x) for x in head_knots]
        self.head_slopes = [float(x) for x in head_slopes]
        assert len(self.head_slopes) == len(self.head_knots) + 1
        self._log_knot_fn = log_knot
        self._log_knots: list = []  # log of dyadic knot i+1
        self._knots = np.empty(0)  # representable dyadic knots
        self._cum_vals = np.empty(0)
        self._all_knots = None
        self._all_slopes = None
        self._all_values = None
        self._rebuild()

    # knot management

    def log_knot(self, i: int) -> float:
        """log of dyadic knot i (1-based).

        Knots far beyond the materialised range are computed directly
        without caching, so very deep indices stay cheap.
        """
        if i > len(self._log_knots) + DIRECT_GAP:
            return self._log_knot_fn(i)
        while len(self._log_knots) < i:
            j = len(self._log_knots) + 1
            x = self._log_knot_fn(j)
            if self._log_knots and x <= self._log_knots[-1]:
                raise ValueError("dyadic knots must increase")
            self._log_knots.append(x)
        return self._log_knots[i - 1]

    def knot(self, i: int) -> float:
        x = self.log_knot(i)
        return math.exp(x) if x < 709 else math.inf

    def ensure(self, y: float):
        """Materialise knots until the last one exceeds y."""
        n_before = len(self._log_knots)
        i = max(n_before, 1)
        if y >= 1e300:
            return
        while i < MAX_DYADIC and self.knot(i) <= y:
            i += 1
        if len(self._log_knots) != n_before or self._all_knots is None:
            self._rebuild()

    def n_knots(self) -> int:
        return len(self._log_knots)

    def _rebuild(self):
        dy = [math.exp(x) for x in self._log_knots if x < 709]
        knots = self.head_knots + dy
        slopes = self.head_slopes + [2.0**i for i in range(1, len(dy) + 1)]
        values = [self.value0]
        prev = 0.0
        for kx, s in zip(knots, slopes[:-1]):
            values.append(values[-1] + s * (kx - prev))
            prev = kx
        self._all_knots = np.array([0.0] + knots)
        self._all_slopes = np.array(slopes)
        self._all_values = np.array(values)

    # evaluation

    def __call__(self, y):
        if np.ndim(y) == 0:
            return float(self.values(np.array([float(y)]))[0])
        return self.values(np.asarray(y, dtype=float))

    def values(self, y: np.ndarray) -> np.ndarray:
        if y.size:
            self.ensure(float(np.max(y)))
        idx = np.searchsorted(self._all_knots, y, side="right") - 1
        idx = np.clip(idx, 0, len(self._all_slopes) - 1)
        return self._all_values[idx] + self._all_slopes[idx] * (y - self._all_knots[idx])

    def right_slope(self, y):
        y = np.asarray(y, dtype=float)
        if y.size:
            self.ensure(float(np.max(y)))
        idx = np.searchsorted(self._all_knots, y, side="right") - 1
        idx = np.clip(idx, 0, len(self._all_slopes) - 1)
        out = self._all_slopes[idx]
        return float(out) if out.ndim == 0 else out

    def left_slope(self, y):
        """Slope just below y (the right slope at y = 0)."""
        y = np.asarray(y, dtype=float)
        if y.size:
            self.ensure(float(np.max(y)))
        idx = np.searchsorted(self._all_knots, y, side="left") - 1
        idx = np.clip(idx, 0, len(self._all_slopes) - 1)
        out = self._all_slopes[idx]
        return float(out) if out.ndim == 0 else out

    def slope(self, y):
        return self.right_slope(y)

    # slope inversion

    def dyadic_index_for_slope(self, target: float) -> int:
        """Smallest i >= 1 with 2**i >= target."""
        if target <= 2.0:
            return 1
        return max(1, math.ceil(math.log2(target) - 1e-12))

    def log_first_reach(self, log_target_slope: float) -> float:
        """log of inf{y : right slope at y >= exp(log_target_slope)}.

        Head segments are examined first; beyond them the answer is a dyadic
        knot, located in log-domain. Returns inf if the index overflows.
        """
        target = math.exp(log_target_slope) if log_target_slope < 700 else math.inf
        prev = 0.0
        for kx, s in zip([0.0] + self.head_knots, self.head_slopes):
            if s >= target:
                return math.log(kx) if kx > 0 else -math.inf
            prev = kx
        if log_target_slope == math.inf:
            return math.inf
        i = max(1, math.ceil(log_target_slope / LOG2 - 1e-12))
        if i > 10**15:
            return math.inf
        return self.log_knot(i)

    def first_reach(self, target_slope: float) -> float:
        x = self.log_first_reach(math.log(target_slope) if target_slope > 0 else -math.inf)
        return math.exp(x) if x < 709 else math.inf

    # description

    def breakpoints(self, upto: float) -> list:
        self.ensure(upto)
        return [float(x) for x in self._all_knots[1:] if x <= upto]

    def slope_jumps(self, limit: int):
        """(knot, slope increase) pairs for the first `limit` dyadic knots plus head knots."""
        out = []
        slopes = self.head_slopes
        for kx, s0, s1 in zip(self.head_knots, slopes[:-1], slopes[1:]):
            out.append((kx, s1 - s0))
        last = slopes[-1]
        for i in range(1, limit + 1):
            kx = self.knot(i)
            if not math.isfinite(kx):
                break
            out.append((kx, 2.0**i - last))
            last = 2.0**i
        return out


def build_psi_W(service_laws, eps2: float) -> DyadicPsi:
    """psi_W(0) = 0, slope c then 2**i after knot b_i = s(i) + i,
    where s(i) is the smallest b with max_j T_j(b) <= eps2 * 4**-i."""
    m_max = max(d.mean() for d in service_laws)
    c = eps2 / (4.0 * max(1.0, m_max))
    laws = list(service_laws)
    log_eps2 = math.log(eps2)

    def log_knot(i):
        ls = tail_threshold_log(laws, log_eps2 - i * LOG4)
        return _logaddexp(ls, math.log(i))

    psi = DyadicPsi(0.0, [], [c], log_knot)
    psi.initial_slope = c
    return psi


def build_psi_A(interarrival_laws, eps2: float) -> DyadicPsi:
    """psi_A = M1 - y on [0, M1], slope 1 on [M1, a_1), slope 2**i after a_i,
    with a_i = max(s_A(i), M1) + i and T_G(s_A(i)) <= eps2 * 4**-i."""
    laws = list(interarrival_laws)
    log_eps2 = math.log(eps2)
    lm = tail_threshold_log(laws, log_eps2 - LOG4)
    M1 = max(1.0, math.exp(lm) if lm < 709 else math.inf)
    if not math.isfinite(M1):
        raise OverflowError("M1 not representable")
    log_M1 = math.log(M1)

    def log_knot(i):
        ls = tail_threshold_log(laws, log_eps2 - i * LOG4)
        return _logaddexp(max(ls, log_M1), math.log(i))

    psi = DyadicPsi(M1, [M1], [-1.0, 1.0], log_knot)
    psi.M1 = M1
    return psi
