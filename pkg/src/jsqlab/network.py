"""Network specifications, selection rules and structural checks.

Queues and streams are indexed from 0. A selection set is a sorted tuple of
queue indices; its bitmask form (bit n set for queue n) is used for subset
enumeration and in CSV exports.
"""
from __future__ import annotations

import itertools
import math
from dataclasses import dataclass, field
from functools import lru_cache
from typing import Callable, Optional, Union

import numpy as np

from .distributions import Distribution, Exponential, weighted_tail


class SpecError(ValueError):
    pass


class SubsetExplosion(RuntimeError):
    pass


class InvalidPermutation(ValueError):
    pass


EXHAUSTIVE_MAX_N = 24
CLOSURE_LIMIT = 1 << 16
ENUM_LIMIT = 2_000_000


def mask_of(A) -> int:
    m = 0
    for n in A:
        m |= 1 << n
    return m


def members(mask: int) -> tuple:
    out = []
    n = 0
    while mask:
        if mask & 1:
            out.append(n)
        mask >>= 1
        n += 1
    return tuple(out)


# selection rules


@dataclass(frozen=True)
class Explicit:
    sets: tuple  # ((A tuple, prob), ...), sorted by A

    kind = "explicit"

    def __post_init__(self):
        merged: dict = {}
        for A, p in self.sets:
            A = tuple(sorted(set(int(n) for n in A)))
            if not A:
                raise SpecError("explicit selection: empty selection set")
            if p < 0 or not math.isfinite(p):
                raise SpecError("explicit selection: bad probability")
            merged[A] = merged.get(A, 0.0) + float(p)
        tot = math.fsum(merged.values())
        if abs(tot - 1.0) > 1e-12:
            raise SpecError(f"explicit selection: probabilities sum to {tot!r}, not 1")
        items = tuple(sorted((A, p) for A, p in merged.items() if p > 0))
        object.__setattr__(self, "sets", items)
        object.__setattr__(self, "_cum", np.cumsum([p for _, p in items]))


@dataclass(frozen=True)
class MeanFieldChoose:
    D: int

    kind = "mean_field"


@dataclass(frozen=True)
class MeanFieldWithReplacement:
    D: int

    kind = "mean_field_replacement"


@dataclass(frozen=True)
class CircleNeighborhood:
    radius: int

    kind = "circle"


SelectionRule = Union[Explicit, MeanFieldChoose, MeanFieldWithReplacement, CircleNeighborhood]


def explicit(mapping) -> Explicit:
    if isinstance(mapping, dict):
        mapping = mapping.items()
    return Explicit(tuple((tuple(A), float(p)) for A, p in mapping))


@lru_cache(maxsize=None)
def _stirling2(n: int, k: int) -> int:
    if n == k:
        return 1
    if k == 0 or k > n:
        return 0
    return k * _stirling2(n - 1, k) + _stirling2(n - 1, k - 1)


def circle_set(N: int, k: int, radius: int) -> tuple:
    """Queues k-R+1 .. k+R around a ring of N (stream k sits between queues k and k+1)."""
    return tuple(sorted({(k + d) % N for d in range(-radius + 1, radius + 1)}))


def validate_rule(rule, N: int, k: int):
    if isinstance(rule, Explicit):
        for A, _ in rule.sets:
            if A[0] < 0 or A[-1] >= N:
                raise SpecError(f"stream {k}: selection set {list(A)} outside queues 0..{N - 1}")
    elif isinstance(rule, MeanFieldChoose):
        if not 1 <= rule.D <= N:
            raise SpecError(f"stream {k}: mean-field D={rule.D} not in 1..{N}")
    elif isinstance(rule, MeanFieldWithReplacement):
        if rule.D < 1:
            raise SpecError(f"stream {k}: D must be >= 1")
    elif isinstance(rule, CircleNeighborhood):
        if rule.radius < 1:
            raise SpecError(f"stream {k}: circle radius must be >= 1")
        if k >= N:
            raise SpecError(f"stream {k}: circle rule needs stream index < N")
    else:
        raise SpecError(f"stream {k}: unknown selection rule {rule!r}")


def support_size(rule, N: int) -> int:
    if isinstance(rule, Explicit):
        return len(rule.sets)
    if isinstance(rule, MeanFieldChoose):
        return math.comb(N, rule.D)
    if isinstance(rule, MeanFieldWithReplacement):
        return sum(math.comb(N, j) for j in range(1, min(rule.D, N) + 1))
    return 1


def selection_distribution(rule, N: int, k: int = 0) -> list:
    """All (A, p_{k,A}) with p > 0."""
    if support_size(rule, N) > ENUM_LIMIT:
        raise SubsetExplosion(f"selection support too large to enumerate ({support_size(rule, N)})")
    if isinstance(rule, Explicit):
        return list(rule.sets)
    if isinstance(rule, MeanFieldChoose):
        p = 1.0 / math.comb(N, rule.D)
        return [(A, p) for A in itertools.combinations(range(N), rule.D)]
    if isinstance(rule, MeanFieldWithReplacement):
        D = rule.D
        out = []
        for j in range(1, min(D, N) + 1):
            p = math.factorial(j) * _stirling2(D, j) / N**D
            out.extend((A, p) for A in itertools.combinations(range(N), j))
        return out
    return [(circle_set(N, k, rule.radius), 1.0)]


def sample_selection(rule, N: int, k: int, rng) -> tuple:
    """Draw a selection set from rule for stream k."""
    if isinstance(rule, MeanFieldChoose):
        D = rule.D
        if D == N:
            return tuple(range(N))
        # partial Fisher-Yates on a virtual identity permutation
        swapped: dict = {}
        picked = []
        for i in range(D):
            j = i + min(int(rng.uniform() * (N - i)), N - i - 1)
            vj = swapped.get(j, j)
            swapped[j] = swapped.get(i, i)
            picked.append(vj)
        return tuple(sorted(picked))
    if isinstance(rule, MeanFieldWithReplacement):
        return tuple(sorted({min(int(rng.uniform() * N), N - 1) for _ in range(rule.D)}))
    if isinstance(rule, Explicit):
        if len(rule.sets) == 1:
            return rule.sets[0][0]
        u = rng.uniform()
        idx = int(np.searchsorted(rule._cum, u, side="right"))
        return rule.sets[min(idx, len(rule.sets) - 1)][0]
    return circle_set(N, k, rule.radius)


# service maps, disciplines, assignment rules


@dataclass(frozen=True)
class ClassIndependent:
    per_queue: tuple  # Distribution per queue

    mode = "class"


@dataclass(frozen=True)
class StationIndependent:
    default: Optional[Distribution]
    per_class: tuple = ()  # ((k, A tuple, Distribution), ...)

    mode = "station"

    def __post_init__(self):
        items = tuple(sorted(((int(k), tuple(sorted(A)), d) for k, A, d in self.per_class), key=lambda t: (t[0], t[1])))
        object.__setattr__(self, "per_class", items)
        object.__setattr__(self, "_lookup", {(k, A): d for k, A, d in items})

    def get(self, k, A):
        d = self._lookup.get((k, A), self.default)
        if d is None:
            raise SpecError(f"no service distribution for class (stream {k}, set {list(A)})")
        return d


@dataclass(frozen=True)
class Discipline:
    kind: str
    direction: str = ""

    KINDS = ("fifo", "lifo", "ps", "designated", "priority")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise SpecError(f"unknown discipline {self.kind!r}")
        if self.kind == "priority" and self.direction not in ("shortest", "longest"):
            raise SpecError("priority discipline needs direction 'shortest' or 'longest'")


FIFO = Discipline("fifo")
LIFO = Discipline("lifo")
PS = Discipline("ps")
DESIGNATED = Discipline("designated")


@dataclass(frozen=True)
class AssignmentRule:
    kind: str
    kappa: int = 0

    KINDS = ("jsq", "jllq", "random", "jsq_handicap")

    def __post_init__(self):
        if self.kind not in self.KINDS:
            raise SpecError(f"unknown assignment rule {self.kind!r}")


JSQ = AssignmentRule("jsq")
JLLQ = AssignmentRule("jllq")
RANDOM_D1 = AssignmentRule("random")


@dataclass(frozen=True)
class NetworkSpec:
    N: int
    interarrival: tuple
    selection: tuple
    service: Union[ClassIndependent, StationIndependent]
    discipline: Discipline = FIFO
    assignment: AssignmentRule = JSQ
    tie_break: str = "uniform"
    name: str = ""

    def __post_init__(self):
        object.__setattr__(self, "interarrival", tuple(self.interarrival))
        object.__setattr__(self, "selection", tuple(self.selection))
        if self.N < 1:
            raise SpecError("N must be >= 1")
        if len(self.interarrival) < 1:
            raise SpecError("need at least one arrival stream")
        if len(self.selection) != len(self.interarrival):
            raise SpecError("one selection rule per stream required")
        if self.tie_break not in ("uniform", "min_index"):
            raise SpecError(f"unknown tie_break {self.tie_break!r}")
        for k, rule in enumerate(self.selection):
            validate_rule(rule, self.N, k)
        if isinstance(self.service, ClassIndependent):
            if len(self.service.per_queue) != self.N:
                raise SpecError("class-independent service needs one distribution per queue")
        elif isinstance(self.service, StationIndependent):
            if self.service.default is None:
                # every supported class must be covered
                for k, rule in enumerate(self.selection):
                    for A, _ in selection_distribution(rule, self.N, k):
                        self.service.get(k, A)
        else:
            raise SpecError("service must be ClassIndependent or StationIndependent")
        if self.discipline.kind == "designated" or self.assignment.kind == "jsq_handicap":
            if self.N != 2:
                raise SpecError("designated-queue discipline and handicap rule need N = 2")

    @property
    def K(self) -> int:
        return len(self.interarrival)

    @property
    def mode(self) -> str:
        return self.service.mode

    def alpha(self) -> np.ndarray:
        return np.array([1.0 / g.mean() for g in self.interarrival])

    def service_for(self, k: int, A: tuple, n: int) -> Distribution:
        if isinstance(self.service, ClassIndependent):
            return self.service.per_queue[n]
        return self.service.get(k, A)

    def homogeneous_service(self) -> Optional[Distribution]:
        """The single service law if every job uses the same one."""
        if isinstance(self.service, ClassIndependent):
            first = self.service.per_queue[0]
            return first if all(d == first for d in self.service.per_queue) else None
        if self.service.per_class:
            ds = {d for _, _, d in self.service.per_class}
            if self.service.default is not None:
                ds.add(self.service.default)
            return next(iter(ds)) if len(ds) == 1 else None
        return self.service.default

    def classes(self) -> list:
        """(k, A, p_{k,A}) over the support of every stream."""
        out = []
        for k, rule in enumerate(self.selection):
            out.extend((k, A, p) for A, p in selection_distribution(rule, self.N, k))
        return out

    def service_laws(self) -> list:
        """Distinct service distributions in use."""
        if isinstance(self.service, ClassIndependent):
            laws = list(self.service.per_queue)
        else:
            laws = [self.service.get(k, A) for k, A, _ in self.classes()]
        seen, out = set(), []
        for d in laws:
            if d not in seen:
                seen.add(d)
                out.append(d)
        return out

    def class_mean(self, k, A) -> float:
        """m_{k,A} for station-independent specs."""
        return self.service.get(k, A).mean()

    def queue_mean(self, n) -> float:
        return self.service.per_queue[n].mean()

    def m_max(self) -> float:
        return max(d.mean() for d in self.service_laws())

    def replace(self, **kw) -> "NetworkSpec":
        from dataclasses import replace as _r

        return _r(self, **kw)


def is_mean_field(rule) -> bool:
    return isinstance(rule, (MeanFieldChoose, MeanFieldWithReplacement))


def symmetric_shortcut_applies(spec: NetworkSpec) -> bool:
    """Homogeneous service plus rules invariant under a transitive queue group."""
    if spec.homogeneous_service() is None:
        return False
    if all(is_mean_field(r) for r in spec.selection):
        return True
    if all(isinstance(r, CircleNeighborhood) for r in spec.selection):
        r0 = spec.selection[0]
        return (
            spec.K == spec.N
            and all(r == r0 for r in spec.selection)
            and all(g == spec.interarrival[0] for g in spec.interarrival)
        )
    return False


# traffic intensity


@dataclass
class TrafficIntensity:
    mode: str
    rho: float
    argmax_B: tuple
    method: str


def _class_weights(spec: NetworkSpec):
    """Per-class load weight and per-queue capacity for the worst-subset ratio."""
    alpha = spec.alpha()
    weights: dict = {}
    for k, A, p in spec.classes():
        if spec.mode == "class":
            w = alpha[k] * p
        else:
            w = alpha[k] * p * spec.class_mean(k, A)
        m = mask_of(A)
        weights[m] = weights.get(m, 0.0) + w
    if spec.mode == "class":
        cap = np.array([1.0 / spec.queue_mean(n) for n in range(spec.N)])
    else:
        cap = np.ones(spec.N)
    return weights, cap


def _union_closure(masks, N, limit=CLOSURE_LIMIT):
    closure = set()
    for m in masks:
        new = {m}
        for c in closure:
            new.add(c | m)
            if len(closure) + len(new) > limit:
                raise SubsetExplosion("support union-closure too large")
        closure |= new
    for n in range(N):
        closure.add(1 << n)
    return closure


def _ratio_over(Bs, weights, cap):
    best, arg = -1.0, 0
    wm = list(weights.items())
    for B in sorted(Bs):
        num = math.fsum(w for m, w in wm if m & B == m)
        den = sum(cap[n] for n in members(B))
        r = num / den
        if r > best + 1e-15:
            best, arg = r, B
    return best, arg


def zeta_subset_sum(f: np.ndarray, N: int) -> np.ndarray:
    """g[B] = sum_{A subset of B} f[A] over all 2^N masks."""
    g = f.copy()
    for i in range(N):
        v = g.reshape(-1, 2, 1 << i)
        v[:, 1, :] += v[:, 0, :]
    return g


def _exhaustive(weights, cap, N):
    if N > EXHAUSTIVE_MAX_N:
        raise SubsetExplosion(f"exhaustive enumeration needs N <= {EXHAUSTIVE_MAX_N}")
    size = 1 << N
    f = np.zeros(size)
    for m, w in weights.items():
        f[m] += w
    num = zeta_subset_sum(f, N)
    c = np.zeros(size)
    for n in range(N):
        c[1 << n] = cap[n]
    den = zeta_subset_sum(c, N)
    den[0] = np.inf
    ratio = num / den
    B = int(np.argmax(ratio))
    return float(ratio[B]), B


def traffic_intensity(spec: NetworkSpec, method: str = "auto") -> TrafficIntensity:
    """Worst-case subset load ratio (rho_1 or rho_2 by service mode).

    method: "auto" (symmetric closed form if it applies, else support
    closure, else exhaustive), "symmetric", "closure", "exhaustive".
    """
    if method in ("auto", "symmetric") and symmetric_shortcut_applies(spec):
        m = spec.homogeneous_service().mean()
        rho = float(spec.alpha().sum()) * m / spec.N
        return TrafficIntensity(spec.mode, rho, tuple(range(spec.N)), "symmetric")
    if method == "symmetric":
        raise SpecError("symmetric closed form does not apply to this spec")
    weights, cap = _class_weights(spec)
    if method in ("auto", "closure"):
        try:
            Bs = _union_closure(list(weights), spec.N)
            rho, B = _ratio_over(Bs, weights, cap)
            return TrafficIntensity(spec.mode, float(rho), members(B), "closure")
        except SubsetExplosion:
            if method == "closure":
                raise
    rho, B = _exhaustive(weights, cap, spec.N)
    return TrafficIntensity(spec.mode, rho, members(B), "exhaustive")


def is_subcritical(spec: NetworkSpec) -> bool:
    return traffic_intensity(spec).rho < 1.0 - 1e-12


# arrival bound


@dataclass
class ArrivalBound:
    gamma: int
    h: Callable[[float], float]
    route: str
    log_h: Optional[Callable[[float], float]] = None

    def h_of_t(self, t: float) -> float:
        return self.h(t)

    def log_h_of_t(self, t: float) -> float:
        if self.log_h is not None:
            return self.log_h(t)
        v = self.h(t)
        return math.log(v) if v > 0 else -math.inf


@dataclass
class Unsupported:
    reason: str

    def __bool__(self):
        return False


def inclusion_probabilities(spec: NetworkSpec) -> np.ndarray:
    """pi[k, n] = P(queue n in the selection set of a stream-k arrival)."""
    pi = np.zeros((spec.K, spec.N))
    for k, rule in enumerate(spec.selection):
        if isinstance(rule, MeanFieldChoose):
            pi[k, :] = rule.D / spec.N
        elif isinstance(rule, MeanFieldWithReplacement):
            pi[k, :] = 1.0 - (1.0 - 1.0 / spec.N) ** rule.D
        else:
            for A, p in selection_distribution(rule, spec.N, k):
                for n in A:
                    pi[k, n] += p
    return pi


def check_arrival_bound(spec: NetworkSpec, t: Optional[float] = None):
    """Gamma and h(t) for the potential-arrival condition, or Unsupported.

    Returns an ArrivalBound (call ``.h(t)``); when t is given the pair
    (bound, h(t)) is returned instead.
    """
    pi = inclusion_probabilities(spec)
    alpha = spec.alpha()
    m_max = spec.m_max()
    res = None
    if np.all(pi < 1.0 - 1e-15):
        if all(isinstance(g, Exponential) for g in spec.interarrival):
            rates = (alpha[:, None] * pi).sum(axis=0)

            def log_h(tt, rates=rates):
                return float(np.min(-rates * m_max * tt))

            def h(tt, log_h=log_h):
                return math.exp(log_h(tt))

            res = ArrivalBound(0, h, "poisson-thinning", log_h)
        else:
            second = np.array([g.second_moment() for g in spec.interarrival])
            if np.all(np.isfinite(second)):
                # Jensen on E[(1-pi)^N(tau)] with Lorden's bound on E N(tau)
                log_keep = np.log1p(-pi)

                def log_h(tt, log_keep=log_keep):
                    tau = m_max * tt
                    count = 1.0 + alpha * tau + alpha**2 * second
                    return float(np.min((count[:, None] * log_keep).sum(axis=0)))

                def h(tt, log_h=log_h):
                    return math.exp(log_h(tt))

                res = ArrivalBound(0, h, "renewal-thinning", log_h)
    if res is None:
        flags = [g.regularity_flags().unbounded_support for g in spec.interarrival]
        if all(flags):
            laws = list(spec.interarrival)

            def h(tt, laws=laws):
                return float(np.prod([float(g.sf(m_max * tt)) for g in laws]))

            res = ArrivalBound(spec.K + 1, h, "unbounded-interarrivals")
    if res is None:
        return Unsupported("selection covers some queue surely and interarrivals are bounded")
    if t is not None:
        return res, res.h(t)
    return res


# family uniformity


@dataclass
class UniformityReport:
    service_sup: float
    interarrival_sup: float
    rho_sup: float
    m_ratio: float


def m_ring_ratio(spec: NetworkSpec) -> float:
    if spec.mode == "class":
        return 1.0
    ms = [spec.class_mean(k, A) for k, A, _ in spec.classes()]
    return max(ms) / min(ms)


def check_family_uniformity(family, M: float) -> UniformityReport:
    modes = {s.mode for s in family}
    if len(modes) != 1:
        raise SpecError("family members must share the service mode")
    serv = max(weighted_tail(d, M) for s in family for d in s.service_laws())
    arr = max(weighted_tail(g, M) for s in family for g in s.interarrival)
    rho = max(traffic_intensity(s).rho for s in family)
    ratio = max(m_ring_ratio(s) for s in family)
    return UniformityReport(serv, arr, rho, ratio)


# symmetry


@dataclass(frozen=True)
class PermutationGroup:
    """Generators as permutations of 0..N+K-1 (queues first, then streams)."""

    N: int
    K: int
    generators: tuple = field(default=())

    def __post_init__(self):
        gens = tuple(tuple(int(x) for x in g) for g in self.generators)
        size = self.N + self.K
        for g in gens:
            if sorted(g) != list(range(size)):
                raise InvalidPermutation(f"not a permutation of 0..{size - 1}: {g}")
            if any(g[n] >= self.N for n in range(self.N)):
                raise InvalidPermutation("generator maps a queue to a stream")
        object.__setattr__(self, "generators", gens)

    @classmethod
    def from_queue_perms(cls, N, K, queue_perms, stream_perms=None):
        gens = []
        for i, qp in enumerate(queue_perms):
            sp = stream_perms[i] if stream_perms else list(range(K))
            gens.append(tuple(qp) + tuple(N + s for s in sp))
        return cls(N, K, tuple(gens))

    @classmethod
    def symmetric(cls, N, K):
        """Full symmetric group on queues (streams fixed)."""
        gens = []
        if N >= 2:
            gens.append([1, 0] + list(range(2, N)))
            gens.append(list(range(1, N)) + [0])
        return cls.from_queue_perms(N, K, gens)

    @classmethod
    def rotations(cls, N, K):
        """Simultaneous rotation of queues and streams (needs K = N)."""
        rot = list(range(1, N)) + [0]
        return cls.from_queue_perms(N, K, [rot], [rot] if K == N else None)

    def queue_part(self, g):
        return g[: self.N]

    def stream_part(self, g):
        return tuple(s - self.N for s in g[self.N:])

    def is_transitive(self) -> bool:
        seen = {0}
        frontier = [0]
        while frontier:
            n = frontier.pop()
            for g in self.generators:
                m = g[n]
                if m not in seen:
                    seen.add(m)
                    frontier.append(m)
        return len(seen) == self.N


def check_symmetry(spec: NetworkSpec, group: PermutationGroup) -> bool:
    if group.N != spec.N or group.K != spec.K:
        raise InvalidPermutation("group size does not match the spec")
    if not group.is_transitive():
        return False
    alpha = spec.alpha()
    for g in group.generators:
        qp = group.queue_part(g)
        sp = group.stream_part(g)
        for k in range(spec.K):
            k2 = sp[k]
            if spec.interarrival[k] != spec.interarrival[k2]:
                return False
            r1, r2 = spec.selection[k], spec.selection[k2]
            if is_mean_field(r1) and r1 == r2:
                pass
            else:
                d1 = {tuple(sorted(qp[n] for n in A)): p for A, p in selection_distribution(r1, spec.N, k)}
                d2 = dict(selection_distribution(r2, spec.N, k2))
                if d1.keys() != d2.keys() or any(abs(d1[A] - d2[A]) > 1e-12 for A in d1):
                    return False
        if isinstance(spec.service, ClassIndependent):
            if any(spec.service.per_queue[qp[n]] != spec.service.per_queue[n] for n in range(spec.N)):
                return False
        else:
            for k, A, _ in spec.classes():
                A2 = tuple(sorted(qp[n] for n in A))
                if spec.service.get(sp[k], A2) != spec.service.get(k, A):
                    return False
        # arrival-load invariance on the support closure (implied by the above)
        weights = {}
        for k, A, p in spec.classes():
            weights[mask_of(A)] = weights.get(mask_of(A), 0.0) + alpha[k] * p
        try:
            closure = _union_closure(list(weights), spec.N, limit=4096) if len(weights) <= 64 else ()
        except SubsetExplosion:
            closure = ()
        if closure:
            for B in closure:
                Bp = mask_of(qp[n] for n in members(B))
                s1 = math.fsum(w for m, w in weights.items() if m & B == m)
                s2 = math.fsum(w for m, w in weights.items() if m & Bp == m)
                if abs(s1 - s2) > 1e-12:
                    return False
    return True
