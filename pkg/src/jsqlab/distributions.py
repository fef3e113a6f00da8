"""Interarrival and service-time laws.

Every law knows its mean, its tail first moment ``E[Y; Y > M]``, its stop-loss
transform ``E(Y - b)^+`` and an inverse-transform sampler driven by uniforms.
Sampling always goes through the vectorised ``ppf`` so that one uniform stream
yields the same variates whether drawn one at a time or in chunks.
"""
from __future__ import annotations

import math
from dataclasses import dataclass
from typing import Callable, NamedTuple

import numpy as np
from scipy import integrate, special

QUAD_RTOL = 1e-10


class DistributionError(ValueError):
    pass


class RegularityFlags(NamedTuple):
    unbounded_support: bool
    spread_out: bool


def _check_weights(probs, what):
    probs = [float(p) for p in probs]
    if not probs:
        raise DistributionError(f"{what}: empty list")
    if any(p < 0 or not math.isfinite(p) for p in probs):
        raise DistributionError(f"{what}: probabilities must be finite and nonnegative")
    if abs(sum(probs) - 1.0) > 1e-12:
        raise DistributionError(f"{what}: probabilities sum to {sum(probs)!r}, not 1")
    return probs


class Distribution:
    kind = ""
    n_uniforms = 1

    # analytic interface, overridden per family
    def mean(self) -> float:
        raise NotImplementedError

    def second_moment(self) -> float:
        raise NotImplementedError

    def cdf(self, x):
        raise NotImplementedError

    def sf(self, x):
        return 1.0 - self.cdf(x)

    def ppf(self, u: np.ndarray) -> np.ndarray:
        """Map uniforms of shape (n, n_uniforms) to n variates."""
        raise NotImplementedError

    def tail_first_moment(self, M: float) -> float:
        raise NotImplementedError

    def log_tail_first_moment_at_log(self, log_M: float) -> float:
        """log E[Y; Y > e^log_M]; used when thresholds overflow floats."""
        if log_M > 700:
            return -math.inf
        t = self.tail_first_moment(math.exp(log_M))
        return math.log(t) if t > 0 else -math.inf

    def stop_loss(self, b: float) -> float:
        """E(Y - b)^+ for b >= 0."""
        return max(self.tail_first_moment(b) - b * float(self.sf(b)), 0.0)

    def atoms(self):
        """List of (value, prob) for purely atomic laws, else None."""
        return None

    def upper_support(self) -> float:
        return math.inf

    def regularity_flags(self) -> RegularityFlags:
        raise NotImplementedError

    def to_dict(self) -> dict:
        raise NotImplementedError

    # generic helpers
    def inv_mean(self) -> float:
        return 1.0 / self.mean()

    def is_discrete(self) -> bool:
        return self.atoms() is not None

    def expect(self, fn: Callable[[float], float], breakpoints=()) -> float:
        """E fn(Y) by adaptive quadrature (sums over atoms for atomic laws)."""
        at = self.atoms()
        if at is not None:
            return math.fsum(p * fn(v) for v, p in at)
        return _quad_expect(self, fn, breakpoints)

    def sample(self, rng) -> float:
        return float(self.sample_many(rng, 1)[0])

    def sample_many(self, rng, n: int) -> np.ndarray:
        u = rng.uniforms(n * self.n_uniforms).reshape(n, self.n_uniforms)
        return self.ppf(u)


def _quad_expect(d: Distribution, fn, breakpoints=()):
    lo = 0.0
    hi = d.upper_support()
    pts = sorted(b for b in breakpoints if lo < b < hi)
    edges = [lo] + pts + [hi]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        if b <= a:
            continue
        val, _ = integrate.quad(
            lambda y: fn(y) * d.pdf(y), a, b, epsrel=QUAD_RTOL, epsabs=0.0, limit=500
        )
        total += val
    return total


@dataclass(frozen=True)
class Exponential(Distribution):
    rate: float

    kind = "exponential"

    def __post_init__(self):
        if not (self.rate > 0 and math.isfinite(self.rate)):
            raise DistributionError("exponential: rate must be positive")

    def mean(self):
        return 1.0 / self.rate

    def second_moment(self):
        return 2.0 / self.rate**2

    def pdf(self, y):
        return self.rate * math.exp(-self.rate * y) if y >= 0 else 0.0

    def cdf(self, x):
        return np.where(np.asarray(x) < 0, 0.0, -np.expm1(-self.rate * np.maximum(x, 0.0)))

    def sf(self, x):
        return np.where(np.asarray(x) < 0, 1.0, np.exp(-self.rate * np.maximum(x, 0.0)))

    def ppf(self, u):
        return -np.log1p(-u[:, 0]) / self.rate

    def tail_first_moment(self, M):
        M = max(float(M), 0.0)
        return (M + 1.0 / self.rate) * math.exp(-self.rate * M)

    def log_tail_first_moment_at_log(self, log_M):
        if log_M > 700:
            return -math.inf
        M = math.exp(log_M)
        return math.log(M + 1.0 / self.rate) - self.rate * M

    def stop_loss(self, b):
        return math.exp(-self.rate * max(b, 0.0)) / self.rate - min(b, 0.0)

    def regularity_flags(self):
        return RegularityFlags(True, True)

    def to_dict(self):
        return {"kind": self.kind, "rate": self.rate}


@dataclass(frozen=True)
class Deterministic(Distribution):
    value: float

    kind = "deterministic"

    def __post_init__(self):
        if not (self.value > 0 and math.isfinite(self.value)):
            raise DistributionError("deterministic: value must be positive")

    def mean(self):
        return self.value

    def second_moment(self):
        return self.value**2

    def cdf(self, x):
        return np.where(np.asarray(x) >= self.value, 1.0, 0.0)

    def ppf(self, u):
        return np.full(u.shape[0], self.value)

    def tail_first_moment(self, M):
        return self.value if self.value > M else 0.0

    def stop_loss(self, b):
        return max(self.value - b, 0.0)

    def atoms(self):
        return [(self.value, 1.0)]

    def upper_support(self):
        return self.value

    def regularity_flags(self):
        return RegularityFlags(False, False)

    def to_dict(self):
        return {"kind": self.kind, "value": self.value}


@dataclass(frozen=True)
class UniformInterval(Distribution):
    a: float
    b: float

    kind = "uniform"

    def __post_init__(self):
        if not (self.a >= 0 and self.b > self.a and math.isfinite(self.b)):
            raise DistributionError("uniform: need 0 <= a < b")

    def mean(self):
        return 0.5 * (self.a + self.b)

    def second_moment(self):
        return (self.a**2 + self.a * self.b + self.b**2) / 3.0

    def pdf(self, y):
        return 1.0 / (self.b - self.a) if self.a <= y <= self.b else 0.0

    def cdf(self, x):
        return np.clip((np.asarray(x, dtype=float) - self.a) / (self.b - self.a), 0.0, 1.0)

    def ppf(self, u):
        return self.a + (self.b - self.a) * u[:, 0]

    def tail_first_moment(self, M):
        c = min(max(M, self.a), self.b)
        return (self.b**2 - c**2) / (2.0 * (self.b - self.a))

    def stop_loss(self, b):
        if b <= self.a:
            return self.mean() - b
        if b >= self.b:
            return 0.0
        return (self.b - b) ** 2 / (2.0 * (self.b - self.a))

    def upper_support(self):
        return self.b

    def expect(self, fn, breakpoints=()):
        pts = sorted(x for x in breakpoints if self.a < x < self.b)
        edges = [self.a] + pts + [self.b]
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            val, _ = integrate.quad(fn, lo, hi, epsrel=QUAD_RTOL, epsabs=0.0, limit=500)
            total += val
        return total / (self.b - self.a)

    def regularity_flags(self):
        return RegularityFlags(False, True)

    def to_dict(self):
        return {"kind": self.kind, "a": self.a, "b": self.b}


@dataclass(frozen=True)
class DiscretePointMasses(Distribution):
    values: tuple
    probs: tuple

    kind = "discrete"

    def __post_init__(self):
        vals = tuple(float(v) for v in self.values)
        if len(vals) != len(self.probs):
            raise DistributionError("discrete: values and probs differ in length")
        if any(not (v > 0 and math.isfinite(v)) for v in vals):
            raise DistributionError("discrete: values must be positive")
        probs = tuple(_check_weights(self.probs, "discrete"))
        order = sorted(range(len(vals)), key=lambda i: vals[i])
        object.__setattr__(self, "values", tuple(vals[i] for i in order))
        object.__setattr__(self, "probs", tuple(probs[i] for i in order))
        object.__setattr__(self, "_cum", np.cumsum(self.probs))

    def mean(self):
        return math.fsum(v * p for v, p in zip(self.values, self.probs))

    def second_moment(self):
        return math.fsum(v * v * p for v, p in zip(self.values, self.probs))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        idx = np.searchsorted(self.values, x, side="right")
        cum = np.concatenate([[0.0], self._cum])
        return np.minimum(cum[idx], 1.0)

    def ppf(self, u):
        cum = self._cum.copy()
        cum[-1] = np.inf
        idx = np.searchsorted(cum, u[:, 0], side="right")
        return np.asarray(self.values)[idx]

    def tail_first_moment(self, M):
        return math.fsum(v * p for v, p in zip(self.values, self.probs) if v > M)

    def stop_loss(self, b):
        return math.fsum((v - b) * p for v, p in zip(self.values, self.probs) if v > b)

    def atoms(self):
        return [(v, p) for v, p in zip(self.values, self.probs) if p > 0]

    def upper_support(self):
        return max(v for v, p in zip(self.values, self.probs) if p > 0)

    def regularity_flags(self):
        return RegularityFlags(False, False)

    def to_dict(self):
        return {"kind": self.kind, "masses": [[v, p] for v, p in zip(self.values, self.probs)]}

    def __hash__(self):
        return hash((self.kind, self.values, self.probs))

    def __eq__(self, other):
        return (
            isinstance(other, DiscretePointMasses)
            and self.values == other.values
            and self.probs == other.probs
        )


@dataclass(frozen=True)
class Hyperexponential(Distribution):
    rates: tuple
    probs: tuple

    kind = "hyperexponential"
    n_uniforms = 2

    def __post_init__(self):
        rates = tuple(float(r) for r in self.rates)
        if len(rates) != len(self.probs):
            raise DistributionError("hyperexponential: rates and probs differ in length")
        if any(not (r > 0 and math.isfinite(r)) for r in rates):
            raise DistributionError("hyperexponential: rates must be positive")
        object.__setattr__(self, "rates", rates)
        object.__setattr__(self, "probs", tuple(_check_weights(self.probs, "hyperexponential")))
        object.__setattr__(self, "_cum", np.cumsum(self.probs))

    def mean(self):
        return math.fsum(p / r for r, p in zip(self.rates, self.probs))

    def second_moment(self):
        return math.fsum(2 * p / r**2 for r, p in zip(self.rates, self.probs))

    def pdf(self, y):
        if y < 0:
            return 0.0
        return math.fsum(p * r * math.exp(-r * y) for r, p in zip(self.rates, self.probs))

    def cdf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return 1.0 - sum(p * np.exp(-r * x) for r, p in zip(self.rates, self.probs))

    def sf(self, x):
        x = np.maximum(np.asarray(x, dtype=float), 0.0)
        return sum(p * np.exp(-r * x) for r, p in zip(self.rates, self.probs))

    def ppf(self, u):
        cum = self._cum.copy()
        cum[-1] = np.inf
        comp = np.searchsorted(cum, u[:, 0], side="right")
        rates = np.asarray(self.rates)[comp]
        return -np.log1p(-u[:, 1]) / rates

    def tail_first_moment(self, M):
        M = max(float(M), 0.0)
        return math.fsum(p * (M + 1.0 / r) * math.exp(-r * M) for r, p in zip(self.rates, self.probs))

    def log_tail_first_moment_at_log(self, log_M):
        if log_M > 700:
            return -math.inf
        M = math.exp(log_M)
        terms = [math.log(p) + math.log(M + 1.0 / r) - r * M for r, p in zip(self.rates, self.probs) if p > 0]
        return float(special.logsumexp(terms))

    def stop_loss(self, b):
        b = max(b, 0.0)
        return math.fsum(p * math.exp(-r * b) / r for r, p in zip(self.rates, self.probs))

    def regularity_flags(self):
        return RegularityFlags(True, True)

    def to_dict(self):
        return {"kind": self.kind, "phases": [[r, p] for r, p in zip(self.rates, self.probs)]}

    def __hash__(self):
        return hash((self.kind, self.rates, self.probs))

    def __eq__(self, other):
        return isinstance(other, Hyperexponential) and self.rates == other.rates and self.probs == other.probs


@dataclass(frozen=True)
class Pareto(Distribution):
    shape: float
    scale: float

    kind = "pareto"

    def __post_init__(self):
        if not (self.shape > 1 and self.scale > 0):
            raise DistributionError("pareto: need shape > 1 and scale > 0")

    def mean(self):
        return self.shape * self.scale / (self.shape - 1.0)

    def second_moment(self):
        if self.shape <= 2:
            return math.inf
        return self.shape * self.scale**2 / (self.shape - 2.0)

    def pdf(self, y):
        if y < self.scale:
            return 0.0
        return self.shape * self.scale**self.shape / y ** (self.shape + 1.0)

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < self.scale, 0.0, 1.0 - (self.scale / np.maximum(x, self.scale)) ** self.shape)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        return np.where(x < self.scale, 1.0, (self.scale / np.maximum(x, self.scale)) ** self.shape)

    def ppf(self, u):
        return self.scale * (1.0 - u[:, 0]) ** (-1.0 / self.shape)

    def tail_first_moment(self, M):
        if M <= self.scale:
            return self.mean()
        a = self.shape
        return a * self.scale**a * M ** (1.0 - a) / (a - 1.0)

    def log_tail_first_moment_at_log(self, log_M):
        a = self.shape
        if log_M <= math.log(self.scale):
            return math.log(self.mean())
        return math.log(a / (a - 1.0)) + a * math.log(self.scale) + (1.0 - a) * log_M

    def stop_loss(self, b):
        if b <= self.scale:
            return self.mean() - b
        a = self.shape
        return self.scale**a * b ** (1.0 - a) / (a - 1.0)

    def expect(self, fn, breakpoints=()):
        # substitute y = scale * t^(-1/shape) to map the heavy tail onto (0, 1]
        pts = sorted((self.scale / b) ** self.shape for b in breakpoints if b > self.scale)
        edges = [0.0] + pts + [1.0]
        g = lambda t: fn(self.scale * t ** (-1.0 / self.shape)) if t > 0 else 0.0
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            val, _ = integrate.quad(g, lo, hi, epsrel=QUAD_RTOL, epsabs=0.0, limit=500)
            total += val
        return total

    def regularity_flags(self):
        return RegularityFlags(True, True)

    def to_dict(self):
        return {"kind": self.kind, "shape": self.shape, "scale": self.scale}


@dataclass(frozen=True)
class LogNormal(Distribution):
    location: float
    scale: float

    kind = "lognormal"

    def __post_init__(self):
        if not (self.scale > 0 and math.isfinite(self.location)):
            raise DistributionError("lognormal: need scale > 0")

    def mean(self):
        return math.exp(self.location + 0.5 * self.scale**2)

    def second_moment(self):
        return math.exp(2 * self.location + 2 * self.scale**2)

    def pdf(self, y):
        if y <= 0:
            return 0.0
        z = (math.log(y) - self.location) / self.scale
        return math.exp(-0.5 * z * z) / (y * self.scale * math.sqrt(2 * math.pi))

    def cdf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            z = (np.log(np.maximum(x, 0.0)) - self.location) / self.scale
        return special.ndtr(z)

    def sf(self, x):
        x = np.asarray(x, dtype=float)
        with np.errstate(divide="ignore"):
            z = (np.log(np.maximum(x, 0.0)) - self.location) / self.scale
        return special.ndtr(-z)

    def ppf(self, u):
        return np.exp(self.location + self.scale * special.ndtri(u[:, 0]))

    def tail_first_moment(self, M):
        if M <= 0:
            return self.mean()
        d = (self.location + self.scale**2 - math.log(M)) / self.scale
        return self.mean() * float(special.ndtr(d))

    def log_tail_first_moment_at_log(self, log_M):
        d = (self.location + self.scale**2 - log_M) / self.scale
        return self.location + 0.5 * self.scale**2 + float(special.log_ndtr(d))

    def stop_loss(self, b):
        if b <= 0:
            return self.mean() - b
        d1 = (self.location + self.scale**2 - math.log(b)) / self.scale
        d2 = d1 - self.scale
        return max(self.mean() * float(special.ndtr(d1)) - b * float(special.ndtr(d2)), 0.0)

    def expect(self, fn, breakpoints=()):
        # integrate over the standard normal variable
        zs = sorted((math.log(b) - self.location) / self.scale for b in breakpoints if b > 0)
        edges = [-math.inf] + zs + [math.inf]
        g = lambda z: fn(math.exp(self.location + self.scale * z)) * math.exp(-0.5 * z * z)
        total = 0.0
        for lo, hi in zip(edges[:-1], edges[1:]):
            val, _ = integrate.quad(g, lo, hi, epsrel=QUAD_RTOL, epsabs=0.0, limit=500)
            total += val
        return total / math.sqrt(2 * math.pi)

    def regularity_flags(self):
        return RegularityFlags(True, True)

    def to_dict(self):
        return {"kind": self.kind, "location": self.location, "scale": self.scale}


def exponential(rate: float) -> Exponential:
    return Exponential(float(rate))


def discrete(masses) -> DiscretePointMasses:
    vals, probs = zip(*masses)
    return DiscretePointMasses(tuple(vals), tuple(probs))


def hyperexponential(phases) -> Hyperexponential:
    rates, probs = zip(*phases)
    return Hyperexponential(tuple(rates), tuple(probs))


def from_dict(d: dict) -> Distribution:
    if not isinstance(d, dict) or "kind" not in d:
        raise DistributionError("distribution must be an object with a 'kind' field")
    kind = d["kind"]
    params = {k: v for k, v in d.items() if k != "kind"}
    try:
        if kind == "exponential":
            if "mean" in params:
                return Exponential(1.0 / float(params["mean"]))
            return Exponential(float(params["rate"]))
        if kind == "deterministic":
            return Deterministic(float(params["value"]))
        if kind == "uniform":
            return UniformInterval(float(params["a"]), float(params["b"]))
        if kind == "discrete":
            return discrete([(float(v), float(p)) for v, p in params["masses"]])
        if kind == "hyperexponential":
            return hyperexponential([(float(r), float(p)) for r, p in params["phases"]])
        if kind == "pareto":
            return Pareto(float(params["shape"]), float(params["scale"]))
        if kind == "lognormal":
            return LogNormal(float(params["location"]), float(params["scale"]))
    except KeyError as e:
        raise DistributionError(f"{kind}: missing parameter {e.args[0]!r}") from None
    except (TypeError, ValueError) as e:
        if isinstance(e, DistributionError):
            raise
        raise DistributionError(f"{kind}: bad parameter ({e})") from None
    raise DistributionError(f"unknown distribution kind {kind!r}")


# functional aliases


def mean(d: Distribution) -> float:
    return d.mean()


def tail_first_moment(d: Distribution, M: float) -> float:
    if M < 0:
        raise DistributionError("tail_first_moment needs M >= 0")
    return d.tail_first_moment(M)


def sample(d: Distribution, rng) -> float:
    return d.sample(rng)


def regularity_flags(d: Distribution) -> RegularityFlags:
    return d.regularity_flags()


def weighted_tail(d: Distribution, b: float) -> float:
    """mu * E[Y; mu Y > b]: the tail first moment of the rate-scaled law."""
    mu = 1.0 / d.mean()
    return mu * d.tail_first_moment(b / mu)


def log_weighted_tail_at_log(d: Distribution, log_b: float) -> float:
    mu = 1.0 / d.mean()
    return math.log(mu) + d.log_tail_first_moment_at_log(log_b - math.log(mu))


def weighted_stop_loss(d: Distribution, b: float) -> float:
    """E(mu Y - b)^+ with mu = 1/mean."""
    mu = 1.0 / d.mean()
    return mu * d.stop_loss(b / mu)
