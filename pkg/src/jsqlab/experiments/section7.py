"""Two-queue network whose designated-queue discipline inflates the workload.

Service times sit on a ladder h(0) < h(1) < h(2) < ..., with tiny quick
jobs, unit moderate jobs that carry most of the load and rare large jobs.
The discipline parks one large designated job at the designated queue and
serves it only when it is alone there.
"""
from __future__ import annotations

import math
from dataclasses import dataclass, field
from typing import Optional

from ..config import spec_hash
from ..distributions import Deterministic, exponential
from ..engine.core import InitialJob, Simulator
from ..network import DESIGNATED, AssignmentRule, NetworkSpec, StationIndependent, explicit
from .batches import parallel_map
from .stats import Interval, wilson_ci

GAMMA1 = 1.0 / 2000.0
H2_FLOOR = 100


class StrictViolation(ValueError):
    def __init__(self, failed: list):
        super().__init__("; ".join(failed))
        self.failed = failed


class DeskInfeasible(RuntimeError):
    """Strict-mode constants imply event rates far beyond any simulation budget."""


def _log_h_ladder(gamma0: float, epsilon: float, h2: float, depth: int) -> list:
    """log h(i) for i = 0..depth."""
    logs = [math.log(gamma0 * epsilon), 0.0, math.log(h2), 3.0 * math.log(h2)]
    while len(logs) <= depth:
        # h(i+1) = exp(sqrt(h(i)))
        prev = logs[-1]
        logs.append(math.exp(prev / 2.0) if prev / 2.0 < 709 else math.inf)
    return logs[: depth + 1]


def _exp(x: float) -> float:
    return math.exp(x) if x < 709 else math.inf


@dataclass(frozen=True)
class Section7Params:
    gamma0: float
    eta: float
    h2: float
    depth: int
    epsilon: float
    strict: bool = False
    gamma1: float = GAMMA1

    def __post_init__(self):
        if not 0 < self.gamma0 <= 1 / 200:
            raise ValueError("gamma0 must lie in (0, 1/200]")
        if not 0 < self.eta <= 1 / 100:
            raise ValueError("eta must lie in (0, 1/100]")
        if not self.epsilon > 0:
            raise ValueError("epsilon must be positive")
        if self.depth < 3:
            raise ValueError("depth must be at least 3")
        if not self.h2 > 1:
            raise ValueError("h2 must exceed 1")

    @property
    def delta(self) -> float:
        return self.gamma0 * self.epsilon

    @property
    def K_eps(self) -> int:
        return int(math.floor(self.gamma1 / self.epsilon))

    def log_h(self, i: int) -> float:
        if i == -1:
            return -math.inf
        return _log_h_ladder(self.gamma0, self.epsilon, self.h2, max(i, 3))[i]

    def h(self, i: int) -> float:
        # exact products where they exist, logs beyond
        exact = {-1: 0.0, 0: self.gamma0 * self.epsilon, 1: 1.0, 2: float(self.h2), 3: float(self.h2) ** 3}
        if i in exact:
            return exact[i]
        return _exp(self.log_h(i))

    def log_rate(self, i: int) -> float:
        """log of the arrival rate of jobs with service time h(i)."""
        if i == 0:
            return math.log(2.0 / self.epsilon)
        if i == 1:
            return math.log(2.0 * (1.0 - self.eta))
        return math.log(2.0) - i * self.log_h(i)

    def rho(self, terms: int = 64) -> float:
        """Traffic intensity, summing large classes until they vanish."""
        total = self.gamma0 + 1.0 - self.eta
        logs = _log_h_ladder(self.gamma0, self.epsilon, self.h2, max(terms, 3))
        for i in range(2, len(logs)):
            lt = (1 - i) * logs[i]
            if lt < -745:
                break
            total += math.exp(lt)
        return total

    def violations(self) -> list:
        failed = []
        rho = self.rho()
        if rho > 1.0 - self.eta / 2.0:
            failed.append(f"rho = {rho:.6g} exceeds 1 - eta/2 = {1 - self.eta / 2:.6g}")
        log_bound = -5.0 * self.log_h(3)
        if math.log(self.epsilon) > log_bound:
            failed.append(f"epsilon = {self.epsilon:.3g} exceeds 1/h(3)^5 = {_exp(log_bound):.3g}")
        if self.h2 < H2_FLOOR or self.h2 != int(self.h2) or int(self.h2) % 2:
            failed.append(f"h2 = {self.h2:g} is not an even integer >= {H2_FLOOR}")
        return failed


@dataclass
class Section7Network:
    params: Section7Params
    spec: NetworkSpec
    classes: list  # ladder index of each stream
    report: dict = field(default_factory=dict)

    def with_kappa(self, kappa: int) -> NetworkSpec:
        return self.spec.replace(assignment=AssignmentRule("jsq_handicap", kappa))


def build_section7_spec(p: Section7Params, include_large: bool = True, kappa: int = 0) -> Section7Network:
    """Network plus validation report; strict mode raises StrictViolation on any failed constraint.

    Each service class is its own Poisson stream offered both queues.
    Classes whose rate underflows double precision are left out and
    listed in the report.
    """
    failed = p.violations()
    if p.strict and failed:
        raise StrictViolation(failed)
    inter, per_class, classes, dropped = [], [], [], []
    for i in range(p.depth + 1):
        if i >= 2 and not include_large:
            continue
        lr = p.log_rate(i)
        lh = p.log_h(i)
        if lr < -700 or lh > 700:
            dropped.append(i)
            continue
        k = len(inter)
        inter.append(exponential(math.exp(lr)))
        per_class.append((k, (0, 1), Deterministic(p.h(i))))
        classes.append(i)
    spec = NetworkSpec(
        N=2,
        interarrival=tuple(inter),
        selection=tuple(explicit({(0, 1): 1.0}) for _ in inter),
        service=StationIndependent(None, tuple(per_class)),
        discipline=DESIGNATED,
        assignment=AssignmentRule("jsq_handicap", kappa),
        tie_break="uniform",
        name="designated-ladder",
    )
    rho = p.rho()
    report = {
        "rho": rho,
        "rho_bound": 1.0 - p.eta / 2.0,
        "subcritical": rho < 1.0,
        "epsilon": p.epsilon,
        "epsilon_bound": _exp(-5.0 * p.log_h(3)),
        "K_eps": p.K_eps,
        "log_h": [p.log_h(i) for i in range(p.depth + 1)],
        "log_rates": [p.log_rate(i) for i in range(p.depth + 1)],
        "dropped_classes": dropped,
        "violations": failed,
        "strict": p.strict,
        "desk_infeasible": p.strict or 2.0 / p.epsilon > 1e9,
        "spec_hash": spec_hash(spec),
    }
    return Section7Network(p, spec, classes, report)


@dataclass
class LadderResult:
    level: int
    kappa: int
    down: int
    up: int
    exceeded: int
    p_down: Interval
    p_up: Interval
    seed: int

    def as_dict(self) -> dict:
        return {
            "level": self.level,
            "kappa": self.kappa,
            "down": self.down,
            "up": self.up,
            "exceeded": self.exceeded,
            "p_down": self.p_down.estimate,
            "p_down_low": self.p_down.low,
            "p_down_high": self.p_down.high,
            "p_up": self.p_up.estimate,
            "p_up_low": self.p_up.low,
            "p_up_high": self.p_up.high,
            "seed": self.seed,
        }


def ladder_run(net: Section7Network, kappa: int, level: int, seed: int, rep: int, max_events: int) -> str:
    """One excursion from a lone designated job of size h(level): "down", "up" or "exceeded"."""
    p = net.params
    lo = p.h(level - 1)
    hi = p.h(level + 1)
    spec = net.with_kappa(kappa)
    k = net.classes.index(level) if level in net.classes else 0
    job = InitialJob(queue=0, residual=p.h(level), stream=k, selection=(0, 1))
    sim = Simulator(spec, seed, rep, initial_jobs=[job])
    st = sim.state
    for _ in range(max_events):
        t_next, _, _ = sim.peek()
        d = st.designated()
        if d is None:
            return "down"
        y = st.residual_at(d, st.clock)
        if d.r > 0 and st.clock + (y - lo) / d.r <= t_next:
            return "down"
        sim.step()
        d = st.designated()
        if d is None:
            return "down"
        y = st.residual_at(d, st.clock)
        if y >= hi * (1 - 1e-12):
            return "up"
        if y <= lo:
            return "down"
    return "exceeded"


def ladder_stats(
    net: Section7Network,
    kappa: int = 0,
    level: int = 2,
    reps: int = 200,
    seed: int = 0,
    max_events: int = 200_000,
    threads: Optional[int] = None,
) -> LadderResult:
    """Probabilities that the designated residual falls to h(level-1) before jumping to h(l), l > level."""
    if net.params.strict:
        raise DeskInfeasible("strict constants are validated only, never simulated")
    if level < 1:
        raise ValueError("level must be at least 1")
    outcomes = parallel_map(lambda r: ladder_run(net, kappa, level, seed, r, max_events), range(reps), threads)
    down = outcomes.count("down")
    up = outcomes.count("up")
    done = down + up
    return LadderResult(level, kappa, down, up, reps - done, wilson_ci(down, done), wilson_ci(up, done), seed)
