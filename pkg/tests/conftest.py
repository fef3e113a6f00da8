import pytest

from jsqlab.distributions import Deterministic, UniformInterval, discrete, exponential, hyperexponential
from jsqlab.network import (
    FIFO,
    JSQ,
    ClassIndependent,
    MeanFieldChoose,
    NetworkSpec,
    StationIndependent,
    explicit,
)


def class_spec(N, rate, D=1, law=None, discipline=FIFO, assignment=JSQ, tie_break="uniform"):
    law = law or exponential(1.0)
    return NetworkSpec(
        N=N,
        interarrival=(exponential(rate),),
        selection=(MeanFieldChoose(D),),
        service=ClassIndependent(tuple(law for _ in range(N))),
        discipline=discipline,
        assignment=assignment,
        tie_break=tie_break,
    )


def mm1(rho=0.8):
    return class_spec(1, rho)


def three_queue_discrete():
    """Asymmetric three-queue spec with discrete services (exact jump mode)."""
    law = discrete([(0.5, 0.5), (1.5, 0.5)])
    return NetworkSpec(
        N=3,
        interarrival=(exponential(1.2), exponential(0.6)),
        selection=(MeanFieldChoose(2), explicit({(0, 2): 0.5, (1,): 0.5})),
        service=ClassIndependent((law, law, law)),
    )


def station_spec():
    return NetworkSpec(
        N=2,
        interarrival=(exponential(0.5), exponential(0.3)),
        selection=(explicit({(0, 1): 1.0}), explicit({(1,): 1.0})),
        service=StationIndependent(
            exponential(1.0), ((1, (1,), UniformInterval(0.5, 1.5)),)
        ),
    )


SERVICE_LAWS = {
    "exponential": exponential(1.0),
    "uniform": UniformInterval(0.0, 2.0),
    "hyperexponential": hyperexponential([(2.0, 0.5), (2.0 / 3.0, 0.5)]),
    "discrete": discrete([(0.5, 0.5), (1.5, 0.5)]),
    "deterministic": Deterministic(1.0),
}


@pytest.fixture
def small_spec():
    return three_queue_discrete()


def random_state(spec, rng, discipline="fifo", max_jobs=6, scale=3.0):
    """Random valid snapshot: jobs drawn from the spec's classes, efforts from the discipline."""
    from jsqlab.lyapunov.state import StateSnapshot
    from jsqlab.network import selection_distribution

    dists = [selection_distribution(r, spec.N, k) for k, r in enumerate(spec.selection)]
    jobs = []
    ranks = [0] * spec.N
    for _ in range(int(rng.integers(0, max_jobs + 1))):
        k = int(rng.integers(spec.K))
        sets = dists[k]
        A = sets[int(rng.choice(len(sets), p=[p for _, p in sets]))][0]
        n = int(A[rng.integers(len(A))])
        ranks[n] += 1
        w = float(rng.exponential(scale)) + 1e-9
        jobs.append((n, ranks[n], k, A, float(rng.exponential(scale)), w, 0.0))
    s = tuple(float(x) + 1e-9 for x in rng.exponential(scale, spec.K))
    return StateSnapshot.build(spec.N, jobs, s, check=False).with_efforts(discipline)


def pytest_terminal_summary(terminalreporter):
    from test_acceptance import RESULTS

    if RESULTS:
        terminalreporter.section("acceptance criteria")
        for line in RESULTS:
            terminalreporter.write_line(line)
