"""Hypothesis strategies for random networks and states."""
import numpy as np
from hypothesis import strategies as st

from jsqlab.distributions import discrete, exponential
from jsqlab.network import ClassIndependent, NetworkSpec, StationIndependent, explicit, traffic_intensity


@st.composite
def explicit_specs(draw, max_N=4, max_K=2, station=None, discrete_service=False, target=None):
    """Random explicit-selection spec rescaled to traffic intensity `target` (drawn if None)."""
    N = draw(st.integers(1, max_N))
    K = draw(st.integers(1, max_K))
    station = draw(st.booleans()) if station is None else station
    rho = draw(st.floats(0.2, 0.9)) if target is None else target
    rules = []
    for _ in range(K):
        n_sets = draw(st.integers(1, 3))
        sets = {}
        for _ in range(n_sets):
            A = tuple(sorted(draw(st.sets(st.integers(0, N - 1), min_size=1, max_size=N))))
            sets[A] = sets.get(A, 0) + draw(st.integers(1, 5))
        tot = sum(sets.values())
        rules.append(explicit({A: w / tot for A, w in sets.items()}))

    def law():
        if discrete_service:
            a = draw(st.floats(0.2, 1.0))
            b = draw(st.floats(1.0, 3.0))
            p = draw(st.floats(0.1, 0.9))
            return discrete([(a, p), (b, 1 - p)])
        return exponential(draw(st.floats(0.5, 2.0)))

    if station:
        per_class = []
        for k, rule in enumerate(rules):
            for A, _ in rule.sets:
                per_class.append((k, A, law()))
        service = StationIndependent(None, tuple(per_class))
    else:
        service = ClassIndependent(tuple(law() for _ in range(N)))
    rates = [draw(st.floats(0.2, 2.0)) for _ in range(K)]
    spec = NetworkSpec(N, tuple(exponential(r) for r in rates), tuple(rules), service)
    base = traffic_intensity(spec).rho
    scale = rho / base
    return spec.replace(interarrival=tuple(exponential(r * scale) for r in rates))


def rng_seeds():
    return st.integers(0, 2**32 - 1).map(np.random.default_rng)
