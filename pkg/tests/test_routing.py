import numpy as np
import pytest

from conftest import class_spec, station_spec, three_queue_discrete
from jsqlab.distributions import exponential
from jsqlab.network import ClassIndependent, NetworkSpec, explicit
from jsqlab.routing import NotConverged, potential, solve_routing, uniform_table


def test_symmetric_mean_field_is_uniform():
    t = solve_routing(class_spec(6, 4.2, 3))
    assert t.uniform and t.max_excess() == 0.0
    assert t.prob(0, (0, 2, 5), 2) == pytest.approx(1 / 3)


def test_asymmetric_needs_nonuniform_routing():
    # uniform routing overloads queue 1; the solver must move mass to queue 0
    law = exponential(1.0)
    spec = NetworkSpec(
        N=2,
        interarrival=(exponential(0.8), exponential(0.7)),
        selection=(explicit({(0, 1): 1.0}), explicit({(1,): 1.0})),
        service=ClassIndependent((law, law)),
    )
    assert uniform_table(spec).max_excess() > 0
    t = solve_routing(spec)
    assert t.rho == pytest.approx(0.75)
    assert t.max_excess() <= 1e-9
    # queue 1 takes 0.7 from its own stream, so at most 0.05 of the shared one
    assert t.prob(0, (0, 1), 1) * 0.8 <= 0.05 + 1e-9


@pytest.mark.parametrize("spec", [three_queue_discrete(), station_spec()])
def test_rows_are_distributions(spec):
    t = solve_routing(spec)
    for k, A, _ in t.rows:
        row = t.q_row(k, A)
        assert np.all(row >= 0)
        assert row.sum() == pytest.approx(1.0, abs=1e-12)
    assert t.max_excess() <= 1e-9


def test_potential_of_uniform_equal_loads_is_zero():
    spec = class_spec(3, 2.4, 2)
    assert potential(spec, uniform_table(spec)) == pytest.approx(0.0, abs=1e-24)


def test_csv_rows():
    text = solve_routing(three_queue_discrete()).to_csv().splitlines()
    assert text[0] == "k,A,n,q"
    assert len(text) == 1 + 3 * 2 + 2 + 1


def test_iteration_cap_raises():
    law = exponential(1.0)
    spec = NetworkSpec(
        N=2,
        interarrival=(exponential(0.8), exponential(0.7)),
        selection=(explicit({(0, 1): 1.0}), explicit({(1,): 1.0})),
        service=ClassIndependent((law, law)),
    )
    with pytest.raises(NotConverged):
        solve_routing(spec, max_iters=0)
