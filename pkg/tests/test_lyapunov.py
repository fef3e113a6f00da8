import math

import numpy as np
import pytest
from scipy import integrate

from conftest import SERVICE_LAWS, class_spec, random_state, station_spec, three_queue_discrete
from jsqlab.distributions import UniformInterval, exponential
from jsqlab.lyapunov.constants import proof_constants
from jsqlab.lyapunov.jllq import jllq_flow_derivative, jllq_norm, psi_jllq, queue_loads
from jsqlab.lyapunov.jumps import ExactModeUnavailable, arrival_jump_expectation
from jsqlab.lyapunov.norms import advance_flow, flow_derivative, local_norm, metric_distance, norm, norm_total
from jsqlab.lyapunov.params import ConstructionFailed, build_params, verify_params
from jsqlab.lyapunov.state import InvalidState, StateSnapshot
from jsqlab.network import JLLQ, PS


@pytest.fixture(scope="module")
def params():
    return build_params(three_queue_discrete())


@pytest.fixture(scope="module")
def station_params():
    return build_params(station_spec())


def test_epsilons(params):
    assert params.rho == pytest.approx(0.6)
    assert params.eps1 == pytest.approx(0.4)
    assert params.eps2 == pytest.approx(0.4**2 / 40)
    assert params.L2 >= params.eps2


def test_psi_shapes(params):
    W, A = params.psi_W, params.psi_A
    assert W(0.0) == 0.0
    assert A(0.0) == pytest.approx(params.M1)
    assert A(params.M1) == pytest.approx(0.0, abs=1e-12)
    ys = np.linspace(0.0, 60.0, 3001)
    for psi in (W, A):
        v = psi(ys)
        second = np.diff(v, 2)
        assert np.all(second >= -1e-9 * np.maximum(1.0, np.abs(v[2:])))
    # slopes past the head are powers of two
    for y in (5.0, 20.0, 50.0):
        s = W.right_slope(y)
        assert s == W.initial_slope or math.log2(s).is_integer()


def _psi_quad(psi, law, mu, upto):
    """E psi(mu Y) by scipy quadrature split at the knots."""
    upto = min(upto, mu * law.upper_support())
    bps = [b / mu for b in psi.breakpoints(upto)]
    at = law.atoms()
    if at is not None:
        return math.fsum(p * psi(mu * v) for v, p in at)
    edges = [0.0] + [b for b in bps if b < law.upper_support()] + [min(law.upper_support(), upto / mu)]
    total = 0.0
    for a, b in zip(edges[:-1], edges[1:]):
        total += integrate.quad(lambda y: psi(mu * y) * law.pdf(y), a, b, epsabs=1e-16, epsrel=1e-10, limit=200)[0]
    return total


@pytest.mark.parametrize("name", ["exponential", "uniform", "hyperexponential", "discrete"])
def test_service_potential_expectation_is_small(name):
    law = SERVICE_LAWS[name]
    spec = class_spec(2, 1.0, 1, law=law)
    p = build_params(spec)
    mu = 1.0 / law.mean()
    # past mu Y = 300 the densities are below exp(-200) while psi_W grows at most geometrically
    e = _psi_quad(p.psi_W, law, mu, 300.0)
    assert e <= p.eps2 * (1 + 1e-9)
    assert p.expected_psi_W(law) == pytest.approx(e, rel=1e-6, abs=1e-14)


def test_verify_params_reports_checks(params):
    checks = verify_params(params)
    assert any(k[0] == "psi_W" for k in checks)
    assert all(v <= params.eps2 * (1 + 1e-9) for k, v in checks.items() if k[0] in ("psi_W", "arrival_tail"))


def test_supercritical_spec_is_rejected():
    with pytest.raises(ConstructionFailed):
        build_params(class_spec(2, 2.5, 2))


def _norm_oracle(state, p):
    """Straight loop over jobs and streams."""
    z = state.z
    L = R = 0.0
    for j in state.jobs:
        m_ring, _ = p.coefficients(j.stream, j.selection, j.queue)
        L += m_ring * min(j.w + p.eps2, p.L2) * p.psi_Z(z[j.queue])
        R += m_ring * p.psi_W(j.w)
    A = 0.0
    for k in range(state.K):
        c = sum(p.arrival_weight[k, n] * p.psi_Z(z[n]) for n in range(state.N))
        A += (1 + p.eps1 / 2) * c * p.psi_A(state.s[k])
    return L + R + A


@pytest.mark.parametrize("which", ["class", "station"])
def test_norm_matches_loop_oracle(which, params, station_params):
    p = params if which == "class" else station_params
    rng = np.random.default_rng(4)
    for _ in range(50):
        x = random_state(p.spec, rng, "ps")
        assert norm_total(x, p) == pytest.approx(_norm_oracle(x, p), rel=1e-12)


def test_empty_state_norm(params):
    x = StateSnapshot.build(3, [], (1.0, 2.0))
    v = norm(x, params)
    assert v.L == 0.0 and v.R == 0.0
    assert v.A == pytest.approx(_norm_oracle(x, params))


def test_arrival_weights_sum_to_class_loads(params):
    # sum_n c_{k,n} = alpha_k-free routing mass: each stream's rows sum to 1 in class mode
    assert np.allclose(params.arrival_weight.sum(axis=1), 1.0)


@pytest.mark.parametrize("disc", ["fifo", "lifo", "ps"])
def test_flow_derivative_matches_finite_difference(disc, params):
    rng = np.random.default_rng(12)
    h = 1e-7
    checked = 0
    for _ in range(60):
        x = random_state(params.spec, rng, disc)
        fd = flow_derivative(x, params)
        y = advance_flow(x, params, h)
        if any(j.w <= 0 for j in y.jobs) or any(s <= 0 for s in y.s):
            continue
        num = (norm_total(y, params) - norm_total(x, params)) / h
        assert num == pytest.approx(fd.total, rel=1e-4, abs=1e-4)
        checked += 1
    assert checked > 40


def test_flow_bounds_on_random_states(params):
    rng = np.random.default_rng(2)
    for disc in ("fifo", "lifo", "ps"):
        for _ in range(200):
            fd = flow_derivative(random_state(params.spec, rng, disc, max_jobs=12), params)
            assert fd.holds_L_R and fd.holds_A and fd.holds_total


def test_exact_jump_agrees_with_monte_carlo(params):
    rng = np.random.default_rng(7)
    for _ in range(2):
        x = random_state(params.spec, rng, "fifo")
        for k in range(2):
            ex = arrival_jump_expectation(x, params, k)
            mc = arrival_jump_expectation(x, params, k, budget=8000, seed=3)
            assert ex.exact and not mc.exact
            assert abs(ex.value - mc.value) <= 5 * mc.stderr + 1e-9
            assert ex.value <= 1e-9


def test_exact_jump_needs_discrete_service():
    p = build_params(class_spec(2, 1.0, 2))
    with pytest.raises(ExactModeUnavailable):
        arrival_jump_expectation(StateSnapshot.build(2, [], (1.0,)), p, 0)


def test_local_norm_and_metric():
    x = StateSnapshot.build(2, [(0, 1, 0, (0, 1), 2.0, 1.5, 1.0), (1, 1, 0, (0, 1), 0.5, 0.25, 1.0)], (1.0,))
    assert local_norm(x, 0) >= 0
    assert metric_distance(x, x) == 0.0
    y = x.replace(s=(1.5,))
    assert metric_distance(x, y) == pytest.approx(metric_distance(y, x))
    assert metric_distance(x, y) > 0


def test_state_validation():
    with pytest.raises(InvalidState):
        StateSnapshot.build(2, [(0, 2, 0, (0,), 0.0, 1.0, 1.0)], (1.0,))
    with pytest.raises(InvalidState):
        StateSnapshot.build(2, [(0, 1, 0, (1,), 0.0, 1.0, 1.0)], (1.0,))
    with pytest.raises(InvalidState):
        StateSnapshot.build(2, [(0, 1, 0, (0,), 0.0, 1.0, 0.5)], (1.0,))


def test_proof_constants(params):
    pc = proof_constants(params)
    C2 = float(params.mu_ring.sum())
    assert pc.C2 == pytest.approx(C2)
    assert pc.C3 == pytest.approx(1 / (params.eps1 * C2))
    assert pc.C1 == pytest.approx(max(pc.C3, C2 * pc.C3 + 1))
    assert pc.gamma == check_gamma(params)


def check_gamma(params):
    from jsqlab.network import check_arrival_bound

    return check_arrival_bound(params.spec).gamma


def test_jllq_norm_pieces():
    spec = class_spec(3, 1.8, 2, assignment=JLLQ, discipline=PS)
    p = build_params(spec)
    assert psi_jllq(0.0) == 0.0
    assert psi_jllq(1.0) == pytest.approx(2 * math.log(2) - 1)
    rng = np.random.default_rng(5)
    h = 1e-7
    for _ in range(30):
        x = random_state(spec, rng, "ps")
        g = queue_loads(x, p)
        assert jllq_norm(x, p) == pytest.approx(float(np.sum((1 + g) * np.log1p(g) - g)))
        y = advance_flow(x, p, h)
        if any(j.w <= 0 for j in y.jobs):
            continue
        num = (jllq_norm(y, p) - jllq_norm(x, p)) / h
        assert num == pytest.approx(jllq_flow_derivative(x, p), rel=1e-4, abs=1e-4)
