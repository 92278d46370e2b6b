import math

import numpy as np
import pytest

from src.exceptions import HistoryUnderflowError, InvalidInputError
from src.services.estimator import (
    AssumptionConstants,
    GainSchedule,
    MeasurementModel,
    NetworkState,
    a3c_bound,
    a3c_envelope,
    certifying_kappa,
    check_gain_assumptions,
    compact_step,
    error_step,
    measure,
    network_step,
    node_update,
)
from src.services.graph import DelayRealization
from src.services.presets import appendix_d_blocks
from src.services.processes import rng_stream, sample_delays, sample_noise
from src.tests.conftest import random_scenario


def test_power_law_gains():
    s = GainSchedule.power_law(0.8, 0.6, a_scale=2.0, b_scale=0.5, shift=3.0)
    assert s.a(0) == pytest.approx(2.0 / 4 ** 0.8)
    assert s.b(6) == pytest.approx(0.5 / 10 ** 0.6)
    assert s.ratio(0) == pytest.approx(s.b(0) / s.a(0))
    assert s.ratio_bound(100) == 4.0
    with pytest.raises(InvalidInputError):
        GainSchedule.power_law(0.6, 0.8)
    with pytest.raises(InvalidInputError):
        GainSchedule.power_law(1.0, 0.5)


def test_custom_gains_must_stay_positive():
    s = GainSchedule.custom(lambda k: 1.0 - k, lambda k: 1.0)
    assert s.a(0) == 1.0
    with pytest.raises(InvalidInputError):
        s.a(1)
    assert s.ratio_bound(1) == 1.0


def test_a3c_bound_without_delays_is_the_kappa_limit():
    N, beta_a, beta_H, C_a = 3, 0.8, 2.0, 1.5
    bound = a3c_bound(N, beta_a, beta_H, C_a, 0)
    expected = 1.0 / (2.0 * (N * beta_a + N * math.sqrt(N) * beta_a + C_a * beta_H ** 2))
    assert bound.bound == pytest.approx(expected, rel=1e-15)
    assert bound.kappa_star > 1.0 - 1e-9


def test_a3c_bound_with_delays_is_the_envelope_maximum():
    N, beta_a, beta_H, C_a = 3, 0.8, 2.0, 1.5
    previous = a3c_bound(N, beta_a, beta_H, C_a, 0).bound
    for d in range(1, 5):
        result = a3c_bound(N, beta_a, beta_H, C_a, d)
        assert 0.0 < result.kappa_star < 1.0
        assert a3c_envelope(result.kappa_star, N, beta_a, beta_H, C_a, d) == pytest.approx(result.bound, rel=1e-12)
        grid = np.linspace(1e-4, 1 - 1e-6, 4000)
        assert max(a3c_envelope(k, N, beta_a, beta_H, C_a, d) for k in grid) <= result.bound * (1 + 1e-9)
        assert result.bound <= previous
        previous = result.bound


def test_a3c_bound_rejects_bad_constants():
    with pytest.raises(InvalidInputError):
        a3c_bound(2, 1.0, 1.0, 0.0, 1)
    with pytest.raises(InvalidInputError):
        a3c_bound(0, 1.0, 1.0, 1.0, 1)


def test_certifying_kappa_meets_the_gain():
    N, beta_a, beta_H, C_a, d = 2, 1.0, 1.0, 1.0, 2
    bound = a3c_bound(N, beta_a, beta_H, C_a, d)
    b_sup = 0.5 * bound.bound
    kappa = certifying_kappa(b_sup, N, beta_a, beta_H, C_a, d)
    assert 0.0 < kappa < bound.kappa_star
    assert a3c_envelope(kappa, N, beta_a, beta_H, C_a, d) == pytest.approx(b_sup, rel=1e-8)
    assert certifying_kappa(2.0 * bound.bound, N, beta_a, beta_H, C_a, d) == bound.kappa_star


def test_gain_assumption_report():
    N, beta_a, beta_H, d = 3, 1.0, 1.5, 2
    bound = a3c_bound(N, beta_a, beta_H, 1.0, d).bound
    constants = AssumptionConstants(N, beta_a, beta_H, 0.01, 1.0, 0.5, d)

    below = GainSchedule.power_law(0.8, 0.6, a_scale=0.9 * bound, b_scale=0.9 * bound)
    report = check_gain_assumptions(below, constants, 5000)
    assert report.a3c
    assert report.monotone and report.vanishing and report.ratio_decreasing
    assert report.partial_sums_growing
    assert report.a3a_analytic and report.a3b_analytic
    assert report.a3c_bound == pytest.approx(bound)
    assert report.b_sup == pytest.approx(0.9 * bound)

    above = GainSchedule.power_law(0.8, 0.6, a_scale=1.1 * bound, b_scale=1.1 * bound)
    assert not check_gain_assumptions(above, constants, 5000).a3c

    # a(k) <= C_a b(k) fails once a_scale exceeds C_a b_scale
    lopsided = GainSchedule.power_law(0.8, 0.6, a_scale=0.5 * bound, b_scale=0.1 * bound)
    lopsided_report = check_gain_assumptions(lopsided, constants, 5000)
    assert not lopsided_report.C_a_holds
    assert not lopsided_report.a3c

    with pytest.raises(InvalidInputError):
        check_gain_assumptions(below, constants, 1)


def test_assumption_constants_from_scenario(rng):
    scenario = random_scenario(rng, 3, 2, 1)
    c = scenario.constants(1000)
    assert c.beta_a == pytest.approx(max(np.max(np.abs(s.graph.A)) for s in scenario.states))
    assert c.beta_H == pytest.approx(max(np.linalg.norm(H, 2) for s in scenario.states for H in s.H_blocks))
    assert c.beta_v == pytest.approx(scenario.noise.beta_v)
    assert c.C_a == pytest.approx(1.0)
    assert 0.0 < c.kappa < 1.0
    with pytest.raises(InvalidInputError):
        AssumptionConstants(2, 1.0, 1.0, 1.0, 1.0, 1.0, 0)


def test_measure_validates_shapes():
    m = MeasurementModel(np.array([1.0, 2.0]), (1, 2))
    H = np.array([[1.0, 0.0], [0.0, 1.0], [1.0, 1.0]])
    assert np.allclose(measure(m, H, np.zeros(3)), [1.0, 2.0, 3.0])
    with pytest.raises(InvalidInputError):
        measure(m, H[:2], np.zeros(2))
    with pytest.raises(InvalidInputError):
        measure(m, H, np.zeros(2))
    with pytest.raises(InvalidInputError):
        MeasurementModel(np.array([1.0]), (2,))


def test_network_state_history():
    state = NetworkState(np.array([1.0, 2.0]), 2, 1, 2)
    assert state.read(1, 2)[0] == 2.0
    state.push(np.array([3.0, 4.0]))
    assert state.read(0, 0)[0] == 3.0
    assert state.read(0, 1)[0] == 1.0
    with pytest.raises(HistoryUnderflowError):
        state.read(0, 3)
    with pytest.raises(InvalidInputError):
        NetworkState(np.zeros(3), 2, 1, 0)


def test_node_update_scalar():
    state = NetworkState(np.array([0.0, 4.0]), 2, 1, 1)
    state.push(np.array([1.0, 2.0]))
    H = np.array([[1.0]])
    # node 0 reads node 1 one step late: x_1(k-1) = 4
    x_next = node_update(state, 0, H, np.array([3.0]), np.array([0.0, 0.5]), np.array([0, 1]), 0.1, 0.2)
    assert x_next[0] == pytest.approx(1.0 + 0.1 * (3.0 - 1.0) + 0.2 * 0.5 * (4.0 - 1.0))


def test_network_step_rejects_deep_delays(remark5_state):
    state = NetworkState(np.zeros(2), 2, 1, 0)
    lam = np.array([[0, 1], [0, 0]])
    with pytest.raises(HistoryUnderflowError):
        network_step(state, remark5_state, DelayRealization(lam, 1), np.zeros(2), 0.1, 0.1)


def _check_form_equivalence(rng, instances: int, horizon: int) -> None:
    for idx in range(instances):
        N, n, d = int(rng.integers(2, 5)), int(rng.integers(1, 4)), int(rng.integers(0, 4))
        scenario = random_scenario(rng, N, n, d)
        driver = scenario.make_driver(rng_stream(idx, 0, "graph"))
        delay_rng, noise_rng = rng_stream(idx, 0, "delay"), rng_stream(idx, 0, "noise")
        truth = scenario.measurement.stacked_truth()
        state = NetworkState(scenario.x_init, N, n, d)
        e_hist = [state.x - truth] * (d + 1)
        for k in range(horizon):
            joint = driver.next_state(k)
            delays = sample_delays(scenario.delay_model, delay_rng, k)
            v = sample_noise(scenario.noise, noise_rng)
            z = measure(scenario.measurement, joint.observation_matrix, v)
            a, b = scenario.gains.a(k), scenario.gains.b(k)

            stacked = compact_step(state.stacked_history(), joint, delays, z, a, b)
            network_step(state, joint, delays, z, a, b)
            assert np.max(np.abs(stacked - state.x)) <= 1e-12 * max(1.0, np.max(np.abs(state.x)))

            e_next = error_step(e_hist, joint, delays, v, a, b)
            e_hist = [e_next] + e_hist[:d]
            assert np.max(np.abs(e_next - (state.x - truth))) <= 1e-10


def test_form_equivalence(rng):
    _check_form_equivalence(rng, 10, 200)


@pytest.mark.slow
def test_form_equivalence_full(rng):
    _check_form_equivalence(rng, 100, 1000)


def test_first_step_on_the_two_node_example(remark5_state):
    state = NetworkState(np.array([1.0, 0.0]), 2, 1, 0)
    z = np.zeros(2)
    A = remark5_state.graph.A
    lam = np.zeros((2, 2), dtype=np.int64)
    x1 = node_update(state, 0, remark5_state.H_blocks[0], z[:1], A[0], lam[:, 0], 0.1, 0.1)
    x2 = node_update(state, 1, remark5_state.H_blocks[1], z[1:], A[1], lam[:, 1], 0.1, 0.1)
    assert x1[0] == pytest.approx(0.9, abs=1e-15)
    assert x2[0] == pytest.approx(0.03, abs=1e-15)

    network_step(state, remark5_state, DelayRealization.zeros(2, 0), z, 0.1, 0.1, cross_check=True)
    assert np.allclose(state.x, [0.9, 0.03], atol=1e-15)


def test_measure_reads_the_first_observation_column():
    H1 = np.array(appendix_d_blocks()[0])
    x0 = np.zeros(13)
    x0[0] = 1.0
    z = measure(MeasurementModel(x0, (5,)), H1, np.zeros(5))
    assert np.array_equal(z, [-1.0, 0.0, 1.0, -1.0, -1.0])
