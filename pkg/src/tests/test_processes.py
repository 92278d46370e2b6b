import numpy as np
import pytest

from src.exceptions import InvalidInputError, NonUniqueStationaryError
from src.services.graph import DelayModel, WeightedDigraph
from src.services.processes import (
    ENVELOPE_FLOOR,
    DeterministicDriver,
    IidDriver,
    JointMarkovProcess,
    JointState,
    MarkovDriver,
    NoiseModel,
    ergodicity_diagnostic,
    rng_stream,
    sample_delays,
    sample_noise,
    stationary_distribution,
)


def _scalar_states(count: int):
    return [
        JointState((np.array([[float(i)]]), np.array([[1.0]])), WeightedDigraph(np.array([[0.0, 1.0], [1.0, 0.0]])))
        for i in range(count)
    ]


def test_rng_streams_are_reproducible_and_distinct():
    a = rng_stream(42, 3, "graph").random(5)
    b = rng_stream(42, 3, "graph").random(5)
    assert np.array_equal(a, b)
    assert not np.array_equal(a, rng_stream(42, 3, "noise").random(5))
    assert not np.array_equal(a, rng_stream(42, 4, "graph").random(5))
    assert not np.array_equal(a, rng_stream(43, 3, "graph").random(5))
    with pytest.raises(InvalidInputError):
        rng_stream(42, 0, "weather")


def test_stationary_distribution():
    pi = stationary_distribution(np.array([[0.9, 0.1], [0.5, 0.5]]))
    assert np.allclose(pi, [5 / 6, 1 / 6], atol=1e-12)


def test_stationary_distribution_rejects_reducible_and_non_stochastic():
    with pytest.raises(NonUniqueStationaryError):
        stationary_distribution(np.eye(2))
    with pytest.raises(InvalidInputError):
        stationary_distribution(np.array([[0.5, 0.6], [0.5, 0.5]]))
    with pytest.raises(InvalidInputError):
        stationary_distribution(np.array([[1.2, -0.2], [0.5, 0.5]]))


def test_ergodicity_envelope_matches_second_eigenvalue():
    P = np.array([[0.9, 0.1], [0.2, 0.8]])
    diag = ergodicity_diagnostic(P, 400)
    assert diag.converged
    # second eigenvalue 0.7, so D_n decays like 0.7^n
    assert diag.r == pytest.approx(1 / 0.7, rel=1e-3)
    n = np.arange(1, diag.steps_used + 1)
    assert np.all(diag.distances[:diag.steps_used] <= diag.envelope(n) * (1 + 1e-9))


def test_ergodicity_identical_rows_mix_in_one_step():
    diag = ergodicity_diagnostic(np.array([[0.3, 0.7], [0.3, 0.7]]), 10)
    assert diag.converged
    assert np.isinf(diag.r)
    assert diag.R == 0.0


def test_ergodicity_reports_slow_chains():
    diag = ergodicity_diagnostic(np.array([[0.999, 0.001], [0.001, 0.999]]), 20)
    assert not diag.converged


def test_markov_driver_frequencies_match_pi():
    states = _scalar_states(2)
    process = JointMarkovProcess(states, np.array([[0.9, 0.1], [0.5, 0.5]]))
    driver = MarkovDriver(process, np.random.default_rng(1), initial_state=0)
    visited = []
    for k in range(20_000):
        driver.next_state(k)
        visited.append(driver.current)
    visits = np.bincount(visited, minlength=2)
    assert visits[0] / visits.sum() == pytest.approx(5 / 6, abs=0.02)


def test_markov_driver_transition_row_follows_current_state():
    states = _scalar_states(2)
    process = JointMarkovProcess(states, np.array([[1.0, 0.0], [0.5, 0.5]]))
    driver = MarkovDriver(process, np.random.default_rng(0), initial_state=1)
    assert driver.transition_row(0) == {0: 0.5, 1: 0.5}
    driver.current = 0
    assert driver.transition_row(0) == {0: 1.0}


def test_deterministic_driver():
    states = _scalar_states(3)
    cyclic = DeterministicDriver(states, [0, 2, 1])
    order = []
    for k in range(6):
        assert cyclic.next_state(k) is states[cyclic.current]
        order.append(cyclic.current)
    assert order == [0, 2, 1, 0, 2, 1]

    once = DeterministicDriver(states, [1, 1], cyclic=False)
    once.next_state(1)
    with pytest.raises(InvalidInputError):
        once.next_state(2)
    with pytest.raises(InvalidInputError):
        DeterministicDriver(states, [3])


def test_iid_driver_and_fork():
    states = _scalar_states(2)
    driver = IidDriver(states, [1.0, 3.0], np.random.default_rng(5))
    assert driver.transition_row(0) == {0: 0.25, 1: 0.75}
    a = driver.fork(np.random.default_rng(9))
    b = driver.fork(np.random.default_rng(9))
    path_a = [a._advance(k) for k in range(20)]
    path_b = [b._advance(k) for k in range(20)]
    assert path_a == path_b


def test_sample_delays_advances_stream_independently_of_d():
    first, second = np.random.default_rng(3), np.random.default_rng(3)
    sample_delays(DelayModel.none(4, 0), first)
    sample_delays(DelayModel.uniform(4, 3), second)
    assert first.random() == second.random()


def test_uniform_delay_frequencies():
    rng = np.random.default_rng(8)
    model = DelayModel.uniform(3, 3)
    draws = np.array([sample_delays(model, rng).lam for _ in range(4000)])
    assert np.all(draws[:, np.arange(3), np.arange(3)] == 0)
    freq = np.bincount(draws[:, 0, 1], minlength=4) / len(draws)
    assert np.allclose(freq, 0.25, atol=0.03)


def test_delay_coupler_overrides_independent_draws():
    def all_max(model, rng, k):
        return np.full((model.N, model.N), model.d)

    model = DelayModel(3, 2, DelayModel.uniform(3, 2).probabilities, coupler=all_max)
    lam = sample_delays(model, np.random.default_rng(0)).lam
    assert np.array_equal(lam, 2 * (1 - np.eye(3, dtype=np.int64)))


def test_noise_model():
    gaussian = NoiseModel((1, 2), "gaussian", (0.5, 2.0))
    assert gaussian.beta_v == pytest.approx(0.25 + 2 * 4.0)
    uniform = NoiseModel((2,), "uniform", 0.3)
    assert uniform.beta_v == pytest.approx(2 * 0.09 / 3)
    zero = NoiseModel((3, 1), "zero")
    assert zero.beta_v == 0.0
    assert np.array_equal(sample_noise(zero, np.random.default_rng(0)), np.zeros(4))

    draws = np.array([sample_noise(uniform, np.random.default_rng(s)) for s in range(200)])
    assert np.all(np.abs(draws) <= 0.3)

    with pytest.raises(InvalidInputError):
        NoiseModel((1, 1, 1), "gaussian", (0.1, 0.2))
    with pytest.raises(InvalidInputError):
        NoiseModel((1,), "cauchy", 1.0)


def test_joint_state_validation():
    g = WeightedDigraph(np.array([[0.0, 1.0], [1.0, 0.0]]))
    with pytest.raises(InvalidInputError):
        JointState((np.ones((1, 2)),), g)
    with pytest.raises(InvalidInputError):
        JointState((np.ones((1, 2)), np.ones((1, 3))), g)
    with pytest.raises(InvalidInputError):
        JointState((np.ones((3, 2)), np.ones((1, 2))), g)

    state = JointState((np.ones((1, 2)), np.eye(2)), g)
    assert state.observation_matrix.shape == (3, 2)
    assert state.block_observation.shape == (3, 4)
    assert np.allclose(state.gramian, state.block_observation.T @ state.block_observation)


def test_identity_chain_is_driven_and_absorbing():
    process = JointMarkovProcess(_scalar_states(2), np.eye(2))
    driver = MarkovDriver(process, np.random.default_rng(4), initial_state=1)
    for k in range(50):
        assert driver.next_state(k) is process.states[1]
        assert driver.current == 1
    with pytest.raises(NonUniqueStationaryError):
        process.pi


def test_periodic_chain_never_mixes():
    P = np.array([[0.0, 1.0], [1.0, 0.0]])
    assert np.allclose(stationary_distribution(P), [0.5, 0.5])
    diag = ergodicity_diagnostic(P, 100)
    assert not diag.converged
    assert np.allclose(diag.distances, 1.0)


def test_ergodicity_envelope_covers_every_sampled_step():
    diag = ergodicity_diagnostic(np.array([[0.9, 0.1], [0.5, 0.5]]), 300)
    assert diag.converged
    assert diag.r == pytest.approx(1 / 0.4, rel=1e-3)
    n = np.arange(1, 301)
    assert np.all(diag.distances <= np.maximum(diag.envelope(n), ENVELOPE_FLOOR) * (1 + 1e-9))


def _noise_draws(model: NoiseModel, count: int, seed: int) -> np.ndarray:
    rng = np.random.default_rng(seed)
    return np.array([sample_noise(model, rng) for _ in range(count)])


def test_gaussian_noise_is_centred():
    draws = _noise_draws(NoiseModel((1, 1), "gaussian", 1.0), 100_000, 21)
    assert np.all(np.abs(draws.mean(axis=0)) <= 4 / np.sqrt(100_000))


def test_uniform_noise_variance():
    w = 0.5
    draws = _noise_draws(NoiseModel((2,), "uniform", w), 100_000, 22)
    assert np.allclose(draws.var(axis=0), w ** 2 / 3, rtol=0.05)


def test_noise_is_uncorrelated_across_steps_and_nodes():
    draws = _noise_draws(NoiseModel((1, 1), "gaussian", (1.0, 3.0)), 100_000, 23)
    for column in draws.T:
        centred = column - column.mean()
        lag1 = np.dot(centred[:-1], centred[1:]) / np.dot(centred, centred)
        assert abs(lag1) < 0.02
    assert abs(np.corrcoef(draws[:, 0], draws[:, 1])[0, 1]) < 0.02
