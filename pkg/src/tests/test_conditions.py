import numpy as np
import pytest

from src.exceptions import InvalidInputError, UnreliableEstimateError
from src.services.conditions import (
    check_b2,
    corollary1_check,
    delta_mh_mc,
    enumerate_window,
    ergodic_limit,
    exhaustive_estimate,
    freeze_prefix,
    infimum_scan,
    lambda_mh_markov,
    lambda_mh_mc,
    lambda_mh_prime_mc,
    lambda_profile_markov,
    norm_lemma_holds,
    resolve_method,
    sample_window_statistics,
)
from src.schemas.reports import ConditionReport, WindowEstimate
from src.services.estimator import GainSchedule, MeasurementModel
from src.services.graph import DelayModel, WeightedDigraph
from src.services.presets import appendix_d, remark5
from src.services.processes import JointMarkovProcess, JointState, NoiseModel
from src.services.scenario import Scenario, build_scenario
from src.tests.conftest import gains_below_bound, random_scenario

REMARK5_LAMBDA = (2.3 - np.sqrt(1.78)) / 2.0


def _small_delayed_scenario(d: int = 1) -> Scenario:
    """Two-state chain over N=2 scalar nodes with links both ways"""
    states = [
        JointState((np.array([[1.0]]), np.array([[0.0]])), WeightedDigraph(np.array([[0.0, 1.0], [0.6, 0.0]]))),
        JointState((np.array([[0.0]]), np.array([[1.0]])), WeightedDigraph(np.array([[0.0, 0.4], [1.0, 0.0]]))),
    ]
    return Scenario(
        name="small-delayed",
        measurement=MeasurementModel(np.array([1.0]), (1, 1)),
        states=states,
        driver_kind="markov",
        delay_model=DelayModel.uniform(2, d),
        noise=NoiseModel((1, 1), "gaussian", 0.1),
        gains=gains_below_bound(states, d, fraction=0.8),
        x_init=np.zeros(2),
        process=JointMarkovProcess(states, np.array([[0.3, 0.7], [0.6, 0.4]])),
    )


def test_remark5_lambda_for_every_window():
    scenario = build_scenario(remark5())
    report = infimum_scan(scenario, "lambda", h=1, m_max=50)
    assert report.method == "analytic_markov"
    assert len(report.values) == 51
    assert np.allclose(report.values, 0.4829, atol=1e-4)
    assert report.theta_hat == pytest.approx(REMARK5_LAMBDA, abs=1e-12)
    assert report.verdict


def test_remark5_b2_constant():
    scenario = build_scenario(remark5())
    report = check_b2(scenario.as_markov())
    assert report.rho0 == pytest.approx(np.sqrt(1.09) * np.sqrt(2.0) + 1.0)
    assert check_b2(scenario.states).rho0 == report.rho0


def test_remark5_stationary_graph_is_not_balanced():
    report = corollary1_check(build_scenario(remark5()).as_markov())
    assert report.spanning_tree
    assert not report.balanced
    assert not report.verdict


def test_appendix_d_corollary_checks():
    scenario = build_scenario(appendix_d())
    report = corollary1_check(scenario.as_markov())
    assert report.stationary_nonneg and report.balanced and report.spanning_tree
    assert report.joint_obs_lambda > 1e-10
    assert report.verdict
    assert report.pi == pytest.approx([0.5, 0.5])

    H = scenario.states[0].observation_matrix
    assert np.linalg.eigvalsh(H.T @ H)[0] > 1e-10
    for block in scenario.states[0].H_blocks:
        assert np.linalg.eigvalsh(block.T @ block)[0] == pytest.approx(0.0, abs=1e-10)


def test_worst_state_profile(fast_two_state_scenario):
    chain = fast_two_state_scenario.as_markov()
    gains = fast_two_state_scenario.gains
    profile = lambda_profile_markov(chain, gains, h=1, m_max=3)
    for estimate in profile[1:]:
        per_state = [lambda_mh_markov(chain, gains, 1, estimate.m, s) for s in range(2)]
        assert estimate.value == pytest.approx(min(per_state))
    assert profile[0].value == pytest.approx(lambda_mh_markov(chain, gains, 1, 0, 0))


def test_ergodic_averaging():
    base = _small_delayed_scenario(0)
    states = base.states
    chain = JointMarkovProcess(states, np.array([[0.5, 0.5], [0.4, 0.6]]))
    gains = GainSchedule.power_law(0.7, 0.7)
    h = 200
    limit = ergodic_limit(chain)
    assert limit > 0.0
    for m in (0, 1, 3):
        value = lambda_mh_markov(chain, gains, h, m, 0) / h
        assert value == pytest.approx(limit, rel=0.05)


def _check_degeneration(rng, scenarios: int, samples: int) -> None:
    for idx in range(scenarios):
        scenario = random_scenario(rng, int(rng.integers(2, 4)), int(rng.integers(1, 3)), int(rng.integers(0, 3)))
        scenario = scenario.without_delays()
        lam = infimum_scan(scenario, "lambda", h=2, m_max=2, method="monte_carlo", samples=samples, master_seed=idx)
        prime = infimum_scan(scenario, "lambda_prime", h=2, m_max=2, method="monte_carlo",
                             samples=samples, master_seed=idx)
        delta = infimum_scan(scenario, "delta", h=2, m_max=2, method="monte_carlo", samples=samples, master_seed=idx)
        for v, vp, s, sp in zip(lam.values, prime.values, lam.stderr, prime.stderr):
            assert abs(vp - 2.0 * v) <= 3.0 * np.hypot(sp, 2.0 * s) + 1e-12 * abs(vp)
        assert all(value == 0.0 for value in delta.values)
        assert delta.verdict is None


def test_delay_free_degeneration(rng):
    _check_degeneration(rng, 3, 300)


@pytest.mark.slow
def test_delay_free_degeneration_full(rng):
    _check_degeneration(rng, 10, 10_000)


@pytest.mark.parametrize("h", [1, 3])
def test_monte_carlo_matches_enumeration(h):
    scenario = _small_delayed_scenario(1)
    prefix = freeze_prefix(scenario, master_seed=5, replicate=0, m=1, h=h)
    exact_prime = exhaustive_estimate(scenario, prefix, "lambda_prime").value
    exact_delta = exhaustive_estimate(scenario, prefix, "delta").value

    prime = lambda_mh_prime_mc(scenario, prefix, 4000)
    delta = delta_mh_mc(scenario, prefix, 4000)
    assert abs(prime.value - exact_prime) <= 3.0 * prime.stderr + 1e-2 * abs(exact_prime)
    assert abs(delta.value - exact_delta) <= 3.0 * delta.stderr + 1e-2 * abs(exact_delta)


def test_enumerated_windows_keep_the_prime_relation():
    scenario = _small_delayed_scenario(1)
    for m in range(3):
        prefix = freeze_prefix(scenario, master_seed=1, replicate=0, m=m, h=2)
        means = enumerate_window(scenario, prefix)
        lam = np.linalg.eigvalsh((means.lam + means.lam.T) / 2)[0]
        prime = np.linalg.eigvalsh((means.prime + means.prime.T) / 2)[0]
        delta = exhaustive_estimate(scenario, prefix, "delta").value
        assert prime >= 2.0 * (lam - delta) - 1e-12


def test_monte_carlo_lambda_matches_analytic_for_markov(fast_two_state_scenario):
    chain = fast_two_state_scenario.as_markov()
    prefix = freeze_prefix(fast_two_state_scenario, master_seed=3, replicate=0, m=2, h=2)
    estimate = lambda_mh_mc(fast_two_state_scenario, prefix, 3000)
    exact = lambda_mh_markov(chain, fast_two_state_scenario.gains, 2, 2, prefix.driver.current)
    assert abs(estimate.value - exact) <= 3.0 * estimate.stderr + 1e-2 * abs(exact)


def test_monte_carlo_scan_report():
    scenario = _small_delayed_scenario(1)
    report = infimum_scan(scenario, "lambda_minus_delta", h=2, m_max=3, method="monte_carlo", samples=200)
    assert report.method == "monte_carlo"
    assert report.samples == 200
    assert report.m_range == [0, 3]
    assert len(report.values) == len(report.stderr) == 4
    assert report.theta_hat == min(report.values)


def test_method_resolution(fast_two_state_scenario):
    assert resolve_method(fast_two_state_scenario, "lambda", "auto") == "analytic_markov"
    assert resolve_method(fast_two_state_scenario, "delta", "auto") == "monte_carlo"
    with pytest.raises(InvalidInputError):
        resolve_method(fast_two_state_scenario, "delta", "analytic_markov")
    with pytest.raises(InvalidInputError):
        resolve_method(fast_two_state_scenario, "gamma", "auto")
    with pytest.raises(InvalidInputError):
        infimum_scan(fast_two_state_scenario, "lambda", h=1, m_max=0)


def test_singular_windows_make_the_estimate_unreliable():
    lone = JointState((np.array([[1.0]]),), WeightedDigraph.empty(1))
    scenario = Scenario(
        name="singular",
        measurement=MeasurementModel(np.array([1.0]), (1,)),
        states=[lone],
        driver_kind="deterministic",
        schedule=[0],
        delay_model=DelayModel.none(1, 0),
        noise=NoiseModel((1,), "zero"),
        gains=GainSchedule.custom(lambda k: 1.0, lambda k: 0.5),
        x_init=np.zeros(1),
    )
    prefix = freeze_prefix(scenario, master_seed=0, replicate=0, m=0, h=1)
    with pytest.raises(UnreliableEstimateError):
        sample_window_statistics(scenario, prefix, 100)


def _check_norm_lemma(rng, ensembles: int) -> None:
    for _ in range(ensembles):
        S, m, n = int(rng.integers(1, 40)), int(rng.integers(1, 6)), int(rng.integers(1, 6))
        samples = rng.normal(size=(S, m, n)) * rng.exponential(size=(S, 1, 1))
        assert norm_lemma_holds(samples)


def test_norm_lemma(rng):
    _check_norm_lemma(rng, 1000)


def test_norm_lemma_rejects_flat_input():
    with pytest.raises(InvalidInputError):
        norm_lemma_holds(np.zeros((3, 3)))


def test_delta_profiles_carry_no_positivity_verdict():
    estimates = [WindowEstimate(m=m, value=v, stderr=0.01) for m, v in enumerate([0.0, 0.2, 0.1])]
    delta = ConditionReport.from_profile("delta", "monte_carlo", 2, estimates)
    assert delta.verdict is None
    assert delta.theta_hat == 0.0
    assert delta.guard == pytest.approx(0.03)
    gap = ConditionReport.from_profile("lambda_minus_delta", "monte_carlo", 2, estimates)
    assert gap.verdict is False
