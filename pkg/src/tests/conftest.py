from typing import List, Optional, Sequence

import numpy as np
import pytest

from src.services.estimator import GainSchedule, MeasurementModel, a3c_bound
from src.services.graph import DelayModel, WeightedDigraph
from src.services.processes import JointMarkovProcess, JointState, NoiseModel
from src.services.scenario import Scenario


def random_adjacency(rng: np.random.Generator, N: int, density: float = 0.6,
                     low: float = 0.2, high: float = 1.0) -> np.ndarray:
    A = rng.uniform(low, high, (N, N)) * (rng.random((N, N)) < density)
    np.fill_diagonal(A, 0.0)
    return A


def random_state(rng: np.random.Generator, node_dims: Sequence[int], n: int,
                 density: float = 0.6) -> JointState:
    N = len(node_dims)
    blocks = tuple(rng.normal(size=(m, n)) for m in node_dims)
    return JointState(blocks, WeightedDigraph(random_adjacency(rng, N, density)))


def gains_below_bound(states: Sequence[JointState], d: int, fraction: float = 0.9,
                      tau: float = 0.6) -> GainSchedule:
    """Equal-scale power-law gains at `fraction` of the gain-size bound (C_a = 1)"""
    beta_a = max(float(np.max(np.abs(s.graph.A))) for s in states)
    beta_H = max(float(np.linalg.norm(H, 2)) for s in states for H in s.H_blocks)
    bound = a3c_bound(states[0].N, beta_a, beta_H, 1.0, d).bound
    return GainSchedule.power_law(tau, tau, a_scale=fraction * bound, b_scale=fraction * bound)


def random_scenario(rng: np.random.Generator, N: int, n: int, d: int, n_states: int = 2,
                    gains: Optional[GainSchedule] = None, noise_scale: float = 0.1,
                    delay_model: Optional[DelayModel] = None, name: str = "random") -> Scenario:
    node_dims = [int(rng.integers(1, n + 1)) for _ in range(N)]
    states: List[JointState] = [random_state(rng, node_dims, n) for _ in range(n_states)]
    P = rng.uniform(0.2, 1.0, (n_states, n_states))
    P /= P.sum(axis=1, keepdims=True)
    gains = gains or gains_below_bound(states, d)
    return Scenario(
        name=name,
        measurement=MeasurementModel(rng.normal(size=n), tuple(node_dims)),
        states=states,
        driver_kind="markov",
        delay_model=delay_model or (DelayModel.uniform(N, d) if d > 0 else DelayModel.none(N, 0)),
        noise=NoiseModel(tuple(node_dims), "gaussian", noise_scale),
        gains=gains,
        x_init=rng.normal(size=N * n),
        process=JointMarkovProcess(states, P),
    )


@pytest.fixture
def rng() -> np.random.Generator:
    return np.random.default_rng(12345)


@pytest.fixture
def remark5_state() -> JointState:
    return JointState(
        (np.array([[0.0]]), np.array([[1.0]])),
        WeightedDigraph(np.array([[0.0, 1.0], [0.3, 0.0]])),
    )


@pytest.fixture
def cycle4() -> WeightedDigraph:
    A = np.zeros((4, 4))
    for j in range(4):
        A[(j + 1) % 4, j] = 1.0
    return WeightedDigraph(A)


@pytest.fixture
def fast_two_state_scenario(rng) -> Scenario:
    """Two scalar-node states under a well-mixing chain, delay-free"""
    states = [
        JointState((np.array([[1.0]]), np.array([[0.0]])), WeightedDigraph(np.array([[0.0, 1.0], [1.0, 0.0]]))),
        JointState((np.array([[0.0]]), np.array([[1.0]])), WeightedDigraph(np.array([[0.0, 0.5], [0.0, 0.0]]))),
    ]
    P = np.array([[0.5, 0.5], [0.4, 0.6]])
    return Scenario(
        name="two-state",
        measurement=MeasurementModel(np.array([1.5]), (1, 1)),
        states=states,
        driver_kind="markov",
        delay_model=DelayModel.none(2, 0),
        noise=NoiseModel((1, 1), "gaussian", 0.1),
        gains=GainSchedule.power_law(0.8, 0.6, a_scale=0.2, b_scale=0.2, shift=5.0),
        x_init=np.zeros(2),
        process=JointMarkovProcess(states, P),
    )
