"""
Resolved simulation scenario: validated schema documents turned into domain objects
"""
import itertools
from dataclasses import dataclass, field, replace
from typing import List, Optional, Sequence, Union

import numpy as np

from ..exceptions import ConfigError, ConsensusEstimationError
from ..schemas.config import ScenarioSpec
from ..utils.logger import get_logger
from .estimator import AssumptionConstants, GainSchedule, MeasurementModel
from .graph import DelayModel, WeightedDigraph
from .presets import get_preset
from .processes import (
    DeterministicDriver,
    IidDriver,
    JointMarkovProcess,
    JointState,
    MarkovDriver,
    NoiseModel,
    ProcessDriver,
)

logger = get_logger("scenario")


@dataclass
class Scenario:
    """Everything a replicate needs besides its seed"""
    name: str
    measurement: MeasurementModel
    states: List[JointState]
    driver_kind: str
    delay_model: DelayModel
    noise: NoiseModel
    gains: GainSchedule
    x_init: np.ndarray
    description: str = ""
    process: Optional[JointMarkovProcess] = None
    weights: Optional[np.ndarray] = None
    schedule: Optional[List[int]] = None
    cyclic: bool = True
    initial_state: int = 0
    overrides: dict = field(default_factory=dict)
    artifact_choice: bool = False

    @property
    def N(self) -> int:
        return self.measurement.N

    @property
    def n(self) -> int:
        return self.measurement.n

    @property
    def d(self) -> int:
        return self.delay_model.d

    def make_driver(self, rng: Optional[np.random.Generator]) -> ProcessDriver:
        if self.driver_kind == "markov":
            return MarkovDriver(self.process, rng, initial_state=self.initial_state)
        if self.driver_kind == "iid":
            return IidDriver(self.states, self.weights, rng)
        return DeterministicDriver(self.states, self.schedule, cyclic=self.cyclic)

    def as_markov(self) -> Optional[JointMarkovProcess]:
        """Transition structure for analytic conditioning; i.i.d. switching has identical rows"""
        if self.driver_kind == "markov":
            return self.process
        if self.driver_kind == "iid":
            return JointMarkovProcess(self.states, np.tile(self.weights, (len(self.states), 1)))
        if len(set(self.schedule)) == 1:
            return JointMarkovProcess.single_state(self.states[self.schedule[0]])
        return None

    def without_delays(self) -> "Scenario":
        """Same scenario with every delay forced to zero; history depth is kept"""
        return replace(self, delay_model=DelayModel.none(self.N, self.d))

    def constants(self, horizon: int) -> AssumptionConstants:
        derived = AssumptionConstants.from_scenario(
            self.states, self.noise, self.gains, self.d, horizon,
            kappa=self.overrides.get("kappa"), C_a=self.overrides.get("C_a"),
        )
        extra = {k: v for k, v in self.overrides.items() if k in ("beta_a", "beta_H", "beta_v") and v is not None}
        return replace(derived, **extra) if extra else derived


def _joint_state(H: Sequence, adjacency: Sequence) -> JointState:
    return JointState(tuple(np.asarray(block, dtype=float) for block in H),
                      WeightedDigraph(np.asarray(adjacency, dtype=float)))


def expand_sensing_failure(states: List[JointState], failure: Sequence[float]):
    """
    Product states (l, s) where s marks the nodes whose observation failed.
    Returns the expanded states (pattern index varying fastest) and the
    probability of each kept failure pattern.
    """
    failure = np.asarray(failure, dtype=float)
    N = states[0].N
    if failure.shape != (N,):
        raise ConfigError(f"sensing_failure needs one probability per node ({N}), got {failure.size}")
    patterns = [np.array(p, dtype=bool) for p in itertools.product((False, True), repeat=N)]
    pattern_prob = np.array([np.prod(np.where(p, failure, 1.0 - failure)) for p in patterns])
    keep = [idx for idx, prob in enumerate(pattern_prob) if prob > 0.0]

    expanded = []
    for state in states:
        for idx in keep:
            blocks = tuple(np.zeros_like(H) if patterns[idx][i] else H for i, H in enumerate(state.H_blocks))
            expanded.append(JointState(blocks, state.graph))
    return expanded, pattern_prob[keep]


def build_scenario(spec: ScenarioSpec) -> Scenario:
    """Validate dimensions across the pieces of an inline scenario"""
    try:
        states = [_joint_state(s.H, s.adjacency) for s in spec.states]
        signature = states[0].shape_signature()
        if any(s.shape_signature() != signature for s in states):
            raise ConfigError("All states must share N, n and the node dimensions")
        N, n = states[0].N, states[0].n
        measurement = MeasurementModel(np.asarray(spec.x0, dtype=float), tuple(states[0].node_dims))
        if measurement.n != n:
            raise ConfigError(f"x0 has length {measurement.n} but observation matrices have n={n}")

        process_spec = spec.process
        kind = process_spec.kind
        P = np.asarray(process_spec.P, dtype=float) if process_spec.P is not None else None
        weights = np.asarray(process_spec.weights, dtype=float) if process_spec.weights is not None else None
        initial_state = process_spec.initial_state

        if spec.sensing_failure is not None:
            if kind == "deterministic":
                raise ConfigError("sensing_failure needs a markov or iid process")
            base = len(states)
            states, pattern_prob = expand_sensing_failure(states, spec.sensing_failure)
            per = pattern_prob.size
            if kind == "markov":
                if P.shape != (base, base):
                    raise ConfigError(f"P must be {base}x{base}")
                P = np.kron(P, np.tile(pattern_prob, (per, 1)))
                initial_state = initial_state * per
            else:
                weights = np.kron(weights / weights.sum(), pattern_prob)
            logger.info(f"Sensing failure expanded {base} states to {len(states)}")

        process = JointMarkovProcess(states, P) if kind == "markov" else None
        if kind == "iid" and weights.shape != (len(states),):
            raise ConfigError(f"iid weights must have one entry per state ({len(states)})")

        d = spec.delays.d
        if spec.delays.kind == "none":
            delay_model = DelayModel.none(N, d)
        elif spec.delays.kind == "uniform":
            delay_model = DelayModel.uniform(N, d)
        else:
            delay_model = DelayModel(N, d, np.asarray(spec.delays.probabilities, dtype=float))

        noise = NoiseModel(tuple(states[0].node_dims), spec.noise.distribution,
                           tuple(np.atleast_1d(np.asarray(spec.noise.scale, dtype=float))))
        gains = GainSchedule.power_law(spec.gains.tau1, spec.gains.tau2,
                                       spec.gains.a_scale, spec.gains.b_scale, spec.gains.shift)

        if spec.initial_estimates is None:
            x_init = np.zeros(N * n)
        else:
            if len(spec.initial_estimates) != N or any(len(x) != n for x in spec.initial_estimates):
                raise ConfigError(f"initial_estimates must be {N} vectors of length {n}")
            x_init = np.concatenate([np.asarray(x, dtype=float) for x in spec.initial_estimates])

        return Scenario(
            name=spec.name,
            description=spec.description,
            measurement=measurement,
            states=states,
            driver_kind=kind,
            process=process,
            weights=weights,
            schedule=process_spec.schedule,
            cyclic=process_spec.cyclic,
            initial_state=initial_state,
            delay_model=delay_model,
            noise=noise,
            gains=gains,
            x_init=x_init,
            overrides=spec.constants.model_dump(exclude_none=True),
            artifact_choice=spec.artifact_choice,
        )
    except ConfigError:
        raise
    except ConsensusEstimationError as e:
        raise ConfigError(f"Scenario '{spec.name}' is inconsistent: {e}") from e


def resolve_scenario(scenario: Union[str, ScenarioSpec]) -> ScenarioSpec:
    """Preset name or inline document to a ScenarioSpec"""
    if isinstance(scenario, ScenarioSpec):
        return scenario
    return get_preset(scenario)
