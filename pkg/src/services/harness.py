"""
Seeded Monte Carlo execution of the estimator and aggregation of its error metrics
"""
from collections import deque
from dataclasses import dataclass, field
from functools import partial
from typing import Any, Dict, List, Optional

import numpy as np

from ..exceptions import ConfigError, ConsistencyError, InvalidInputError, NonUniqueStationaryError
from ..schemas.config import SimConfig
from ..schemas.reports import ConditionSummary, GainAssumptionReport
from ..utils.logger import get_logger
from .conditions import check_b2, corollary1_check, infimum_scan
from .estimator import NetworkState, check_gain_assumptions, error_step, measure, network_step
from .processes import ergodicity_diagnostic, rng_stream, sample_delays, sample_noise
from .replicate_pool import ReplicatePool
from .resource_manager import ReplicateFootprint, get_resource_manager
from .scenario import Scenario, build_scenario, resolve_scenario

logger = get_logger("harness")

ERROR_RECURSION_TOL = 1e-10
ERGODICITY_HORIZON = 200
ARTIFACT_NOTE = (
    "Noise level, gains and switching process of this preset are simulator choices, "
    "not values reproduced from a published experiment"
)


@dataclass
class DrawLog:
    """Realized randomness of one replicate, step by step"""
    states: np.ndarray
    delays: np.ndarray
    noise: np.ndarray


@dataclass
class ReplicateRecord:
    replicate: int
    master_seed: int
    sq_errors: np.ndarray = field(repr=False)
    error_norms: np.ndarray = field(repr=False)
    path_max: np.ndarray = field(repr=False)
    trajectory: Optional[np.ndarray] = field(default=None, repr=False)
    draw_log: Optional[DrawLog] = field(default=None, repr=False)

    @property
    def horizon(self) -> int:
        return self.sq_errors.shape[0] - 1


def prepare_scenario(cfg: SimConfig) -> Scenario:
    scenario = build_scenario(resolve_scenario(cfg.scenario))
    return scenario if cfg.delays_enabled else scenario.without_delays()


def simulate(scenario: Scenario, horizon: int, master_seed: int, replicate: int,
             keep_trajectory: bool = False, draw_log: bool = False,
             cross_check: bool = False) -> ReplicateRecord:
    """
    Run the estimator for `horizon` steps on the streams of one replicate.

    Per step the draws happen in a fixed order: joint state from the graph
    stream, delays from the delay stream, noise from the noise stream. With
    delays disabled the delay stream still advances, so graph and noise draws
    do not depend on the delay setting.
    """
    if horizon < 0:
        raise InvalidInputError("horizon must be nonnegative")
    N, n, d = scenario.N, scenario.n, scenario.d
    driver = scenario.make_driver(rng_stream(master_seed, replicate, "graph"))
    delay_rng = rng_stream(master_seed, replicate, "delay")
    noise_rng = rng_stream(master_seed, replicate, "noise")
    truth = scenario.measurement.stacked_truth()
    gains = scenario.gains

    state = NetworkState(scenario.x_init, N, n, d)
    e_history = deque((state.error(scenario.measurement) for _ in range(d + 1)), maxlen=d + 1)

    sq_errors = np.empty((horizon + 1, N))
    trajectory = np.empty((horizon + 1, N * n)) if keep_trajectory else None
    log = DrawLog(
        states=np.empty(horizon, dtype=np.int64),
        delays=np.empty((horizon, N, N), dtype=np.int64),
        noise=np.empty((horizon, scenario.noise.size)),
    ) if draw_log else None

    def record(k: int) -> None:
        err = (state.x - truth).reshape(N, n)
        sq_errors[k] = np.einsum("ij,ij->i", err, err)
        if trajectory is not None:
            trajectory[k] = state.x

    record(0)
    for k in range(horizon):
        joint = driver.next_state(k)
        delays = sample_delays(scenario.delay_model, delay_rng, k)
        v = sample_noise(scenario.noise, noise_rng)
        z = measure(scenario.measurement, joint.observation_matrix, v)
        a, b = gains.a(k), gains.b(k)
        network_step(state, joint, delays, z, a, b, cross_check=cross_check)

        if cross_check:
            e_next = error_step(list(e_history), joint, delays, v, a, b)
            e_history.appendleft(e_next)
            residual = float(np.max(np.abs(e_next - (state.x - truth))))
            tol = ERROR_RECURSION_TOL * max(1.0, float(np.max(np.abs(e_next))))
            if residual > tol:
                raise ConsistencyError("error recursion vs x(k) - x0", residual, tol)

        if log is not None:
            log.states[k] = driver.current
            log.delays[k] = delays.lam
            log.noise[k] = v
        record(k + 1)

    return ReplicateRecord(
        replicate=replicate,
        master_seed=master_seed,
        sq_errors=sq_errors,
        error_norms=np.sqrt(sq_errors.sum(axis=1)),
        path_max=np.sqrt(sq_errors.max(axis=1)),
        trajectory=trajectory,
        draw_log=log,
    )


def run_replicate(cfg: SimConfig, replicate: int, keep_trajectory: bool = False,
                  draw_log: Optional[bool] = None) -> ReplicateRecord:
    """One replicate of the configured scenario; deterministic in (master_seed, replicate)"""
    if replicate < 0:
        raise InvalidInputError("replicate index must be nonnegative")
    scenario = prepare_scenario(cfg)
    return simulate(
        scenario,
        cfg.horizon,
        cfg.master_seed,
        replicate,
        keep_trajectory=keep_trajectory,
        draw_log=cfg.outputs.draw_log if draw_log is None else draw_log,
        cross_check=cfg.outputs.cross_check,
    )


class _RunningMoments:
    """Welford mean and variance, fed in replicate-index order"""

    def __init__(self, shape: tuple):
        self.count = 0
        self.mean = np.zeros(shape)
        self._m2 = np.zeros(shape)

    def add(self, value: np.ndarray) -> None:
        self.count += 1
        delta = value - self.mean
        self.mean += delta / self.count
        self._m2 += delta * (value - self.mean)

    def stderr(self) -> np.ndarray:
        if self.count < 2:
            return np.zeros_like(self.mean)
        return np.sqrt(self._m2 / (self.count - 1) / self.count)


@dataclass
class RunMetrics:
    """Aggregated errors of R replicates; row k of every curve is step k = 0..K"""
    scenario: str
    master_seed: int
    replicates: int
    mse: np.ndarray = field(repr=False)
    stderr: np.ndarray = field(repr=False)
    network_mse: np.ndarray = field(repr=False)
    network_stderr: np.ndarray = field(repr=False)
    gains: Optional[GainAssumptionReport] = None
    path_traces: Optional[np.ndarray] = field(default=None, repr=False)
    draw_logs: Optional[List[DrawLog]] = field(default=None, repr=False)
    conditions: Optional[ConditionSummary] = None
    artifact_choice: bool = False
    config: Dict[str, Any] = field(default_factory=dict, repr=False)

    @property
    def N(self) -> int:
        return self.mse.shape[1]

    @property
    def horizon(self) -> int:
        return self.mse.shape[0] - 1

    def final_mse(self) -> Dict[str, float]:
        if self.mse.shape[0] == 0:
            return {}
        final = {f"node_{i + 1}": float(v) for i, v in enumerate(self.mse[-1])}
        final["network"] = float(self.network_mse[-1])
        return final


def monte_carlo(cfg: SimConfig, pool: Optional[ReplicatePool] = None) -> RunMetrics:
    """
    Aggregate cfg.replicates replicates into mean-square error curves.

    Results are reduced in replicate-index order whatever the worker count.
    Condition reports are attached when cfg.outputs.condition_reports is set,
    and the CSV and JSON summary are written when cfg.sink is set.
    """
    from .format_service import get_format_service

    scenario = prepare_scenario(cfg)
    K, R = cfg.horizon, cfg.replicates
    footprint = ReplicateFootprint(K, scenario.N, scenario.n, retain_states=cfg.outputs.draw_log)
    plan = get_resource_manager().plan(R, footprint)
    pool = pool or ReplicatePool(plan.workers)
    logger.info(f"Monte Carlo on '{scenario.name}': K={K}, R={R}, master_seed={cfg.master_seed}, "
                f"delays={'on' if cfg.delays_enabled else 'off'}")

    task = partial(run_replicate, cfg, keep_trajectory=False, draw_log=plan.retain_states)
    node_moments = _RunningMoments((K + 1, scenario.N))
    network_moments = _RunningMoments((K + 1,))
    traces = np.empty((R, K + 1)) if cfg.outputs.path_traces else None
    draw_logs: Optional[List[DrawLog]] = [] if plan.retain_states else None

    for index, record in enumerate(pool.map(task, range(R), cfg.master_seed)):
        node_moments.add(record.sq_errors)
        network_moments.add(record.sq_errors.mean(axis=1))
        if traces is not None:
            traces[index] = record.path_max
        if draw_logs is not None:
            draw_logs.append(record.draw_log)

    constants = scenario.constants(max(K, 2))
    metrics = RunMetrics(
        scenario=scenario.name,
        master_seed=cfg.master_seed,
        replicates=R,
        mse=node_moments.mean,
        stderr=node_moments.stderr(),
        network_mse=network_moments.mean,
        network_stderr=network_moments.stderr(),
        gains=check_gain_assumptions(scenario.gains, constants, max(K, 2)),
        path_traces=traces,
        draw_logs=draw_logs,
        artifact_choice=scenario.artifact_choice,
        config=cfg.model_dump(mode="json"),
    )
    logger.info(f"Network MSE: k=0 {metrics.network_mse[0]:.6g}, k={K} {metrics.network_mse[-1]:.6g}")

    if cfg.outputs.condition_reports:
        metrics.conditions = check_conditions(cfg, scenario)
    if cfg.sink is not None:
        get_format_service().write_all(metrics, cfg.sink)
    return metrics


def _finite_or_none(value: float) -> Optional[float]:
    return float(value) if np.isfinite(value) else None


def check_conditions(cfg: SimConfig, scenario: Optional[Scenario] = None) -> ConditionSummary:
    """Gain assumptions, the graph and observability conditions and the configured excitation scans"""
    scenario = scenario or prepare_scenario(cfg)
    horizon = max(cfg.horizon, 2)
    constants = scenario.constants(horizon)
    gains = check_gain_assumptions(scenario.gains, constants, horizon)
    chain = scenario.as_markov()
    notes: List[str] = []
    if scenario.artifact_choice:
        notes.append(ARTIFACT_NOTE)

    corollary1 = None
    ergodicity = None
    if chain is not None:
        try:
            corollary1 = corollary1_check(chain)
        except NonUniqueStationaryError as e:
            notes.append(f"Stationary-graph check skipped: {e}")
        if chain.size > 1 and corollary1 is not None:
            diag = ergodicity_diagnostic(chain.P, ERGODICITY_HORIZON)
            ergodicity = {"converged": float(diag.converged), "R": _finite_or_none(diag.R),
                          "r": _finite_or_none(diag.r), "steps_used": float(diag.steps_used)}
    else:
        notes.append("Deterministic multi-state schedule: stationary-graph check does not apply")
    b2 = check_b2(chain if chain is not None else scenario.states)

    spec = cfg.conditions
    reports = {}
    for quantity in spec.quantities:
        try:
            reports[quantity] = infimum_scan(
                scenario, quantity, spec.h, spec.m_max, method=spec.method, samples=spec.samples,
                theta=spec.theta, master_seed=cfg.master_seed, replicate=spec.prefix_replicate,
                kappa=constants.kappa,
            )
        except InvalidInputError as e:
            raise ConfigError(f"Condition scan of {quantity} is not available: {e}") from e
    if reports:
        notes.append(f"Infima are taken over the finite scan m = 0..{spec.m_max}")
    if not gains.a3c and any(q != "lambda" for q in spec.quantities):
        notes.append("Gains exceed the gain-size bound; F(k) inverses are not certified")

    return ConditionSummary(
        scenario=scenario.name,
        gains=gains,
        b2=b2,
        corollary1=corollary1,
        reports=reports,
        ergodicity=ergodicity,
        notes=notes,
    )

