"""
Stochastic processes driving the simulation: joint <observation matrices,
adjacency> sequences, delays and noise, plus Markov-chain analytics
"""
import copy
from abc import ABC, abstractmethod
from dataclasses import dataclass
from functools import cached_property
from typing import Dict, List, Optional, Sequence, Union

import numpy as np
from scipy.linalg import block_diag, null_space

from ..exceptions import InvalidInputError, NonUniqueStationaryError
from ..utils.logger import get_logger
from .graph import (
    DelayModel,
    DelayRealization,
    WeightedDigraph,
    laplacian,
    symmetrized_laplacian,
)

logger = get_logger("processes")

STOCHASTIC_TOL = 1e-12
STATIONARY_TOL = 1e-10
MIXED_TOL = 1e-6
# Distances below this floor are treated as fully mixed when fitting the envelope
ENVELOPE_FLOOR = 1e-12

# RNG purposes; each replicate gets one independent stream per purpose
PURPOSES = {"graph": 0, "noise": 1, "delay": 2, "window": 3}


def rng_stream(master_seed: int, replicate: int, purpose: str) -> np.random.Generator:
    """Named stream for (replicate, purpose) split from the master seed"""
    if purpose not in PURPOSES:
        raise InvalidInputError(f"Unknown RNG purpose '{purpose}'. Known: {sorted(PURPOSES)}")
    seq = np.random.SeedSequence(entropy=int(master_seed) & ((1 << 64) - 1),
                                 spawn_key=(int(replicate), PURPOSES[purpose]))
    return np.random.default_rng(seq)


@dataclass(frozen=True)
class JointState:
    """One state <H_l, A_l>: per-node observation blocks H_{i,l} (n_i x n) and a graph"""
    H_blocks: tuple
    graph: WeightedDigraph

    def __post_init__(self):
        blocks = tuple(np.atleast_2d(np.asarray(H, dtype=float)) for H in self.H_blocks)
        if len(blocks) != self.graph.N:
            raise InvalidInputError(f"{len(blocks)} observation blocks for a graph with N={self.graph.N}")
        n = blocks[0].shape[1]
        for i, H in enumerate(blocks):
            if H.ndim != 2 or H.shape[1] != n:
                raise InvalidInputError(f"H_{i + 1} must have n={n} columns, got shape {H.shape}")
            if H.shape[0] > n:
                raise InvalidInputError(f"H_{i + 1} has n_i={H.shape[0]} > n={n}")
            if not np.all(np.isfinite(H)):
                raise InvalidInputError(f"H_{i + 1} has non-finite entries")
            H.setflags(write=False)
        object.__setattr__(self, "H_blocks", blocks)

    @property
    def N(self) -> int:
        return self.graph.N

    @property
    def n(self) -> int:
        return self.H_blocks[0].shape[1]

    @property
    def node_dims(self) -> List[int]:
        return [H.shape[0] for H in self.H_blocks]

    @cached_property
    def observation_matrix(self) -> np.ndarray:
        """Stacked H(k) = [H_1; ...; H_N], shape (sum n_i) x n"""
        return np.vstack(self.H_blocks)

    @cached_property
    def block_observation(self) -> np.ndarray:
        """Block-diagonal script-H(k), shape (sum n_i) x (N n)"""
        return block_diag(*self.H_blocks)

    @cached_property
    def gramian(self) -> np.ndarray:
        """script-H^T script-H, shape (N n) x (N n)"""
        return block_diag(*(H.T @ H for H in self.H_blocks))

    @cached_property
    def laplacian(self) -> np.ndarray:
        return laplacian(self.graph)

    @cached_property
    def symmetrized_laplacian(self) -> np.ndarray:
        return symmetrized_laplacian(self.laplacian)

    def shape_signature(self) -> tuple:
        return (self.N, self.n, tuple(self.node_dims))


def _check_stochastic(P: np.ndarray) -> np.ndarray:
    P = np.asarray(P, dtype=float)
    if P.ndim != 2 or P.shape[0] != P.shape[1] or P.shape[0] == 0:
        raise InvalidInputError(f"Transition matrix must be square, got shape {P.shape}")
    if np.any(P < 0.0) or not np.all(np.isfinite(P)):
        raise InvalidInputError("Transition probabilities must be finite and nonnegative")
    if np.max(np.abs(P.sum(axis=1) - 1.0)) > STOCHASTIC_TOL:
        raise InvalidInputError("Every row of the transition matrix must sum to 1")
    return P


def stationary_distribution(P: np.ndarray) -> np.ndarray:
    """Unique pi with pi P = pi, as the normalized left null vector of (P - I)"""
    P = _check_stochastic(P)
    basis = null_space((P - np.eye(P.shape[0])).T, rcond=1e-10)
    if basis.shape[1] != 1:
        raise NonUniqueStationaryError(basis.shape[1])
    pi = basis[:, 0]
    pi = pi / pi.sum()
    pi = np.clip(pi, 0.0, None)
    return pi / pi.sum()


@dataclass
class ErgodicityDiagnostic:
    """Geometric envelope D_n <= R r^-n fitted to total-variation distances"""
    converged: bool
    R: float
    r: float
    distances: np.ndarray
    steps_used: int

    def envelope(self, n: np.ndarray) -> np.ndarray:
        n = np.asarray(n, dtype=float)
        if np.isinf(self.r):
            return np.zeros_like(n)
        return self.R * self.r ** (-n)


def ergodicity_diagnostic(P: np.ndarray, horizon: int) -> ErgodicityDiagnostic:
    """
    Fit (R, r) to D_n = max_x sum_y |P^n(x,y) - pi_y|, n = 1..horizon.

    The rate is fitted on the first `steps_used` distances, the ones above
    ENVELOPE_FLOOR. Every later sampled D_n must stay below
    max(R r^-n, ENVELOPE_FLOOR), otherwise the chain is reported as not
    converged. Nothing is claimed for n > horizon.
    """
    if horizon < 1:
        raise InvalidInputError("Horizon must be positive")
    pi = stationary_distribution(P)
    P = np.asarray(P, dtype=float)

    distances = np.empty(horizon)
    Pn = np.eye(P.shape[0])
    for step in range(horizon):
        Pn = Pn @ P
        distances[step] = np.max(np.abs(Pn - pi[None, :]).sum(axis=1))

    if not np.any(distances < MIXED_TOL):
        logger.info(f"Chain not mixed within {horizon} steps (D_n = {distances[-1]:.3e})")
        return ErgodicityDiagnostic(False, float("nan"), float("nan"), distances, horizon)

    # Distances at the floating-point floor carry no rate information
    above = np.flatnonzero(distances > ENVELOPE_FLOOR)
    if above.size == 0:
        return ErgodicityDiagnostic(True, 0.0, float("inf"), distances, 0)
    used = int(above[-1]) + 1
    if np.any(distances[:used] <= ENVELOPE_FLOOR):
        used = int(np.argmax(distances <= ENVELOPE_FLOOR))
    n = np.arange(1, used + 1, dtype=float)
    log_d = np.log(distances[:used])
    if used == 1:
        r = 1.0 / distances[0] if distances[0] < 1.0 else 2.0
    else:
        slope = np.polyfit(n, log_d, 1)[0]
        r = float(np.exp(-slope))
    if r <= 1.0:
        return ErgodicityDiagnostic(False, float("nan"), r, distances, used)
    R = float(np.max(distances[:used] * r ** n))
    diag = ErgodicityDiagnostic(True, R, r, distances, used)
    tail_n = np.arange(used + 1, horizon + 1)
    bound = np.maximum(diag.envelope(tail_n), ENVELOPE_FLOOR) * (1 + 1e-9)
    if np.any(distances[used:] > bound):
        logger.warning(f"Fitted envelope R={R:.3e}, r={r:.6g} is exceeded after n={used}")
        diag.converged = False
    return diag


@dataclass
class JointMarkovProcess:
    """
    Finite-state homogeneous chain over <H_l, A_l> with transition matrix P.

    Reducible chains can be driven; `pi` is only computed when an analytic
    check asks for it and raises NonUniqueStationaryError then.
    """
    states: List[JointState]
    P: np.ndarray

    def __post_init__(self):
        if not self.states:
            raise InvalidInputError("State space must not be empty")
        self.P = _check_stochastic(self.P)
        if self.P.shape[0] != len(self.states):
            raise InvalidInputError(f"P is {self.P.shape} for {len(self.states)} states")
        signature = self.states[0].shape_signature()
        for state in self.states[1:]:
            if state.shape_signature() != signature:
                raise InvalidInputError("All states must share N, n and the node dimensions")

    @cached_property
    def pi(self) -> np.ndarray:
        pi = stationary_distribution(self.P)
        residual = np.max(np.abs(pi @ self.P - pi))
        if residual > STATIONARY_TOL:
            raise InvalidInputError(f"Stationary distribution residual {residual:.2e} too large")
        return pi

    @property
    def size(self) -> int:
        return len(self.states)

    def transition_power(self, steps: int) -> np.ndarray:
        return np.linalg.matrix_power(self.P, steps)

    def stationary_adjacency(self) -> np.ndarray:
        return sum(p * s.graph.A for p, s in zip(self.pi, self.states))

    @classmethod
    def single_state(cls, state: JointState) -> "JointMarkovProcess":
        return cls([state], np.ones((1, 1)))


class ProcessDriver(ABC):
    """Emits <H(k), A_G(k)> one step at a time"""

    kind: str = "abstract"

    def __init__(self, states: Sequence[JointState], rng: Optional[np.random.Generator] = None):
        self.states = list(states)
        self.rng = rng if rng is not None else np.random.default_rng()
        self.current: Optional[int] = None

    @abstractmethod
    def _advance(self, k: int) -> int:
        """Index of the state at step k"""

    def next_state(self, k: int) -> JointState:
        self.current = self._advance(k)
        return self.states[self.current]

    def fork(self, rng: np.random.Generator) -> "ProcessDriver":
        """Copy positioned at the same state, drawing from a new stream"""
        twin = copy.copy(self)
        twin.rng = rng
        return twin

    @abstractmethod
    def transition_row(self, k: int) -> Dict[int, float]:
        """Distribution of the state index at step k given the current one"""


class MarkovDriver(ProcessDriver):
    """
    Markov kind. `initial_state` is the state at k = -1; the first call to
    next_state samples the state at k = 0 from that row of P.
    """

    kind = "markov"

    def __init__(self, process: JointMarkovProcess, rng: Optional[np.random.Generator] = None,
                 initial_state: int = 0):
        super().__init__(process.states, rng)
        if not 0 <= initial_state < process.size:
            raise InvalidInputError(f"Initial state {initial_state} outside 0..{process.size - 1}")
        self.process = process
        self.current = initial_state

    def _advance(self, k: int) -> int:
        return int(self.rng.choice(self.process.size, p=self.process.P[self.current]))

    def transition_row(self, k: int) -> Dict[int, float]:
        row = self.process.P[self.current]
        return {int(j): float(row[j]) for j in np.flatnonzero(row)}


class IidDriver(ProcessDriver):
    kind = "iid"

    def __init__(self, states: Sequence[JointState], weights: Sequence[float],
                 rng: Optional[np.random.Generator] = None):
        super().__init__(states, rng)
        w = np.asarray(weights, dtype=float)
        if w.shape != (len(self.states),) or np.any(w < 0) or w.sum() <= 0:
            raise InvalidInputError("i.i.d. weights must be nonnegative, one per state")
        self.weights = w / w.sum()

    def _advance(self, k: int) -> int:
        return int(self.rng.choice(len(self.states), p=self.weights))

    def transition_row(self, k: int) -> Dict[int, float]:
        return {int(j): float(self.weights[j]) for j in np.flatnonzero(self.weights)}


class DeterministicDriver(ProcessDriver):
    """Schedule lookup: schedule[k] if explicit per-k, else schedule[k mod len]"""

    kind = "deterministic"

    def __init__(self, states: Sequence[JointState], schedule: Sequence[int], cyclic: bool = True):
        super().__init__(states, None)
        if len(schedule) == 0:
            raise InvalidInputError("Deterministic schedule must not be empty")
        if any(not 0 <= s < len(self.states) for s in schedule):
            raise InvalidInputError("Schedule references an unknown state")
        self.schedule = [int(s) for s in schedule]
        self.cyclic = cyclic
        self.k = -1

    def _advance(self, k: int) -> int:
        self.k = k
        return self._lookup(k)

    def _lookup(self, k: int) -> int:
        if self.cyclic:
            return self.schedule[k % len(self.schedule)]
        if k >= len(self.schedule):
            raise InvalidInputError(f"Schedule has no entry for k={k}")
        return self.schedule[k]

    def transition_row(self, k: int) -> Dict[int, float]:
        return {self._lookup(k): 1.0}


def sample_delays(model: DelayModel, rng: np.random.Generator, k: int = 0) -> DelayRealization:
    """Independent per-link draws lambda_ji ~ p_{ji,.}; lambda_ii = 0"""
    if model.coupler is not None:
        lam = np.asarray(model.coupler(model, rng, k), dtype=np.int64)
        np.fill_diagonal(lam, 0)
        return DelayRealization(lam, model.d)
    # Draw the uniforms unconditionally so the stream advances the same way for every d
    u = rng.random((model.N, model.N))
    if model.d == 0:
        return DelayRealization.zeros(model.N, 0)
    cdf = np.cumsum(model.probabilities_at(k), axis=2)
    lam = np.minimum((u[..., None] >= cdf).sum(axis=2), model.d)
    np.fill_diagonal(lam, 0)
    return DelayRealization(lam.astype(np.int64), model.d)


@dataclass(frozen=True)
class NoiseModel:
    """Independent zero-mean noise: gaussian (sigma), uniform (half-width) or zero, per node"""
    node_dims: tuple
    distribution: str = "zero"
    scale: Union[float, tuple] = ()

    def __post_init__(self):
        dims = tuple(int(m) for m in self.node_dims)
        if any(m < 1 for m in dims):
            raise InvalidInputError("Node measurement dimensions must be positive")
        if self.distribution not in ("gaussian", "uniform", "zero"):
            raise InvalidInputError(f"Unknown noise distribution '{self.distribution}'")
        scale = np.atleast_1d(np.asarray(self.scale if np.size(self.scale) else 0.0, dtype=float))
        if scale.size not in (1, len(dims)):
            raise InvalidInputError(f"Noise scale needs 1 or {len(dims)} entries, got {scale.size}")
        scale = np.broadcast_to(scale, (len(dims),))
        if np.any(scale < 0):
            raise InvalidInputError("Noise scales must be nonnegative")
        object.__setattr__(self, "node_dims", dims)
        object.__setattr__(self, "scale", tuple(float(s) for s in scale))

    @property
    def size(self) -> int:
        return sum(self.node_dims)

    def per_coordinate_scale(self) -> np.ndarray:
        return np.repeat(np.asarray(self.scale), self.node_dims)

    @property
    def beta_v(self) -> float:
        """E||v(k)||^2, the conditional second-moment bound"""
        s = self.per_coordinate_scale()
        if self.distribution == "gaussian":
            return float(np.sum(s ** 2))
        if self.distribution == "uniform":
            return float(np.sum(s ** 2) / 3.0)
        return 0.0


def sample_noise(model: NoiseModel, rng: np.random.Generator) -> np.ndarray:
    if model.distribution == "gaussian":
        return rng.standard_normal(model.size) * model.per_coordinate_scale()
    if model.distribution == "uniform":
        return rng.uniform(-1.0, 1.0, model.size) * model.per_coordinate_scale()
    return np.zeros(model.size)
