"""
Gain schedules, assumption constants and the consensus+innovation dynamics

x_i(k+1) = x_i(k) + a(k) H_i^T (z_i - H_i x_i(k))
                  + b(k) sum_j a_ij (x_j(k - lambda_ji(k)) - x_i(k))
"""
import math
from collections import deque
from dataclasses import dataclass, field
from typing import Callable, Deque, List, Optional, Sequence

import numpy as np
from scipy.optimize import brentq, minimize_scalar

from ..exceptions import ConsistencyError, HistoryUnderflowError, InvalidInputError
from ..schemas.reports import A3cBound, GainAssumptionReport
from ..utils.logger import get_logger
from .graph import DelayRealization, degree_matrix, delayed_adjacency
from .processes import JointState, NoiseModel

logger = get_logger("estimator")

FORM_TOL = 1e-12
# Relative margin on the strict inequality sup b(k) < bound
A3C_MARGIN = 1e-9
# d = 0 supremum is approached as kappa -> 1; report this kappa
KAPPA_EDGE = 1e-10


@dataclass(frozen=True)
class GainSchedule:
    """
    Innovation gain a(k) and consensus gain b(k)

    power_law: a(k) = a_scale/(k+1+shift)^tau1, b(k) = b_scale/(k+1+shift)^tau2
    custom: arbitrary positive callables
    """
    kind: str
    tau1: Optional[float] = None
    tau2: Optional[float] = None
    a_scale: float = 1.0
    b_scale: float = 1.0
    shift: float = 0.0
    a_fn: Optional[Callable[[int], float]] = field(default=None, compare=False)
    b_fn: Optional[Callable[[int], float]] = field(default=None, compare=False)

    def __post_init__(self):
        if self.kind == "power_law":
            if self.tau1 is None or self.tau2 is None:
                raise InvalidInputError("power_law gains need tau1 and tau2")
            if not 0.5 < self.tau2 <= self.tau1 <= 1.0:
                raise InvalidInputError(
                    f"power_law gains need 0.5 < tau2 <= tau1 <= 1, got tau1={self.tau1}, tau2={self.tau2}"
                )
            if self.a_scale <= 0 or self.b_scale <= 0:
                raise InvalidInputError("Gain scales must be positive")
            if self.shift < 0:
                raise InvalidInputError("Gain shift must be nonnegative")
        elif self.kind == "custom":
            if self.a_fn is None or self.b_fn is None:
                raise InvalidInputError("custom gains need both a_fn and b_fn")
        else:
            raise InvalidInputError(f"Unknown gain kind '{self.kind}'")

    @classmethod
    def power_law(cls, tau1: float, tau2: float, a_scale: float = 1.0, b_scale: float = 1.0,
                  shift: float = 0.0) -> "GainSchedule":
        return cls("power_law", tau1=tau1, tau2=tau2, a_scale=a_scale, b_scale=b_scale, shift=shift)

    @classmethod
    def custom(cls, a_fn: Callable[[int], float], b_fn: Callable[[int], float]) -> "GainSchedule":
        return cls("custom", a_fn=a_fn, b_fn=b_fn)

    def a(self, k: int) -> float:
        if self.kind == "power_law":
            return self.a_scale / (k + 1 + self.shift) ** self.tau1
        value = float(self.a_fn(k))
        if not value > 0:
            raise InvalidInputError(f"a({k}) = {value} is not positive")
        return value

    def b(self, k: int) -> float:
        if self.kind == "power_law":
            return self.b_scale / (k + 1 + self.shift) ** self.tau2
        value = float(self.b_fn(k))
        if not value > 0:
            raise InvalidInputError(f"b({k}) = {value} is not positive")
        return value

    def ratio(self, k: int) -> float:
        """b(k)/a(k), the weight of the Laplacian term in the excitation windows"""
        return self.b(k) / self.a(k)

    def sequences(self, horizon: int) -> tuple:
        a = np.array([self.a(k) for k in range(horizon)])
        b = np.array([self.b(k) for k in range(horizon)])
        return a, b

    def ratio_bound(self, horizon: int) -> float:
        """Smallest C_a with a(k) <= C_a b(k) on k < horizon"""
        if self.kind == "power_law" and self.tau1 >= self.tau2:
            return self.a_scale / self.b_scale
        a, b = self.sequences(horizon)
        return float(np.max(a / b))


@dataclass(frozen=True)
class AssumptionConstants:
    """Bounds entering the uniform boundedness and gain-size assumptions"""
    N: int
    beta_a: float
    beta_H: float
    beta_v: float
    C_a: float
    kappa: float
    d: int

    def __post_init__(self):
        if self.N < 1:
            raise InvalidInputError("N must be positive")
        if self.beta_a < 0 or self.beta_H < 0 or self.beta_v < 0:
            raise InvalidInputError("beta_a, beta_H and beta_v must be nonnegative")
        if self.C_a <= 0:
            raise InvalidInputError("C_a must be positive")
        if not 0.0 < self.kappa < 1.0:
            raise InvalidInputError(f"kappa must lie in (0, 1), got {self.kappa}")
        if self.d < 0:
            raise InvalidInputError("d must be nonnegative")

    @classmethod
    def from_scenario(cls, states: Sequence[JointState], noise: NoiseModel, gains: GainSchedule,
                      d: int, horizon: int, kappa: Optional[float] = None,
                      C_a: Optional[float] = None) -> "AssumptionConstants":
        """
        Derive the bounds from a finite state space.

        beta_a is the largest |a_ij| over all states, beta_H the largest
        spectral norm of any H_{i,l}. Without an explicit kappa, the smallest
        kappa whose gain-size bound covers b(0) is used, falling back to the
        maximizing kappa when b(0) exceeds the bound.
        """
        if not states:
            raise InvalidInputError("State space must not be empty")
        beta_a = max(float(np.max(np.abs(s.graph.A))) for s in states)
        beta_H = max(float(np.linalg.norm(H, 2)) for s in states for H in s.H_blocks)
        C_a = gains.ratio_bound(max(horizon, 1)) if C_a is None else C_a
        N = states[0].N
        if kappa is None:
            kappa = certifying_kappa(gains.b(0), N, beta_a, beta_H, C_a, d)
        return cls(N, beta_a, beta_H, noise.beta_v, C_a, kappa, d)


def _a3c_terms(kappa: float, N: int, beta_a: float, beta_H: float, C_a: float, d: int) -> tuple:
    first_den = 2.0 * (N * beta_a + N * math.sqrt(N) * beta_a + C_a * beta_H ** 2)
    first = kappa / first_den if first_den > 0 else math.inf
    # (1 - s) k / (c (1 - s^(d+1))) with s = 1/(1-k) is k / (c sum_q s^q)
    geometric = sum((1.0 - kappa) ** (-q) for q in range(d + 1))
    second_den = 2.0 * N * math.sqrt(N) * beta_a * geometric
    second = kappa / second_den if second_den > 0 else math.inf
    return first, second


def a3c_envelope(kappa: float, N: int, beta_a: float, beta_H: float, C_a: float, d: int) -> float:
    """min of the two gain-size expressions at a given kappa"""
    return min(_a3c_terms(kappa, N, beta_a, beta_H, C_a, d))


def a3c_bound(N: int, beta_a: float, beta_H: float, C_a: float, d: int) -> A3cBound:
    """Supremum over kappa in (0, 1) of the gain-size envelope, and its maximizer"""
    if N < 1 or beta_a < 0 or beta_H < 0 or C_a <= 0 or d < 0:
        raise InvalidInputError("a3c_bound needs N >= 1, beta_a >= 0, beta_H >= 0, C_a > 0, d >= 0")

    first_den = 2.0 * (N * beta_a + N * math.sqrt(N) * beta_a + C_a * beta_H ** 2)
    if first_den == 0.0:
        return A3cBound(bound=math.inf, kappa_star=1.0 - KAPPA_EDGE)
    if d == 0 or beta_a == 0.0:
        # first <= second everywhere, so the supremum is the first term at kappa -> 1
        return A3cBound(bound=1.0 / first_den, kappa_star=1.0 - KAPPA_EDGE)

    def negative(kappa: float) -> float:
        return -a3c_envelope(kappa, N, beta_a, beta_H, C_a, d)

    grid = np.unique(np.concatenate([
        np.linspace(1e-3, 0.999, 999),
        1.0 - np.logspace(-12, -3, 200),
    ]))
    values = np.array([-negative(k) for k in grid])
    best = int(np.argmax(values))
    lo = grid[max(best - 1, 0)]
    hi = grid[min(best + 1, grid.size - 1)]
    result = minimize_scalar(negative, bounds=(lo, hi), method="bounded",
                             options={"xatol": 1e-12})
    kappa_star, bound = float(grid[best]), float(values[best])
    if result.success and -result.fun >= bound:
        kappa_star, bound = float(result.x), float(-result.fun)
    logger.debug(f"A3.c bound {bound:.6e} at kappa*={kappa_star:.10f} (N={N}, d={d})")
    return A3cBound(bound=bound, kappa_star=kappa_star)


def certifying_kappa(b_sup: float, N: int, beta_a: float, beta_H: float, C_a: float, d: int) -> float:
    """
    Smallest kappa whose envelope still dominates b_sup, giving the tightest
    ||F^-1(k)|| <= 1/(1-kappa) certificate. The envelope increases on
    (0, kappa*]; when b_sup is not below the bound kappa* is returned.
    """
    bound = a3c_bound(N, beta_a, beta_H, C_a, d)
    lo, hi = 1e-12, bound.kappa_star

    def gap(kappa: float) -> float:
        return a3c_envelope(kappa, N, beta_a, beta_H, C_a, d) - b_sup

    if gap(lo) >= 0.0:
        return lo
    if gap(hi) <= 0.0:
        return hi
    return float(brentq(gap, lo, hi, xtol=1e-14))


def check_gain_assumptions(s: GainSchedule, c: AssumptionConstants, horizon: int) -> GainAssumptionReport:
    """Finite-horizon proxies for the decreasing-gain assumptions plus the gain-size verdict"""
    if horizon < 2:
        raise InvalidInputError("Gain checks need a horizon of at least 2")
    a, b = s.sequences(horizon)

    monotone = bool(np.all(np.diff(a) <= 0.0) and np.all(np.diff(b) <= 0.0))
    vanishing = bool(a[-1] < a[0] and b[-1] < b[0])
    ratio = b ** 2 / a
    ratio_decreasing = bool(np.all(np.diff(ratio) <= 1e-15 * ratio[:-1]) and ratio[-1] < ratio[0])
    tail = a[horizon // 2:].sum()
    sums_growing = bool(tail > 1e-3 * a.sum())
    b2_tail = (b[horizon // 2:] ** 2).sum()
    b2_summable = bool(b2_tail < 1e-2 * (b ** 2).sum())

    a3a_analytic = a3b_analytic = None
    if s.kind == "power_law":
        a3a_analytic = bool(0.0 < s.tau2 <= s.tau1 <= 1.0 and 2.0 * s.tau2 > s.tau1)
        a3b_analytic = bool(s.tau2 > 0.5)

    bound = a3c_bound(c.N, c.beta_a, c.beta_H, c.C_a, c.d)
    b_sup = float(np.max(b))
    a3c = bool(b_sup < bound.bound * (1.0 - A3C_MARGIN))
    ratio_ok = bool(np.all(a <= c.C_a * b * (1.0 + 1e-12)))

    report = GainAssumptionReport(
        horizon=horizon,
        kind=s.kind,
        monotone=monotone,
        vanishing=vanishing,
        ratio_decreasing=ratio_decreasing,
        partial_sums_growing=sums_growing,
        a3a_proxy=monotone and vanishing and ratio_decreasing and sums_growing,
        a3b_proxy=b2_summable,
        a3a_analytic=a3a_analytic,
        a3b_analytic=a3b_analytic,
        C_a=c.C_a,
        C_a_holds=ratio_ok,
        b_sup=b_sup,
        a3c_bound=bound.bound,
        kappa_star=bound.kappa_star,
        kappa=c.kappa,
        a3c=a3c and ratio_ok,
    )
    logger.info(
        f"Gain check ({s.kind}, K={horizon}): A3.a proxy={report.a3a_proxy}, "
        f"A3.b proxy={report.a3b_proxy}, A3.c={report.a3c} (sup b={b_sup:.4g} vs {bound.bound:.4g})"
    )
    return report


@dataclass(frozen=True)
class MeasurementModel:
    """True parameter x0 in R^n observed through N nodes of dimensions n_i"""
    x0: np.ndarray
    node_dims: tuple

    def __post_init__(self):
        x0 = np.asarray(self.x0, dtype=float).ravel()
        dims = tuple(int(m) for m in self.node_dims)
        if x0.size == 0:
            raise InvalidInputError("x0 must not be empty")
        if any(m < 1 or m > x0.size for m in dims):
            raise InvalidInputError(f"Node dimensions {dims} must lie in 1..n={x0.size}")
        x0.setflags(write=False)
        object.__setattr__(self, "x0", x0)
        object.__setattr__(self, "node_dims", dims)

    @property
    def n(self) -> int:
        return self.x0.size

    @property
    def N(self) -> int:
        return len(self.node_dims)

    def stacked_truth(self) -> np.ndarray:
        """1_N kron x0"""
        return np.tile(self.x0, self.N)


def measure(m: MeasurementModel, H: np.ndarray, v: np.ndarray) -> np.ndarray:
    """z(k) = H(k) x0 + v(k) with H the stacked (sum n_i) x n observation matrix"""
    H = np.atleast_2d(np.asarray(H, dtype=float))
    v = np.asarray(v, dtype=float).ravel()
    rows = sum(m.node_dims)
    if H.shape != (rows, m.n):
        raise InvalidInputError(f"Observation matrix must be {(rows, m.n)}, got {H.shape}")
    if v.shape != (rows,):
        raise InvalidInputError(f"Noise must have length {rows}, got {v.shape[0]}")
    return H @ m.x0 + v


class NetworkState:
    """
    Stacked estimates with a depth-(d+1) history; history[q] holds x(k-q).
    Steps before 0 read the constant prefill x(0).
    """

    def __init__(self, x_init: np.ndarray, N: int, n: int, d: int):
        x_init = np.asarray(x_init, dtype=float).ravel()
        if x_init.shape != (N * n,):
            raise InvalidInputError(f"Initial estimate must have length N*n={N * n}, got {x_init.size}")
        if d < 0:
            raise InvalidInputError("d must be nonnegative")
        self.N = N
        self.n = n
        self.d = d
        self.k = 0
        self.history: Deque[np.ndarray] = deque((x_init.copy() for _ in range(d + 1)), maxlen=d + 1)

    @property
    def x(self) -> np.ndarray:
        return self.history[0]

    def read(self, j: int, q: int) -> np.ndarray:
        """x_j(k - q)"""
        if q < 0 or q > self.d:
            raise HistoryUnderflowError(f"Read of x_{j + 1}(k-{q}) outside history depth {self.d}")
        return self.history[q][j * self.n:(j + 1) * self.n]

    def stacked_history(self) -> List[np.ndarray]:
        return list(self.history)

    def push(self, x_next: np.ndarray) -> None:
        self.history.appendleft(np.asarray(x_next, dtype=float).copy())
        self.k += 1

    def error(self, m: MeasurementModel) -> np.ndarray:
        return self.x - m.stacked_truth()

    def copy(self) -> "NetworkState":
        twin = NetworkState(self.x, self.N, self.n, self.d)
        twin.history = deque((x.copy() for x in self.history), maxlen=self.d + 1)
        twin.k = self.k
        return twin


def node_update(state: NetworkState, i: int, H_i: np.ndarray, z_i: np.ndarray,
                a_row: np.ndarray, lam_col: np.ndarray, a: float, b: float) -> np.ndarray:
    """x_i(k+1) for node i; lam_col[j] is lambda_ji(k)"""
    x_i = state.read(i, 0)
    innovation = H_i.T @ (z_i - H_i @ x_i)
    consensus = np.zeros(state.n)
    for j in np.flatnonzero(a_row):
        consensus += a_row[j] * (state.read(int(j), int(lam_col[j])) - x_i)
    return x_i + a * innovation + b * consensus


def _stacked_recursion(history: Sequence[np.ndarray], joint: JointState, delays: DelayRealization,
                       drive: np.ndarray, a: float, b: float) -> np.ndarray:
    """[I - b D kron I - a HtH] y(k) + b sum_q Abar(k,q) y(k-q) + a H^T drive"""
    if len(history) < delays.d + 1:
        raise HistoryUnderflowError(f"Need {delays.d + 1} history entries, got {len(history)}")
    n = joint.n
    y = history[0]
    D = np.kron(degree_matrix(joint.graph), np.eye(n))
    out = y - b * (D @ y) - a * (joint.gramian @ y) + a * (joint.block_observation.T @ drive)
    for q, Abar in enumerate(delayed_adjacency(joint.graph, delays, n)):
        if np.any(Abar):
            out = out + b * (Abar @ history[q])
    return out


def compact_step(history: Sequence[np.ndarray], joint: JointState, delays: DelayRealization,
                 z: np.ndarray, a: float, b: float) -> np.ndarray:
    """Stacked-form x(k+1) from x(k), ..., x(k-d)"""
    return _stacked_recursion(history, joint, delays, np.asarray(z, dtype=float), a, b)


def error_step(e_history: Sequence[np.ndarray], joint: JointState, delays: DelayRealization,
               v: np.ndarray, a: float, b: float) -> np.ndarray:
    """e(k+1) driven by the noise v(k)"""
    return _stacked_recursion(e_history, joint, delays, np.asarray(v, dtype=float), a, b)


def network_step(state: NetworkState, joint: JointState, delays: DelayRealization, z: np.ndarray,
                 a: float, b: float, cross_check: bool = False) -> NetworkState:
    """Apply the per-node update at every node, then rotate the history"""
    if delays.d > state.d:
        raise HistoryUnderflowError(f"Delays up to {delays.d} exceed history depth {state.d}")
    z = np.asarray(z, dtype=float)
    A = joint.graph.A
    offsets = np.concatenate([[0], np.cumsum(joint.node_dims)])
    x_next = np.empty(state.N * state.n)
    for i, H_i in enumerate(joint.H_blocks):
        z_i = z[offsets[i]:offsets[i + 1]]
        x_next[i * state.n:(i + 1) * state.n] = node_update(state, i, H_i, z_i, A[i], delays.lam[:, i], a, b)

    if cross_check:
        history = state.stacked_history()
        stacked = compact_step(history, joint, delays, z, a, b)
        residual = float(np.max(np.abs(stacked - x_next)))
        scale = max(1.0, float(np.max(np.abs(x_next))))
        if residual > FORM_TOL * scale:
            raise ConsistencyError("per-node vs stacked update", residual, FORM_TOL * scale)

    state.push(x_next)
    return state
