"""
Certificates for the persistence-of-excitation conditions

Window m covers k = mh .. (m+1)h - 1 and is conditioned on the history up to
mh - 1. Quantities:

    lambda        lambda_min sum_k ( b/a E[Lhat kron I] + E[H^T H] )
    lambda_prime  lambda_min sum_k ( 2 b/a E[Lhat kron I] + 2 E[H^T H] - b/a (E[B_k] + E[B_k]^T) )
    delta         sum_k b/a sum_q || E[B_kq] ||

with B_kq = Abar(k,q) ([Phi_F(k-1, k-q)]^-1 - I) and B_k = sum_q B_kq.
"""
import copy
import itertools
from dataclasses import dataclass
from typing import Callable, Dict, Iterable, Iterator, List, Optional, Sequence, Tuple, Union

import numpy as np

from ..exceptions import (
    ConsistencyError,
    InvalidInputError,
    SingularTransitionError,
    UnreliableEstimateError,
)
from ..schemas.reports import B2Report, ConditionReport, Corollary1Report, WindowEstimate
from ..utils.logger import get_logger
from .auxiliary import AuxiliarySystem
from .graph import DelayRealization, WeightedDigraph, has_spanning_tree, is_balanced
from .processes import (
    PURPOSES,
    JointMarkovProcess,
    JointState,
    ProcessDriver,
    rng_stream,
    sample_delays,
)
from .scenario import Scenario

logger = get_logger("conditions")

SYMMETRY_TOL = 1e-8
JOINT_OBS_TOL = 1e-10
MAX_REJECTION_RATE = 0.01
MAX_JACKKNIFE_GROUPS = 100
ENUMERATION_LIMIT = 1_000_000

QUANTITIES = ("lambda", "lambda_prime", "delta", "lambda_minus_delta")


def _lambda_min(M: np.ndarray, analytic: bool = False) -> float:
    residual = float(np.max(np.abs(M - M.T))) if M.size else 0.0
    if analytic and residual > SYMMETRY_TOL:
        raise ConsistencyError("symmetrization of the window matrix", residual, SYMMETRY_TOL)
    logger.debug(f"symmetrization residual {residual:.3e}")
    return float(np.linalg.eigvalsh((M + M.T) / 2.0)[0])


def _excitation_terms(state: JointState, n: int) -> Tuple[np.ndarray, np.ndarray]:
    """(Lhat kron I_n, H^T H) of one joint state"""
    if state.n != n:
        raise InvalidInputError(f"State has n={state.n}, requested n={n}")
    return np.kron(state.symmetrized_laplacian, np.eye(n)), state.gramian


# Analytic finite-chain conditions

def lambda_mh_markov(chain: JointMarkovProcess, gains, h: int, m: int, conditioning_state: int,
                     n: Optional[int] = None) -> float:
    """
    Exact lambda_m^h for a finite chain whose state at mh - 1 is
    `conditioning_state`; window offset t sees the distribution P^(t+1)[state].
    """
    if h < 1 or m < 0:
        raise InvalidInputError("Window needs h >= 1 and m >= 0")
    if not 0 <= conditioning_state < chain.size:
        raise InvalidInputError(f"Conditioning state {conditioning_state} outside 0..{chain.size - 1}")
    n = chain.states[0].n if n is None else n
    terms = [_excitation_terms(s, n) for s in chain.states]

    dim = chain.states[0].N * n
    M = np.zeros((dim, dim))
    row = np.zeros(chain.size)
    row[conditioning_state] = 1.0
    for t in range(h):
        row = row @ chain.P
        k = m * h + t
        L_mean = sum(p * L for p, (L, _) in zip(row, terms) if p > 0)
        G_mean = sum(p * G for p, (_, G) in zip(row, terms) if p > 0)
        M = M + gains.ratio(k) * L_mean + G_mean
    return _lambda_min(M, analytic=True)


def reachable_states(chain: JointMarkovProcess, initial_state: int, steps: int) -> List[int]:
    """States with positive probability `steps` transitions after `initial_state`"""
    row = np.zeros(chain.size)
    row[initial_state] = 1.0
    row = row @ chain.transition_power(steps)
    return [int(i) for i in np.flatnonzero(row > 0.0)]


def lambda_profile_markov(chain: JointMarkovProcess, gains, h: int, m_max: int,
                          initial_state: int = 0) -> List[WindowEstimate]:
    """lambda_m^h for m = 0..m_max, worst case over every reachable state at mh - 1"""
    estimates = []
    for m in range(m_max + 1):
        # k = -1 is the initial state; mh transitions lead to the state at mh - 1
        candidates = reachable_states(chain, initial_state, m * h)
        value = min(lambda_mh_markov(chain, gains, h, m, s) for s in candidates)
        estimates.append(WindowEstimate(m=m, value=value))
    return estimates


def check_b2(chain: Union[JointMarkovProcess, Sequence[JointState]]) -> B2Report:
    """rho0 = max_l (||L_l|| + ||H_l^T H_l||), valid for every window length"""
    states = chain.states if isinstance(chain, JointMarkovProcess) else list(chain)
    per_state = [
        float(np.linalg.norm(s.laplacian, 2) + np.linalg.norm(s.gramian, 2))
        for s in states
    ]
    return B2Report(rho0=max(per_state), per_state=per_state)


def corollary1_check(chain: JointMarkovProcess) -> Corollary1Report:
    """Balanced stationary graph with a spanning tree, plus joint observability"""
    A_pi = chain.stationary_adjacency()
    graph = WeightedDigraph(A_pi)
    nonneg = graph.is_nonnegative()
    balanced = is_balanced(graph)
    spanning = has_spanning_tree(graph) if nonneg else False

    joint = sum(p * (s.observation_matrix.T @ s.observation_matrix) for p, s in zip(chain.pi, chain.states))
    joint_obs = float(np.linalg.eigvalsh((joint + joint.T) / 2.0)[0])
    verdict = nonneg and balanced and spanning and joint_obs > JOINT_OBS_TOL
    logger.info(
        f"Stationary graph: nonneg={nonneg}, balanced={balanced}, spanning tree={spanning}; "
        f"joint observability lambda_min={joint_obs:.6g}"
    )
    return Corollary1Report(
        stationary_nonneg=nonneg,
        balanced=balanced,
        spanning_tree=spanning,
        joint_obs_lambda=joint_obs,
        verdict=verdict,
        pi=[float(p) for p in chain.pi],
    )


def ergodic_limit(chain: JointMarkovProcess, n: Optional[int] = None) -> float:
    """lambda_min sum_l pi_l (Lhat_l kron I + H_l^T H_l), the large-window limit of lambda_m^h / h"""
    n = chain.states[0].n if n is None else n
    M = sum(p * (L + G) for p, (L, G) in zip(chain.pi, (_excitation_terms(s, n) for s in chain.states)))
    return _lambda_min(M, analytic=True)


def norm_lemma_holds(samples: np.ndarray) -> bool:
    """||mean(A A^T)|| <= n ||mean(A^T A)|| for an ensemble of m x n matrices"""
    samples = np.asarray(samples, dtype=float)
    if samples.ndim != 3:
        raise InvalidInputError("Expected an ensemble of shape (S, m, n)")
    n = samples.shape[2]
    outer = np.einsum("sij,skj->ik", samples, samples) / samples.shape[0]
    inner = np.einsum("sji,sjk->ik", samples, samples) / samples.shape[0]
    lhs = np.linalg.norm(outer, 2)
    rhs = n * np.linalg.norm(inner, 2)
    return bool(lhs <= rhs * (1.0 + 1e-12) + 1e-300)


# Frozen prefixes and window sampling

@dataclass
class FrozenPrefix:
    """Realized graph, delay and F history of one replicate up to k0 - 1"""
    master_seed: int
    replicate: int
    m: int
    h: int
    driver: ProcessDriver
    aux: AuxiliarySystem

    @property
    def k0(self) -> int:
        return self.m * self.h


def iter_prefixes(scenario: Scenario, master_seed: int, replicate: int, h: int,
                  m_values: Iterable[int], kappa: Optional[float] = None) -> Iterator[FrozenPrefix]:
    """
    Replay the graph and delay streams of a replicate, yielding a frozen
    prefix at each requested window start.
    """
    driver = scenario.make_driver(rng_stream(master_seed, replicate, "graph"))
    delay_rng = rng_stream(master_seed, replicate, "delay")
    aux = AuxiliarySystem(scenario.N, scenario.n, scenario.d, kappa)
    gains = scenario.gains
    k = 0
    for m in sorted(set(m_values)):
        while k < m * h:
            joint = driver.next_state(k)
            delays = sample_delays(scenario.delay_model, delay_rng, k)
            aux.advance(joint, delays, gains.a(k), gains.b(k))
            k += 1
        yield FrozenPrefix(master_seed, replicate, m, h, copy.copy(driver), aux.copy())


def freeze_prefix(scenario: Scenario, master_seed: int, replicate: int, m: int, h: int,
                  kappa: Optional[float] = None) -> FrozenPrefix:
    return next(iter_prefixes(scenario, master_seed, replicate, h, [m], kappa))


@dataclass
class WindowMeans:
    """Conditional expectations over one window"""
    lam: np.ndarray
    prime: np.ndarray
    blocks: Optional[np.ndarray]
    ratios: np.ndarray


@dataclass
class WindowStatistics:
    """Per-group sums of the sampled window matrices"""
    group_sizes: np.ndarray
    lam_sums: np.ndarray
    prime_sums: np.ndarray
    block_sums: Optional[np.ndarray]
    ratios: np.ndarray
    rejected: int

    @property
    def accepted(self) -> int:
        return int(self.group_sizes.sum())

    def means(self, exclude: Optional[int] = None) -> WindowMeans:
        keep = np.ones(self.group_sizes.size, dtype=bool)
        if exclude is not None:
            keep[exclude] = False
        count = self.group_sizes[keep].sum()
        blocks = self.block_sums[keep].sum(axis=0) / count if self.block_sums is not None else None
        return WindowMeans(
            lam=self.lam_sums[keep].sum(axis=0) / count,
            prime=self.prime_sums[keep].sum(axis=0) / count,
            blocks=blocks,
            ratios=self.ratios,
        )


def _window_matrices(joint: JointState, aux: AuxiliarySystem, n: int) -> Tuple[np.ndarray, np.ndarray, np.ndarray]:
    """(Lhat kron I, H^T H, B_kq stacked over q) at the step aux just advanced"""
    L, G = _excitation_terms(joint, n)
    eye = np.eye(aux.dim)
    blocks = np.stack([Abar @ (inv - eye) for Abar, inv in zip(aux.abar, aux.phi_inverses)])
    return L, G, blocks


def _window_sums(L: np.ndarray, G: np.ndarray, B: np.ndarray, ratio: float) -> Tuple[np.ndarray, np.ndarray]:
    Bk = B.sum(axis=0)
    return ratio * L + G, 2.0 * ratio * L + 2.0 * G - ratio * (Bk + Bk.T)


def sample_window_statistics(scenario: Scenario, prefix: FrozenPrefix, samples: int,
                             keep_blocks: bool = True) -> WindowStatistics:
    """Draw independent continuations of the window after a frozen prefix"""
    if samples < 1:
        raise InvalidInputError("Need at least one window sample")
    gains, h, k0 = scenario.gains, prefix.h, prefix.k0
    dim, d = scenario.N * scenario.n, scenario.d
    groups = min(MAX_JACKKNIFE_GROUPS, samples)
    ratios = np.array([gains.ratio(k0 + t) for t in range(h)])

    group_sizes = np.zeros(groups, dtype=np.int64)
    lam_sums = np.zeros((groups, dim, dim))
    prime_sums = np.zeros((groups, dim, dim))
    block_sums = np.zeros((groups, h, d + 1, dim, dim)) if keep_blocks else None

    seeds = np.random.SeedSequence(
        entropy=int(prefix.master_seed), spawn_key=(prefix.replicate, PURPOSES["window"], prefix.m)
    ).spawn(samples)
    rejected = 0
    for s, seed in enumerate(seeds):
        rng = np.random.default_rng(seed)
        driver = prefix.driver.fork(rng)
        aux = prefix.aux.copy()
        lam = np.zeros((dim, dim))
        prime = np.zeros((dim, dim))
        blocks = np.zeros((h, d + 1, dim, dim)) if keep_blocks else None
        try:
            for t in range(h):
                k = k0 + t
                joint = driver.next_state(k)
                delays = sample_delays(scenario.delay_model, rng, k)
                aux.advance(joint, delays, gains.a(k), gains.b(k))
                L, G, B = _window_matrices(joint, aux, scenario.n)
                lam_t, prime_t = _window_sums(L, G, B, ratios[t])
                lam += lam_t
                prime += prime_t
                if keep_blocks:
                    blocks[t] = B
        except SingularTransitionError as e:
            rejected += 1
            logger.debug(f"Window sample {s} rejected: {e}")
            continue
        g = s * groups // samples
        group_sizes[g] += 1
        lam_sums[g] += lam
        prime_sums[g] += prime
        if keep_blocks:
            block_sums[g] += blocks

    if rejected > MAX_REJECTION_RATE * samples:
        raise UnreliableEstimateError(rejected, samples)
    if rejected:
        logger.warning(f"Window m={prefix.m}: rejected {rejected} of {samples} samples")
    return WindowStatistics(group_sizes, lam_sums, prime_sums, block_sums, ratios, rejected)


def _delta(means: WindowMeans) -> float:
    if means.blocks is None:
        raise InvalidInputError("Delta needs per-(k, q) window blocks")
    total = 0.0
    for t, ratio in enumerate(means.ratios):
        total += ratio * sum(np.linalg.norm(means.blocks[t, q], 2) for q in range(means.blocks.shape[1]))
    return float(total)


QUANTITY_FUNCTIONS: Dict[str, Callable[[WindowMeans], float]] = {
    "lambda": lambda w: _lambda_min(w.lam),
    "lambda_prime": lambda w: _lambda_min(w.prime),
    "delta": _delta,
    "lambda_minus_delta": lambda w: _lambda_min(w.lam) - _delta(w),
}


def jackknife_estimate(stats: WindowStatistics, quantity: str, m: int = 0) -> WindowEstimate:
    """Plug-in value with a delete-one-group jackknife standard error"""
    fn = QUANTITY_FUNCTIONS[quantity]
    value = fn(stats.means())
    groups = [g for g in range(stats.group_sizes.size) if stats.group_sizes[g] > 0]
    stderr = 0.0
    if len(groups) > 1:
        partial = np.array([fn(stats.means(exclude=g)) for g in groups])
        G = len(groups)
        stderr = float(np.sqrt((G - 1) / G * np.sum((partial - partial.mean()) ** 2)))
    return WindowEstimate(m=m, value=value, stderr=stderr, rejected=stats.rejected)


def lambda_mh_prime_mc(scenario: Scenario, prefix: FrozenPrefix, samples: int) -> WindowEstimate:
    stats = sample_window_statistics(scenario, prefix, samples, keep_blocks=False)
    return jackknife_estimate(stats, "lambda_prime", prefix.m)


def delta_mh_mc(scenario: Scenario, prefix: FrozenPrefix, samples: int) -> WindowEstimate:
    stats = sample_window_statistics(scenario, prefix, samples)
    return jackknife_estimate(stats, "delta", prefix.m)


def lambda_mh_mc(scenario: Scenario, prefix: FrozenPrefix, samples: int) -> WindowEstimate:
    """Conditional Monte Carlo estimate of the delay-free excitation lambda_m^h"""
    stats = sample_window_statistics(scenario, prefix, samples, keep_blocks=False)
    return jackknife_estimate(stats, "lambda", prefix.m)


# Exhaustive enumeration

def _delay_support(scenario: Scenario, k: int) -> List[Tuple[np.ndarray, float]]:
    """Every delay realization with positive probability at step k, on links some state uses"""
    N, d = scenario.N, scenario.d
    if d == 0:
        return [(np.zeros((N, N), dtype=np.int64), 1.0)]
    used = np.zeros((N, N), dtype=bool)
    for s in scenario.states:
        used |= s.graph.A != 0.0
    p = scenario.delay_model.probabilities_at(k)
    # lambda[j, i] only matters where a_ij != 0
    pairs = [(j, i) for i in range(N) for j in range(N) if i != j and used[i, j]]
    supports = [[(q, p[j, i, q]) for q in np.flatnonzero(p[j, i] > 0.0)] for j, i in pairs]
    realizations = []
    for combo in itertools.product(*supports):
        lam = np.zeros((N, N), dtype=np.int64)
        prob = 1.0
        for (j, i), (q, pq) in zip(pairs, combo):
            lam[j, i] = q
            prob *= pq
        realizations.append((lam, prob))
    return realizations


def enumerate_window(scenario: Scenario, prefix: FrozenPrefix) -> WindowMeans:
    """Exact window expectations by walking every state and delay path"""
    if scenario.delay_model.coupler is not None:
        raise InvalidInputError("Exhaustive enumeration needs independent per-link delays")
    gains, h, k0 = scenario.gains, prefix.h, prefix.k0
    dim, d, n = scenario.N * scenario.n, scenario.d, scenario.n
    supports = [_delay_support(scenario, k0 + t) for t in range(h)]
    branching = [len(scenario.states) * len(sup) for sup in supports]
    if float(np.prod(np.asarray(branching, dtype=float))) > ENUMERATION_LIMIT:
        raise InvalidInputError(
            f"Window has up to {np.prod(np.asarray(branching, dtype=float)):.3g} paths, "
            f"above the enumeration limit {ENUMERATION_LIMIT}"
        )

    ratios = np.array([gains.ratio(k0 + t) for t in range(h)])
    L_mean = np.zeros((h, dim, dim))
    G_mean = np.zeros((h, dim, dim))
    B_mean = np.zeros((h, d + 1, dim, dim))

    def walk(t: int, driver: ProcessDriver, aux: AuxiliarySystem, weight: float) -> None:
        if t == h:
            return
        k = k0 + t
        for index, p_state in driver.transition_row(k).items():
            joint = scenario.states[index]
            child = copy.copy(driver)
            child.current = index
            for lam, p_delay in supports[t]:
                w = weight * p_state * p_delay
                stepped = aux.copy()
                stepped.advance(joint, DelayRealization(lam, d), gains.a(k), gains.b(k))
                L, G, B = _window_matrices(joint, stepped, n)
                L_mean[t] += w * L
                G_mean[t] += w * G
                B_mean[t] += w * B
                walk(t + 1, child, stepped, w)

    walk(0, prefix.driver, prefix.aux, 1.0)

    lam = np.zeros((dim, dim))
    prime = np.zeros((dim, dim))
    for t in range(h):
        lam_t, prime_t = _window_sums(L_mean[t], G_mean[t], B_mean[t], ratios[t])
        lam += lam_t
        prime += prime_t
    return WindowMeans(lam=lam, prime=prime, blocks=B_mean, ratios=ratios)


def exhaustive_estimate(scenario: Scenario, prefix: FrozenPrefix, quantity: str) -> WindowEstimate:
    return WindowEstimate(m=prefix.m, value=QUANTITY_FUNCTIONS[quantity](enumerate_window(scenario, prefix)))


# Scans

def resolve_method(scenario: Scenario, quantity: str, method: str) -> str:
    if quantity not in QUANTITIES:
        raise InvalidInputError(f"Unknown quantity '{quantity}'")
    if method == "auto":
        if quantity == "lambda" and scenario.as_markov() is not None:
            return "analytic_markov"
        return "monte_carlo"
    if method == "analytic_markov":
        if quantity != "lambda":
            raise InvalidInputError(f"{quantity} depends on F chains and has no analytic evaluation")
        if scenario.as_markov() is None:
            raise InvalidInputError("Analytic evaluation needs markov, iid or constant switching")
    return method


def infimum_scan(scenario: Scenario, quantity: str, h: int, m_max: int, method: str = "auto",
                 samples: int = 1000, theta: float = 0.0, master_seed: int = 0, replicate: int = 0,
                 kappa: Optional[float] = None) -> ConditionReport:
    """
    Evaluate a window quantity for m = 0..m_max and certify min > theta
    (minus three standard errors for sampled values)
    """
    if m_max < 1:
        raise InvalidInputError("m_max must be at least 1")
    if h < 1:
        raise InvalidInputError("h must be at least 1")
    method = resolve_method(scenario, quantity, method)
    logger.info(f"Scanning {quantity} over m=0..{m_max} (h={h}, method={method}) for '{scenario.name}'")

    if method == "analytic_markov":
        estimates = lambda_profile_markov(scenario.as_markov(), scenario.gains, h, m_max,
                                          scenario.initial_state if scenario.driver_kind == "markov" else 0)
        return ConditionReport.from_profile(quantity, method, h, estimates, theta)

    estimates = []
    for prefix in iter_prefixes(scenario, master_seed, replicate, h, range(m_max + 1), kappa):
        if method == "exhaustive":
            estimates.append(exhaustive_estimate(scenario, prefix, quantity))
        else:
            stats = sample_window_statistics(scenario, prefix, samples,
                                             keep_blocks=quantity in ("delta", "lambda_minus_delta"))
            estimates.append(jackknife_estimate(stats, quantity, prefix.m))
    report = ConditionReport.from_profile(quantity, method, h, estimates, theta,
                                          samples=samples if method == "monte_carlo" else None)
    logger.info(f"{quantity}: inf over scan = {report.theta_hat:.6g}, verdict={report.verdict}")
    return report
