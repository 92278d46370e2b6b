"""
Weighted digraphs, Laplacian algebra and the delay-matrix formalism

Link convention: a_ij != 0 means node i receives from node j (edge j -> i).
Delay convention: lambda[j, i] is the delay on the link j -> i.
"""
from dataclasses import dataclass, field
from typing import Callable, List, Optional

import networkx as nx
import numpy as np

from ..exceptions import InvalidInputError

BALANCE_TOL = 1e-10
PROBABILITY_TOL = 1e-12


def _frozen(array: np.ndarray) -> np.ndarray:
    array = np.array(array, copy=True)
    array.setflags(write=False)
    return array


@dataclass(frozen=True)
class WeightedDigraph:
    """Weighted adjacency A_G(k) of one communication graph"""
    adjacency: np.ndarray

    def __post_init__(self):
        A = np.asarray(self.adjacency, dtype=float)
        if A.ndim != 2 or A.shape[0] != A.shape[1] or A.shape[0] == 0:
            raise InvalidInputError(f"Adjacency must be a non-empty square matrix, got shape {A.shape}")
        if not np.all(np.isfinite(A)):
            raise InvalidInputError("Adjacency entries must be finite")
        if np.any(np.diag(A) != 0.0):
            raise InvalidInputError("Adjacency diagonal must be exactly zero")
        object.__setattr__(self, "adjacency", _frozen(A))

    @property
    def N(self) -> int:
        return self.adjacency.shape[0]

    @property
    def A(self) -> np.ndarray:
        return self.adjacency

    def neighbors(self, i: int) -> np.ndarray:
        """N_i = {j : a_ij != 0}"""
        return np.flatnonzero(self.adjacency[i])

    def within_bound(self, beta_a: float) -> bool:
        return bool(np.max(np.abs(self.adjacency)) <= beta_a)

    def is_nonnegative(self) -> bool:
        return bool(np.all(self.adjacency >= 0.0))

    @classmethod
    def empty(cls, N: int) -> "WeightedDigraph":
        return cls(np.zeros((N, N)))


def degree_matrix(g: WeightedDigraph) -> np.ndarray:
    return np.diag(g.A.sum(axis=1))


def laplacian(g: WeightedDigraph) -> np.ndarray:
    return degree_matrix(g) - g.A


def symmetrized_laplacian(L: np.ndarray) -> np.ndarray:
    L = np.asarray(L, dtype=float)
    # L[i,j] + L[j,i] is bitwise symmetric, so the result is exactly symmetric
    return (L + L.T) / 2.0


def is_balanced(g: WeightedDigraph, tol: float = BALANCE_TOL) -> bool:
    if tol < 0:
        raise InvalidInputError("Balance tolerance must be nonnegative")
    row_sums = g.A.sum(axis=1)
    col_sums = g.A.sum(axis=0)
    return bool(np.max(np.abs(row_sums - col_sums)) <= tol)


def to_networkx(g: WeightedDigraph) -> nx.DiGraph:
    """Directed graph with an edge j -> i for every a_ij != 0"""
    graph = nx.DiGraph()
    graph.add_nodes_from(range(g.N))
    rows, cols = np.nonzero(g.A)
    graph.add_weighted_edges_from((int(j), int(i), float(g.A[i, j])) for i, j in zip(rows, cols))
    return graph


def has_spanning_tree(g: WeightedDigraph) -> bool:
    """True iff some root reaches every node along edges j -> i with a_ij > 0"""
    if not g.is_nonnegative():
        raise InvalidInputError("Spanning-tree check requires a nonnegative adjacency")
    if g.N == 1:
        return True
    # A root exists iff the condensation has exactly one source component
    condensation = nx.condensation(to_networkx(g))
    sources = [c for c in condensation.nodes if condensation.in_degree(c) == 0]
    return len(sources) == 1


@dataclass(frozen=True)
class DelayRealization:
    """Realized delays lambda_ji(k), entry (j, i)"""
    lam: np.ndarray
    d: int

    def __post_init__(self):
        lam = np.asarray(self.lam)
        if lam.ndim != 2 or lam.shape[0] != lam.shape[1]:
            raise InvalidInputError(f"Delay matrix must be square, got shape {lam.shape}")
        if not np.issubdtype(lam.dtype, np.integer):
            if not np.all(lam == np.round(lam)):
                raise InvalidInputError("Delays must be integers")
            lam = lam.astype(np.int64)
        if self.d < 0:
            raise InvalidInputError("Maximum delay d must be nonnegative")
        if np.any(np.diag(lam) != 0):
            raise InvalidInputError("Self-delays must be zero")
        if np.any(lam < 0) or np.any(lam > self.d):
            raise InvalidInputError(f"Delays must lie in 0..{self.d}")
        object.__setattr__(self, "lam", _frozen(lam.astype(np.int64)))

    @property
    def N(self) -> int:
        return self.lam.shape[0]

    @classmethod
    def zeros(cls, N: int, d: int) -> "DelayRealization":
        return cls(np.zeros((N, N), dtype=np.int64), d)


# Optional hooks on a delay model
ProbabilitySchedule = Callable[[int], np.ndarray]
DelayCoupler = Callable[["DelayModel", np.random.Generator, int], np.ndarray]


def _validate_probabilities(p: np.ndarray, N: int, d: int) -> np.ndarray:
    p = np.asarray(p, dtype=float)
    if p.shape != (N, N, d + 1):
        raise InvalidInputError(f"Delay probabilities must have shape {(N, N, d + 1)}, got {p.shape}")
    if np.any(p < 0.0) or not np.all(np.isfinite(p)):
        raise InvalidInputError("Delay probabilities must be finite and nonnegative")
    if np.max(np.abs(p.sum(axis=2) - 1.0)) > PROBABILITY_TOL:
        raise InvalidInputError("Each delay distribution must sum to 1")
    diagonal = p[np.arange(N), np.arange(N)]
    if np.any(diagonal[:, 0] != 1.0):
        raise InvalidInputError("Self-delay must be degenerate at zero (p_ii,0 = 1)")
    return p


@dataclass(frozen=True)
class DelayModel:
    """
    Delay distributions p_{ji,q}: probabilities[j, i, q] = P{lambda_ji = q}

    `schedule` makes the distributions depend on k; `coupler` replaces the
    independent per-link sampling with a user-supplied joint draw.
    """
    N: int
    d: int
    probabilities: np.ndarray
    schedule: Optional[ProbabilitySchedule] = field(default=None, compare=False)
    coupler: Optional[DelayCoupler] = field(default=None, compare=False)

    def __post_init__(self):
        if self.N < 1:
            raise InvalidInputError("Node count must be positive")
        if self.d < 0:
            raise InvalidInputError("Maximum delay d must be nonnegative")
        object.__setattr__(self, "probabilities",
                           _frozen(_validate_probabilities(self.probabilities, self.N, self.d)))

    def probabilities_at(self, k: int) -> np.ndarray:
        if self.schedule is None:
            return self.probabilities
        return _validate_probabilities(self.schedule(k), self.N, self.d)

    @property
    def delay_free(self) -> bool:
        if self.d == 0:
            return True
        return self.schedule is None and self.coupler is None and bool(np.all(self.probabilities[..., 0] == 1.0))

    @classmethod
    def none(cls, N: int, d: int = 0) -> "DelayModel":
        p = np.zeros((N, N, d + 1))
        p[..., 0] = 1.0
        return cls(N, d, p)

    @classmethod
    def uniform(cls, N: int, d: int) -> "DelayModel":
        """Uniform delay on {0..d} for every off-diagonal link"""
        p = np.full((N, N, d + 1), 1.0 / (d + 1))
        idx = np.arange(N)
        p[idx, idx] = 0.0
        p[idx, idx, 0] = 1.0
        return cls(N, d, p)


def delay_matrices(r: DelayRealization) -> List[np.ndarray]:
    """I(k,q), q = 0..d: entry (j,i) is 1 iff lambda_ji(k) = q"""
    return [(r.lam == q).astype(np.int64) for q in range(r.d + 1)]


def masked_adjacency(g: WeightedDigraph, iq: np.ndarray, n: int) -> np.ndarray:
    """(A o iq) kron I_n"""
    iq = np.asarray(iq)
    if iq.shape != g.A.shape:
        raise InvalidInputError(f"Mask shape {iq.shape} does not match adjacency {g.A.shape}")
    if not np.all((iq == 0) | (iq == 1)):
        raise InvalidInputError("Mask entries must be 0 or 1")
    if n < 1:
        raise InvalidInputError("Parameter dimension n must be positive")
    return np.kron(g.A * iq, np.eye(n))


def delayed_adjacency(g: WeightedDigraph, r: DelayRealization, n: int) -> List[np.ndarray]:
    """
    Abar(k,q), q = 0..d, oriented for the stacked dynamics

    Row i of Abar(k,q) carries a_ij exactly when lambda_ji(k) = q, so the
    delay matrices enter transposed.
    """
    if r.N != g.N:
        raise InvalidInputError(f"Delay realization has N={r.N}, graph has N={g.N}")
    return [masked_adjacency(g, iq.T, n) for iq in delay_matrices(r)]
