"""
Equivalent delay-free system of the delayed error recursion

    r(k+1) = F(k) r(k) + g(k)
    g(k)   = sum_{q=1}^d C_q(k) g(k-q) + a(k) H^T(k) v(k)

with F(k) = I - G(k) and F(k) = I for -d <= k <= -1.
"""
from collections import deque
from dataclasses import dataclass
from typing import Callable, Deque, Dict, List, Mapping, Optional, Sequence, Union

import numpy as np
from scipy.linalg import lu_factor, lu_solve

from ..exceptions import ConsistencyError, InvalidInputError, SingularTransitionError
from ..schemas.reports import InverseCertificate
from ..utils.logger import get_logger
from .estimator import GainSchedule
from .graph import DelayRealization, degree_matrix, delayed_adjacency
from .processes import JointState

logger = get_logger("auxiliary")

RELATION_TOL = 1e-10
LEMMA_MARGIN = 1e-9
# Condition numbers above this are logged as warnings
COND_WARN = 1e8


def phi_product(seq: Union[Mapping[int, np.ndarray], Callable[[int], np.ndarray]],
                j: int, i: int, dim: int) -> np.ndarray:
    """Phi_Z(j, i) = Z(j) Z(j-1) ... Z(i), the identity when j < i"""
    if j < i:
        return np.eye(dim)
    lookup = seq if callable(seq) else seq.__getitem__
    out = np.eye(dim)
    for idx in range(j, i - 1, -1):
        try:
            Z = lookup(idx)
        except (KeyError, IndexError):
            raise InvalidInputError(f"Phi({j}, {i}): no matrix stored for index {idx}")
        out = out @ Z
    return out


@dataclass
class StepRecord:
    """What the g-recursion needs from step k"""
    F: np.ndarray
    C: List[np.ndarray]
    Ht: np.ndarray


def certify_inverse_bound(F: np.ndarray, kappa: float, k: int = 0) -> InverseCertificate:
    """||F^-1||_2 from singular values, against (1 - kappa)^-1"""
    if not 0.0 < kappa < 1.0:
        raise InvalidInputError(f"kappa must lie in (0, 1), got {kappa}")
    s = np.linalg.svd(F, compute_uv=False)
    bound = 1.0 / (1.0 - kappa)
    invertible = bool(s[-1] > np.finfo(float).eps * max(s[0], 1.0) * F.shape[0])
    inv_norm = float(1.0 / s[-1]) if invertible else float("inf")
    return InverseCertificate(
        k=k,
        invertible=invertible,
        inv_norm=inv_norm,
        bound=bound,
        holds=invertible and inv_norm <= bound + LEMMA_MARGIN,
    )


class AuxiliarySystem:
    """
    Rolling F(k), C_1(k)..C_d(k) and G(k).

    C_i(k) = -b(k) sum_{q=i}^d Abar(k,q) [Phi_F(k-i, k-q)]^-1, which solves
    every relation of the triangular system; the relations are re-checked
    after each step.
    """

    def __init__(self, N: int, n: int, d: int, kappa: Optional[float] = None, record: bool = False):
        if N < 1 or n < 1 or d < 0:
            raise InvalidInputError("AuxiliarySystem needs N >= 1, n >= 1, d >= 0")
        self.N = N
        self.n = n
        self.d = d
        self.dim = N * n
        self.kappa = kappa
        self.k = 0
        eye = np.eye(self.dim)
        # F(k-1), F(k-2), ..., F(k-d) and their inverses
        self.F_hist: Deque[np.ndarray] = deque((eye for _ in range(d)), maxlen=max(d, 1))
        self.F_inv_hist: Deque[np.ndarray] = deque((eye for _ in range(d)), maxlen=max(d, 1))
        self.F: Optional[np.ndarray] = None
        self.G: Optional[np.ndarray] = None
        self.C: List[np.ndarray] = [np.zeros((self.dim, self.dim)) for _ in range(d)]
        self.abar: List[np.ndarray] = []
        self.phi_inverses: List[np.ndarray] = [eye]
        self.inv_norm: Optional[float] = None
        self.record = record
        self.records: Dict[int, StepRecord] = {}

    def _chain_inverses(self, start: int) -> List[np.ndarray]:
        """[Phi_F(k-start, k-q)]^-1 for q = start..d"""
        chain = []
        inv = np.eye(self.dim)
        for q in range(start, self.d + 1):
            inv = self.F_inv_hist[q - 1] @ inv
            chain.append(inv)
        return chain

    def advance(self, joint: JointState, delays: DelayRealization, a: float, b: float) -> "AuxiliarySystem":
        if joint.N != self.N or joint.n != self.n:
            raise InvalidInputError(f"State has N={joint.N}, n={joint.n}; system has N={self.N}, n={self.n}")
        if delays.d > self.d:
            raise InvalidInputError(f"Delays up to {delays.d} exceed the system's d={self.d}")

        abar = delayed_adjacency(joint.graph, delays, self.n)
        abar += [np.zeros((self.dim, self.dim))] * (self.d - delays.d)
        D = np.kron(degree_matrix(joint.graph), np.eye(self.n))
        base = np.eye(self.dim) - b * D - a * joint.gramian

        # Phi_F(k-1, k-q)^-1, q = 0..d
        phi_inverses = [np.eye(self.dim)] + self._chain_inverses(1)
        C = []
        for i in range(1, self.d + 1):
            chain = self._chain_inverses(i)
            C.append(-b * sum(abar[q] @ chain[q - i] for q in range(i, self.d + 1)))

        G = b * D + a * joint.gramian - b * sum(abar[q] @ phi_inverses[q] for q in range(self.d + 1))
        F = np.eye(self.dim) - G

        s = np.linalg.svd(F, compute_uv=False)
        if s[-1] <= np.finfo(float).eps * max(s[0], 1.0) * self.dim:
            raise SingularTransitionError(self.k, float(np.linalg.norm(G, 2)))
        cond = float(s[0] / s[-1])
        if cond > COND_WARN:
            logger.warning(f"F({self.k}) is ill-conditioned (cond={cond:.3e})")
        else:
            logger.debug(f"F({self.k}) cond={cond:.3e}")
        F_inv = lu_solve(lu_factor(F), np.eye(self.dim))

        self._check_relations(base, abar, F, C, b)

        self.F, self.G, self.C = F, G, C
        self.abar = abar
        self.phi_inverses = phi_inverses
        self.inv_norm = float(1.0 / s[-1])
        if self.record:
            self.records[self.k] = StepRecord(F=F, C=C, Ht=joint.block_observation.T)
        if self.d > 0:
            self.F_hist.appendleft(F)
            self.F_inv_hist.appendleft(F_inv)
        self.k += 1
        return self

    def _check_relations(self, base: np.ndarray, abar: List[np.ndarray], F: np.ndarray,
                         C: List[np.ndarray], b: float) -> None:
        d = self.d
        scale = max(1.0, float(np.max(np.abs(base))))
        if d == 0:
            residual = np.max(np.abs(F - (base + b * abar[0])))
            if residual > RELATION_TOL * scale:
                raise ConsistencyError("F(k) = delay-free transition", float(residual), RELATION_TOL * scale)
            return
        residuals = [np.max(np.abs(F + C[0] - (base + b * abar[0])))]
        for i in range(1, d):
            residuals.append(np.max(np.abs(C[i - 1] @ self.F_hist[i - 1] - C[i] + b * abar[i])))
        residuals.append(np.max(np.abs(C[d - 1] @ self.F_hist[d - 1] + b * abar[d])))
        worst = float(max(residuals))
        if worst > RELATION_TOL * scale:
            raise ConsistencyError(f"triangular relations at k={self.k}", worst, RELATION_TOL * scale)

    def lemma1_certify(self, k: Optional[int] = None) -> InverseCertificate:
        """Certify ||F^-1(k)|| <= (1 - kappa)^-1 for the latest F or a recorded one"""
        if self.kappa is None:
            raise InvalidInputError("No kappa attached to the auxiliary system")
        if k is None or k == self.k - 1:
            if self.F is None:
                raise InvalidInputError("No F(k) computed yet")
            return certify_inverse_bound(self.F, self.kappa, self.k - 1)
        if k not in self.records:
            raise InvalidInputError(f"F({k}) was not recorded")
        return certify_inverse_bound(self.records[k].F, self.kappa, k)

    def copy(self) -> "AuxiliarySystem":
        twin = AuxiliarySystem(self.N, self.n, self.d, self.kappa, record=False)
        twin.k = self.k
        twin.F_hist = deque(self.F_hist, maxlen=self.F_hist.maxlen)
        twin.F_inv_hist = deque(self.F_inv_hist, maxlen=self.F_inv_hist.maxlen)
        twin.F, twin.G, twin.C = self.F, self.G, list(self.C)
        twin.abar = list(self.abar)
        twin.phi_inverses = list(self.phi_inverses)
        twin.inv_norm = self.inv_norm
        return twin


def lemma1_certify(sys: AuxiliarySystem, k: Optional[int] = None) -> InverseCertificate:
    return sys.lemma1_certify(k)


def g_residual(e_traj: Sequence[np.ndarray], v_traj: Sequence[np.ndarray], sys: AuxiliarySystem,
               gains: GainSchedule, k: int) -> float:
    """
    ||g(k) - sum_q C_q(k) g(k-q) - a(k) H^T(k) v(k)|| with g(j) := e(j+1) - F(j) e(j).

    e_traj[j] is e(j) for j >= 0; earlier errors repeat e(0) and F(j) = I there,
    so g(j) = 0 for j < 0.
    """
    if not sys.records:
        raise InvalidInputError("g_residual needs an AuxiliarySystem built with record=True")
    if k < 0 or k + 1 >= len(e_traj) or k >= len(v_traj):
        raise InvalidInputError(f"Insufficient trajectory for k={k}")

    def g(j: int) -> np.ndarray:
        if j < 0:
            return np.zeros(sys.dim)
        if j not in sys.records:
            raise InvalidInputError(f"Step {j} was not recorded")
        return e_traj[j + 1] - sys.records[j].F @ e_traj[j]

    record = sys.records[k] if k in sys.records else None
    if record is None:
        raise InvalidInputError(f"Step {k} was not recorded")
    predicted = gains.a(k) * (record.Ht @ v_traj[k])
    for q in range(1, sys.d + 1):
        predicted = predicted + record.C[q - 1] @ g(k - q)
    return float(np.linalg.norm(g(k) - predicted))
