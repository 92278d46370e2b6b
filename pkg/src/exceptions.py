"""
Exception hierarchy for the estimation simulator
"""
from typing import Optional


class ConsensusEstimationError(Exception):
    """Base class for all simulator errors"""


class InvalidInputError(ConsensusEstimationError, ValueError):
    """Malformed matrices, dimensions or parameters"""


class NonUniqueStationaryError(ConsensusEstimationError):
    """Transition matrix has more than one stationary distribution"""

    def __init__(self, multiplicity: int):
        self.multiplicity = multiplicity
        super().__init__(
            f"Eigenvalue 1 has a left eigenspace of dimension {multiplicity}; "
            "the chain is reducible and pi is not unique"
        )


class HistoryUnderflowError(ConsensusEstimationError):
    """Delayed read older than the stored history depth"""


class SingularTransitionError(ConsensusEstimationError):
    """F(k) of the auxiliary system is not invertible"""

    def __init__(self, k: int, norm_g: float):
        self.k = k
        self.norm_g = norm_g
        super().__init__(f"F({k}) is singular, ||I - F({k})|| = {norm_g:.6g}")


class ConsistencyError(ConsensusEstimationError):
    """An internal self-check residual exceeded its tolerance"""

    def __init__(self, what: str, residual: float, tolerance: float):
        self.what = what
        self.residual = residual
        self.tolerance = tolerance
        super().__init__(f"{what}: residual {residual:.3e} exceeds {tolerance:.1e}")


class UnreliableEstimateError(ConsensusEstimationError):
    """Too many Monte Carlo samples were rejected"""

    def __init__(self, rejected: int, samples: int):
        self.rejected = rejected
        self.samples = samples
        super().__init__(f"{rejected} of {samples} window samples hit a singular F chain")


class ConfigError(ConsensusEstimationError):
    """Configuration could not be loaded or is inconsistent"""


class ReplicateFailedError(ConsensusEstimationError):
    """A replicate raised; the whole run is aborted"""

    def __init__(self, replicate: int, master_seed: int, cause: Optional[BaseException] = None):
        self.replicate = replicate
        self.master_seed = master_seed
        self.cause = cause
        super().__init__(
            f"Replicate {replicate} (master_seed={master_seed}) failed: {cause}"
        )

    def __reduce__(self):
        # Worker processes send this back through pickle; the cause may not survive the trip
        cause = None if self.cause is None else RuntimeError(f"{type(self.cause).__name__}: {self.cause}")
        return (self.__class__, (self.replicate, self.master_seed, cause))


class ExportError(ConsensusEstimationError):
    """Writing a result file failed"""

    def __init__(self, path: str, cause: BaseException):
        self.path = path
        self.cause = cause
        super().__init__(f"Failed to write {path}: {cause}")
