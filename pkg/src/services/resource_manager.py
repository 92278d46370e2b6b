"""
Resource Manager for replicate workers
Caps the worker pool at the machine's CPU count and keeps retained trajectories within memory
"""
from dataclasses import dataclass
from typing import Optional

import psutil

from ..config import settings
from ..utils.logger import get_logger

BYTES_PER_FLOAT = 8
MB = 1024 * 1024


@dataclass
class ReplicateFootprint:
    """Per-replicate memory estimate used for planning"""
    horizon: int
    N: int
    n: int
    retain_states: bool

    @property
    def metrics_mb(self) -> float:
        # squared errors per node, network error norm, path max error
        return (self.horizon + 1) * (self.N + 2) * BYTES_PER_FLOAT / MB

    @property
    def states_mb(self) -> float:
        if not self.retain_states:
            return 0.0
        # x(k) trajectory plus the delay matrices of the draw log
        return (self.horizon + 1) * self.N * (self.n + self.N) * BYTES_PER_FLOAT / MB

    @property
    def total_mb(self) -> float:
        return self.metrics_mb + self.states_mb


@dataclass
class ResourcePlan:
    workers: int
    retain_states: bool
    estimated_mb: float
    available_mb: float
    reason: str = ""


class ResourceManager:
    """
    Decides how many worker processes a run gets and whether per-replicate
    state trajectories may be kept in memory
    """

    def __init__(self, memory_threshold: float = 0.85):
        self.logger = get_logger("resource_manager")
        self.memory_threshold = memory_threshold

    def cpu_limit(self) -> int:
        return psutil.cpu_count(logical=True) or 1

    def available_memory_mb(self) -> float:
        return psutil.virtual_memory().available / MB

    def cap_workers(self, requested: Optional[int] = None) -> int:
        requested = settings.max_workers if requested is None else requested
        workers = max(1, min(int(requested), self.cpu_limit()))
        if workers < requested:
            self.logger.warning(f"Requested {requested} workers, capped at {workers} (CPU count)")
        return workers

    def plan(self, replicates: int, footprint: ReplicateFootprint,
             requested_workers: Optional[int] = None) -> ResourcePlan:
        """
        Size the pool and decide on state retention for a run

        Args:
            replicates: Number of replicates R
            footprint: Memory estimate of one replicate record
            requested_workers: Override for settings.max_workers

        Returns:
            ResourcePlan with the worker count and retention decision
        """
        workers = min(self.cap_workers(requested_workers), replicates)
        available = self.available_memory_mb()
        budget = available * self.memory_threshold

        retain = footprint.retain_states
        estimated = footprint.total_mb * replicates
        reason = ""
        if retain and estimated > budget:
            retain = False
            estimated = footprint.metrics_mb * replicates
            reason = (f"Retained trajectories need {footprint.total_mb * replicates:.1f}MB, "
                      f"over {self.memory_threshold:.0%} of {available:.1f}MB available; retention disabled")
            self.logger.warning(reason)

        self.logger.debug(f"Resource plan: workers={workers}, retain={retain}, estimated={estimated:.1f}MB")
        return ResourcePlan(workers=workers, retain_states=retain, estimated_mb=estimated,
                            available_mb=available, reason=reason)


# Global resource manager instance
_resource_manager: Optional[ResourceManager] = None


def get_resource_manager() -> ResourceManager:
    """Get global resource manager instance"""
    global _resource_manager
    if _resource_manager is None:
        _resource_manager = ResourceManager()
    return _resource_manager
