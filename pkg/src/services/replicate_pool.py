"""
Process pool for independent Monte Carlo replicates
"""
from concurrent.futures import ProcessPoolExecutor
from typing import Callable, Iterable, Iterator, Optional, TypeVar

from ..exceptions import ReplicateFailedError
from ..utils.logger import get_logger
from .resource_manager import get_resource_manager

T = TypeVar("T")


def _guarded(task: Callable[[int], T], master_seed: int, replicate: int) -> T:
    try:
        return task(replicate)
    except ReplicateFailedError:
        raise
    except Exception as e:
        raise ReplicateFailedError(replicate, master_seed, e) from e


class ReplicatePool:
    """Runs replicate tasks on worker processes and hands results back in replicate-index order"""

    def __init__(self, max_workers: Optional[int] = None):
        self.logger = get_logger("replicate_pool")
        self.max_workers = get_resource_manager().cap_workers(max_workers)

    def map(self, task: Callable[[int], T], replicates: Iterable[int], master_seed: int) -> Iterator[T]:
        """
        Evaluate task(r) for every replicate index r

        Args:
            task: Picklable callable taking the replicate index
            replicates: Replicate indices, in the order results are wanted
            master_seed: Reported with the failing index when a task raises

        Returns:
            Iterator over results in the order of `replicates`; the first
            failure aborts the run with ReplicateFailedError
        """
        replicates = list(replicates)
        workers = min(self.max_workers, max(1, len(replicates)))
        self.logger.info(f"Running {len(replicates)} replicates on {workers} worker(s)")

        if workers == 1:
            for r in replicates:
                yield _guarded(task, master_seed, r)
            return

        with ProcessPoolExecutor(max_workers=workers) as executor:
            futures = [executor.submit(_guarded, task, master_seed, r) for r in replicates]
            try:
                for future in futures:
                    yield future.result()
            except ReplicateFailedError as e:
                self.logger.error(f"Aborting run: {e}")
                for pending in futures:
                    pending.cancel()
                raise
