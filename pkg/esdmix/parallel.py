from contextlib import contextmanager
from typing import Callable, Iterable, Iterator, List
import logging
import os

logger = logging.getLogger(__name__)

Mapper = Callable[[Callable, Iterable], List]


def available_workers() -> int:
    """Number of CPUs this process may run on"""
    try:
        return len(os.sched_getaffinity(0))
    except AttributeError:
        return os.cpu_count() or 1


def _serial_map(func: Callable, items: Iterable) -> List:
    return [func(item) for item in items]


@contextmanager
def worker_map(workers: int = 1, chunksize: int = 8) -> Iterator[Mapper]:
    """
    Yield an order-preserving map over a process pool

    Tasks must be picklable (top-level functions or functools.partial of them).
    With a single worker, or when the pool cannot be created, the map runs serially.

    Args:
        workers (int): Number of worker processes; 0 or less uses every available CPU
        chunksize (int): Tasks sent to a worker at once

    Yields:
        Mapper: Callable (func, items) -> list of results in input order
    """
    if workers <= 0:
        workers = available_workers()
    if workers == 1:
        yield _serial_map
        return

    try:
        from multiprocessing import Pool
        pool = Pool(workers)
        logger.info(f"Created a pool of {workers} workers")
    except (OSError, ValueError, ImportError) as e:
        logger.warning(f"Failed to create a pool of {workers} workers: {str(e)}; running serially")
        yield _serial_map
        return

    try:
        yield lambda func, items: pool.map(func, list(items), chunksize=chunksize)
    finally:
        pool.close()
        pool.join()
