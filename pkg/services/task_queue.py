"""
Thread pool for independent chains, patches and moment shards
"""
import logging
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

import sys
from pathlib import Path
sys.path.append(str(Path(__file__).parent.parent))

from config import settings

logger = logging.getLogger(__name__)

T = TypeVar("T")
R = TypeVar("R")


class TaskQueue:
    """Fan independent tasks over worker threads.

    The numba kernels release the GIL, so threads give real parallelism.
    Results always come back in submission order, which keeps every merge
    independent of the thread count.
    """

    def __init__(self, threads: Optional[int] = None):
        self.threads = threads or settings.threads
        self._executor = None

    @property
    def executor(self) -> ThreadPoolExecutor:
        """Lazy initialization of the pool"""
        if self._executor is None:
            self._executor = ThreadPoolExecutor(max_workers=self.threads)
        return self._executor

    def map(self, fn: Callable[[T], R], items: Iterable[T]) -> List[R]:
        """Apply fn to every item, returning results in input order"""
        items = list(items)
        if self.threads == 1 or len(items) <= 1:
            return [fn(item) for item in items]
        try:
            return list(self.executor.map(fn, items))
        except Exception as e:
            logger.error(f"Task failed in worker pool: {e}")
            raise

    def close(self) -> None:
        if self._executor is not None:
            self._executor.shutdown(wait=True)
            self._executor = None

    def __enter__(self) -> "TaskQueue":
        return self

    def __exit__(self, *exc) -> None:
        self.close()
