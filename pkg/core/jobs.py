"""Thread-pool execution of independent runs (seeds, grid cells)."""

import logging
import sys
import threading
from concurrent.futures import ThreadPoolExecutor
from typing import Callable, Iterable, List, Optional, TypeVar

from tqdm import tqdm

from .errors import UsageError

log = logging.getLogger("Jobs")

T = TypeVar("T")
R = TypeVar("R")


def run_jobs(
    fn: Callable[[T], R],
    items: Iterable[T],
    jobs: int = 1,
    desc: Optional[str] = None,
) -> List[R]:
    """
    Apply ``fn`` to every item, using up to ``jobs`` worker threads.

    Results come back in submission order whatever the completion order, so
    the output does not depend on ``jobs``. The first failing item (in
    submission order) re-raises its exception.

    Args:
        fn (Callable): Pure function of one item; it must not share mutable state.
        items (Iterable): Work items.
        jobs (int): Worker count; 1 runs inline.
        desc (Optional[str]): Progress bar label (shown only on a terminal).

    Returns:
        List: ``[fn(item) for item in items]``.
    """
    if jobs < 1:
        raise UsageError(f"--jobs must be >= 1, got {jobs}")
    items = list(items)

    with tqdm(total=len(items), desc=desc, disable=not sys.stderr.isatty(), leave=False) as progress:
        if jobs == 1 or len(items) <= 1:
            results = []
            for item in items:
                results.append(fn(item))
                progress.update(1)
            return results

        lock = threading.Lock()

        def tick(_future):
            with lock:
                progress.update(1)

        log.debug("running %d jobs on %d threads", len(items), jobs)
        with ThreadPoolExecutor(max_workers=jobs) as pool:
            futures = [pool.submit(fn, item) for item in items]
            for future in futures:
                future.add_done_callback(tick)
            return [future.result() for future in futures]
