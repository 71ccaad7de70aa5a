import concurrent.futures
import logging
import threading

log = logging.getLogger(__name__)

_thread_count = 1
_local = threading.local()


def set_threads(count):
    """Set how many worker threads grids of independent solves may use.

    The default is 1, which runs everything in the calling thread. Results
    never depend on this number, only the run time does.
    """
    global _thread_count
    if isinstance(count, bool) or not isinstance(count, int):
        raise TypeError("thread count must be an integer, not %r" % (count,))
    if count < 1:
        raise ValueError("thread count must be at least 1, not %d" % count)
    _thread_count = count


def get_threads():
    return _thread_count


def _run_in_worker(func, item):
    _local.in_worker = True
    try:
        return func(item)
    finally:
        _local.in_worker = False


def map_concurrently(func, items):
    """Like ``list(map(func, items))``, but possibly with worker threads.

    Results come back in the order of *items*. If a call raises, the
    exception of the first failing item (in item order) is raised after
    all calls have finished. Calls made from a worker thread run serially,
    so nested grids don't wait for each other in the same pool.
    """
    items = list(items)
    if (_thread_count == 1 or len(items) <= 1
            or getattr(_local, 'in_worker', False)):
        return [func(item) for item in items]

    log.debug("running %d calls with %d threads",
              len(items), min(_thread_count, len(items)))
    workers = min(_thread_count, len(items))
    with concurrent.futures.ThreadPoolExecutor(max_workers=workers) as pool:
        futures = [pool.submit(_run_in_worker, func, item) for item in items]
        concurrent.futures.wait(futures)
    return [future.result() for future in futures]
