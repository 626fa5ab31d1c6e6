import os
from concurrent.futures import ThreadPoolExecutor

ENV_VAR = "SDC_FORGE_THREADS"


def thread_count(requested=None) -> int:
    """Worker cap from the argument, else ``SDC_FORGE_THREADS`` (0 = all cores)."""
    if requested is None:
        requested = int(os.environ.get(ENV_VAR, "0") or 0)
    if requested <= 0:
        return os.cpu_count() or 1
    return requested


def ordered_map(fn, items, threads=None):
    """``map`` that may fan out over threads but always yields in input order."""
    n = thread_count(threads)
    if n == 1:
        yield from map(fn, items)
        return
    with ThreadPoolExecutor(max_workers=n) as pool:
        yield from pool.map(fn, items)
