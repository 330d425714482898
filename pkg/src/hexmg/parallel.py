"""Element-chunked execution.

Work is always split into chunks of a fixed number of elements, independent of
the thread count, and results are combined in chunk order. A given chunk is
therefore computed with identical array shapes regardless of how many threads
run, which keeps operator output bit-identical across thread counts.
"""

import os
from concurrent.futures import ThreadPoolExecutor
from contextlib import contextmanager

CHUNK_ELEMENTS = 64

_threads = 1
_pool = None


def get_num_threads():
    return _threads


def set_num_threads(n):
    global _threads, _pool
    n = max(1, int(n))
    if n != _threads and _pool is not None:
        _pool.shutdown()
        _pool = None
    _threads = n


@contextmanager
def num_threads(n):
    old = _threads
    set_num_threads(n)
    try:
        yield
    finally:
        set_num_threads(old)


def chunks(n_elements, size=CHUNK_ELEMENTS):
    return [slice(s, min(s + size, n_elements)) for s in range(0, n_elements, size)]


def map_chunks(fn, n_elements, size=CHUNK_ELEMENTS):
    """Evaluate ``fn(slice)`` over element chunks, results in chunk order."""
    global _pool
    parts = chunks(n_elements, size)
    if _threads == 1 or len(parts) == 1:
        return [fn(s) for s in parts]
    if _pool is None:
        _pool = ThreadPoolExecutor(max_workers=_threads)
    return list(_pool.map(fn, parts))


def limit_blas_threads(n=1):
    """Pin BLAS/OpenMP pools, used by strict deterministic runs."""
    try:
        from threadpoolctl import threadpool_limits
    except ImportError:  # pragma: no cover
        os.environ.setdefault("OMP_NUM_THREADS", str(n))
        return None
    return threadpool_limits(limits=n)
