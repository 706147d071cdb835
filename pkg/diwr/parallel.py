"""Thread pool helpers shared by the numerical kernels

Work is split into contiguous chunks, mapped over a thread pool and
returned in chunk order, so reductions performed by the caller happen in
the same order regardless of the number of threads.
"""
import os

from concurrent.futures import ThreadPoolExecutor

import numpy as np

_THREADS = None


def set_threads(threads):
    """Set the number of worker threads used by diwr kernels

    Parameters
    ----------
    threads: int or None
        Number of threads. None resets to the environment default.

    Raises
    ------
    ValueError
        If `threads` is smaller than 1.
    """
    global _THREADS

    if threads is not None and int(threads) < 1:
        raise ValueError('The number of threads must be at least 1, got %s'
                         % threads)
    _THREADS = None if threads is None else int(threads)


def get_threads():
    """Number of worker threads: explicit setting, DIWR_THREADS, CPU count"""
    if _THREADS is not None:
        return _THREADS

    env = os.environ.get('DIWR_THREADS')
    if env:
        try:
            value = int(env)
        except ValueError:
            raise ValueError('DIWR_THREADS must be an integer, got "%s"' % env)
        if value >= 1:
            return value

    return os.cpu_count() or 1


def chunk_bounds(n_items, chunk_size):
    """Split range(n_items) into contiguous (start, stop) pairs"""
    chunk_size = max(1, int(chunk_size))
    return [(start, min(start + chunk_size, n_items))
            for start in range(0, n_items, chunk_size)]


def map_chunks(func, n_items, chunk_size, threads=None):
    """Apply `func(start, stop)` over contiguous chunks of range(n_items)

    Parameters
    ----------
    func: callable
        Called as ``func(start, stop)``; must not mutate shared state.
    n_items: int
        Number of items to split.
    chunk_size: int
        Maximum number of items per chunk.
    threads: int, optional
        Worker count, defaults to `get_threads()`.

    Returns
    -------
    list
        The results of each call, in chunk order.
    """
    bounds = chunk_bounds(n_items, chunk_size)
    threads = get_threads() if threads is None else threads

    if threads == 1 or len(bounds) <= 1:
        return [func(start, stop) for start, stop in bounds]

    with ThreadPoolExecutor(max_workers=threads) as executor:
        return list(executor.map(lambda b: func(*b), bounds))


def concat_chunks(func, n_items, chunk_size, threads=None):
    """Like `map_chunks` but concatenates array results along axis 0"""
    parts = map_chunks(func, n_items, chunk_size, threads)
    if not parts:
        return np.zeros((0,))
    return np.concatenate(parts, axis=0)
