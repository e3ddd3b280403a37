"""Ordered fan-out over independent realizations.

Each realization owns the RNG stream (master_seed, index); the caller reduces
the returned list, which is always in realization-index order, so results are
identical for any worker count.
"""

from concurrent.futures import ProcessPoolExecutor
from functools import partial


def map_indexed(fn, n, workers, args=()):
    """Return [fn(0, *args), ..., fn(n-1, *args)], optionally on a process pool.

    fn and args must be picklable when workers > 1.
    """
    if workers is None or workers <= 1 or n <= 1:
        return [fn(i, *args) for i in range(n)]
    with ProcessPoolExecutor(max_workers=workers) as pool:
        results = list(pool.map(partial(_apply, fn, args), range(n),
                                chunksize=max(1, n // (4 * workers))))
    return results


def _apply(fn, args, i):
    return fn(i, *args)
